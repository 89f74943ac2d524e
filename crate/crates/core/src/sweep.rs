//! Sweep grids over `L x scheme x boundary_mode x oob_policy x seed` and CSV
//! aggregation of the resulting run directories.
//!
//! Layout under the sweep root:
//!
//! ```text
//! sweep.toml
//! L64_symmetric_closed_clip_x/seed_0/{config.toml, artifacts/, report.json}
//! ...
//! ```
//!
//! Aggregation groups by `(L, scheme, dtype, boundary_mode, oob_policy, backend)`
//! where `backend` is the bench tier (`scalar`, `optimized`), suffixed with
//! `_cold_start` for cold-start reports, or `none` for runs without a bench.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifact_io::load_report;
use crate::bench::BenchReport;
use crate::config::{
    BenchMode, BoundaryMode, OobPolicy, ParamDtype, QuantDtype, Scheme, Tier, ValueRepr,
};
use crate::error::{Error, Result};
use crate::run::{
    run_cell, BenchSection, OobSection, QuantSection, RunConfig, RunReport, REPORT_NAME,
};

pub const SWEEP_CONFIG_NAME: &str = "sweep.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub seeds: Vec<u64>,
    #[serde(rename = "L")]
    pub samples: Vec<usize>,
    pub schemes: Vec<Scheme>,
    pub boundary_modes: Vec<BoundaryMode>,
    pub oob_policies: Vec<OobPolicy>,
    pub value_repr: ValueRepr,
    pub param_dtype: ParamDtype,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    pub layer: usize,
    pub num_samples: usize,
    pub clip: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub bench: BenchSection,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let run = RunConfig::default();
        SweepConfig {
            seeds: (0..5).collect(),
            samples: vec![16, 32, 64, 128],
            schemes: Scheme::ALL.to_vec(),
            boundary_modes: BoundaryMode::ALL.to_vec(),
            oob_policies: OobPolicy::ALL.to_vec(),
            value_repr: run.quant.value_repr,
            param_dtype: run.quant.param_dtype,
            model: None,
            layer: 0,
            num_samples: run.num_samples,
            clip: true,
            threads: None,
            bench: BenchSection::default(),
        }
    }
}

/// One `(configuration, seed)` point of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub name: String,
    pub config: RunConfig,
}

impl SweepCell {
    pub fn dir(&self, root: &Path) -> PathBuf {
        root.join(&self.name)
            .join(format!("seed_{}", self.config.seed))
    }
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn cells(&self) -> Vec<SweepCell> {
        let mut cells = Vec::new();
        for &samples in &self.samples {
            for &scheme in &self.schemes {
                for &boundary_mode in &self.boundary_modes {
                    for &oob_policy in &self.oob_policies {
                        let name = format!("L{samples}_{scheme}_{boundary_mode}_{oob_policy}");
                        for &seed in &self.seeds {
                            let config = RunConfig {
                                seed,
                                model: self.model.clone(),
                                layer: self.layer,
                                num_samples: self.num_samples,
                                clip: self.clip,
                                threads: self.threads,
                                quant: QuantSection {
                                    samples,
                                    scheme,
                                    dtype: Some(scheme.dtype()),
                                    value_repr: self.value_repr,
                                    param_dtype: self.param_dtype,
                                    ..QuantSection::default()
                                },
                                oob: OobSection {
                                    boundary_mode,
                                    oob_policy,
                                },
                                bench: self.bench.clone(),
                            };
                            cells.push(SweepCell {
                                name: name.clone(),
                                config,
                            });
                        }
                    }
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellOutcome {
    Ran,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepSummary {
    pub ran: usize,
    pub skipped: usize,
    /// Directories of cells whose report has `status = "error"`.
    pub failed: Vec<PathBuf>,
}

fn completed(cell: &SweepCell, root: &Path) -> bool {
    match load_report::<RunReport>(cell.dir(root).join(REPORT_NAME)) {
        Ok(r) => r.is_ok() && r.config == cell.config,
        Err(_) => false,
    }
}

/// Run every cell under `root`, skipping cells that already hold a successful
/// report for the same configuration unless `force` is set. A failing cell
/// records an error report and the sweep continues.
pub fn run_sweep(
    cfg: &SweepConfig,
    root: &Path,
    force: bool,
    mut progress: impl FnMut(&SweepCell, CellOutcome),
) -> Result<SweepSummary> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let path = root.join(SWEEP_CONFIG_NAME);
    fs::write(&path, cfg.to_toml_string()?).map_err(|e| Error::io(&path, e))?;
    let mut summary = SweepSummary::default();
    for cell in cfg.cells() {
        if !force && completed(&cell, root) {
            summary.skipped += 1;
            progress(&cell, CellOutcome::Skipped);
            continue;
        }
        let dir = cell.dir(root);
        let report = run_cell(&cell.config, &dir)?;
        let outcome = if report.is_ok() {
            summary.ran += 1;
            CellOutcome::Ran
        } else {
            summary.failed.push(dir);
            CellOutcome::Failed
        };
        progress(&cell, outcome);
    }
    Ok(summary)
}

/// Count, mean, population std, min and max of the present values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Stats {
            n: values.len(),
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// Aggregation key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroupKey {
    pub samples: usize,
    pub scheme: Scheme,
    pub dtype: QuantDtype,
    pub boundary_mode: BoundaryMode,
    pub oob_policy: OobPolicy,
    pub backend: String,
}

pub const KEY_COLUMNS: [&str; 6] = [
    "L",
    "scheme",
    "dtype",
    "boundary_mode",
    "oob_policy",
    "backend",
];

pub const METRICS: [&str; 17] = [
    "mae_inrange",
    "maxabs_inrange",
    "mae_oob",
    "maxabs_oob",
    "mae_common_inrange",
    "maxabs_common_inrange",
    "oob_any_frac",
    "spline_ms",
    "lut_ms",
    "lut_ms_median",
    "lut_ms_per_sample",
    "speedup",
    "q_table_bytes",
    "total_bytes",
    "float_model_bytes",
    "overhead_ratio",
    "q_table_fraction",
];

fn backend(b: Option<&BenchReport>) -> String {
    match b {
        None => "none".into(),
        Some(b) if b.mode == BenchMode::Steady => b.tier.to_string(),
        Some(b) => format!("{}_{}", b.tier, b.mode),
    }
}

fn metric_values(r: &RunReport, b: Option<&BenchReport>) -> [Option<f64>; 17] {
    let e = r.eval.as_ref();
    let ef = |f: fn(&crate::metrics::EvalReport) -> Option<f64>| e.and_then(f);
    let bf = |f: fn(&BenchReport) -> f64| b.map(f);
    [
        ef(|e| e.mae_inrange),
        ef(|e| e.maxabs_inrange),
        ef(|e| e.mae_oob),
        ef(|e| e.maxabs_oob),
        ef(|e| e.mae_common_inrange),
        ef(|e| e.maxabs_common_inrange),
        ef(|e| Some(e.oob_any_frac)),
        bf(|b| b.spline.mean_ms),
        bf(|b| b.lut.mean_ms),
        bf(|b| b.lut.median_ms),
        bf(|b| b.lut.ms_per_sample),
        bf(|b| b.speedup),
        bf(|b| b.memory.q_table_bytes as f64),
        bf(|b| b.memory.total_bytes as f64),
        bf(|b| b.memory.float_model_bytes as f64),
        bf(|b| b.memory.overhead_ratio),
        bf(|b| b.memory.q_table_fraction),
    ]
}

/// Per-group metric statistics; `None` where no report had the metric.
pub type GroupStats = BTreeMap<&'static str, Option<Stats>>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Collected {
    pub reports_ok: usize,
    pub reports_failed: Vec<PathBuf>,
    pub groups: BTreeMap<GroupKey, GroupStats>,
}

fn find_reports(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_reports(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == REPORT_NAME) {
            out.push(p);
        }
    }
    Ok(())
}

/// Scan `root` for run reports and aggregate them.
pub fn aggregate(root: &Path) -> Result<Collected> {
    let mut paths = Vec::new();
    find_reports(root, &mut paths)?;
    let mut values: BTreeMap<GroupKey, Vec<[Option<f64>; 17]>> = BTreeMap::new();
    let mut flavour: Option<(ValueRepr, ParamDtype, PathBuf)> = None;
    let mut out = Collected::default();
    for path in paths {
        let report: RunReport = load_report(&path)?;
        if !report.is_ok() {
            out.reports_failed.push(path);
            continue;
        }
        let q = report.config.quant_config()?;
        match &flavour {
            None => flavour = Some((q.value_repr, q.param_dtype, path.clone())),
            Some((repr, pd, first)) if (*repr, *pd) != (q.value_repr, q.param_dtype) => {
                return Err(Error::InvalidConfig(format!(
                    "{} uses {}/{} but {} uses {}/{}; collect them separately",
                    first.display(),
                    repr,
                    pd,
                    path.display(),
                    q.value_repr,
                    q.param_dtype
                )));
            }
            Some(_) => {}
        }
        out.reports_ok += 1;
        let oob = report.config.oob_config();
        let key = |b: Option<&BenchReport>| GroupKey {
            samples: q.samples,
            scheme: q.scheme,
            dtype: q.dtype,
            boundary_mode: oob.boundary_mode,
            oob_policy: oob.oob_policy,
            backend: backend(b),
        };
        if report.bench.is_empty() {
            values
                .entry(key(None))
                .or_default()
                .push(metric_values(&report, None));
        }
        for b in &report.bench {
            values
                .entry(key(Some(b)))
                .or_default()
                .push(metric_values(&report, Some(b)));
        }
    }
    for (key, rows) in values {
        let stats = METRICS
            .iter()
            .enumerate()
            .map(|(i, &name)| {
                let present: Vec<f64> = rows.iter().filter_map(|r| r[i]).collect();
                (name, Stats::of(&present))
            })
            .collect();
        out.groups.insert(key, stats);
    }
    Ok(out)
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

fn stat(g: &GroupStats, metric: &str, pick: fn(&Stats) -> f64) -> String {
    fmt(g.get(metric).copied().flatten().as_ref().map(pick))
}

fn mean(s: &Stats) -> f64 {
    s.mean
}
fn std(s: &Stats) -> f64 {
    s.std
}
fn min(s: &Stats) -> f64 {
    s.min
}
fn max(s: &Stats) -> f64 {
    s.max
}

fn seeds(g: &GroupStats) -> String {
    g.values()
        .flatten()
        .map(|s| s.n)
        .max()
        .unwrap_or(0)
        .to_string()
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// One representative group per accuracy key (accuracy does not depend on backend).
fn accuracy_groups(
    c: &Collected,
) -> BTreeMap<(usize, Scheme, QuantDtype, BoundaryMode, OobPolicy), &GroupStats> {
    let mut out = BTreeMap::new();
    for (k, g) in &c.groups {
        out.entry((k.samples, k.scheme, k.dtype, k.boundary_mode, k.oob_policy))
            .or_insert(g);
    }
    out
}

fn summary_table(c: &Collected) -> Table {
    let mut header: Vec<&str> = KEY_COLUMNS.to_vec();
    header.push("n");
    let cols: Vec<String> = METRICS
        .iter()
        .flat_map(|m| ["mean", "std", "min", "max"].map(|s| format!("{m}_{s}")))
        .collect();
    let mut t = Table::new(&header);
    t.header.extend(cols);
    for (k, g) in &c.groups {
        let mut row = vec![
            k.samples.to_string(),
            k.scheme.to_string(),
            k.dtype.to_string(),
            k.boundary_mode.to_string(),
            k.oob_policy.to_string(),
            k.backend.clone(),
            seeds(g),
        ];
        for m in METRICS {
            for pick in [mean, std, min, max] {
                row.push(stat(g, m, pick));
            }
        }
        t.rows.push(row);
    }
    t
}

fn is_reference_cell(boundary: BoundaryMode, policy: OobPolicy) -> bool {
    boundary == BoundaryMode::Closed && policy == OobPolicy::ClipX
}

fn accuracy_table(c: &Collected) -> Table {
    let mut t = Table::new(&[
        "L",
        "scheme",
        "dtype",
        "n",
        "mae_inrange_mean",
        "mae_inrange_std",
        "maxabs_inrange_mean",
        "maxabs_inrange_std",
    ]);
    let mut rows: Vec<_> = accuracy_groups(c)
        .into_iter()
        .filter(|((_, _, _, b, p), _)| is_reference_cell(*b, *p))
        .collect();
    rows.sort_by_key(|((l, s, ..), _)| (*s, *l));
    for ((l, s, d, _, _), g) in rows {
        t.rows.push(vec![
            l.to_string(),
            s.to_string(),
            d.to_string(),
            seeds(g),
            stat(g, "mae_inrange", mean),
            stat(g, "mae_inrange", std),
            stat(g, "maxabs_inrange", mean),
            stat(g, "maxabs_inrange", std),
        ]);
    }
    t
}

fn speed_table(c: &Collected, tier: Tier) -> Table {
    let mut t = Table::new(&[
        "L",
        "scheme",
        "n",
        "spline_ms_mean",
        "spline_ms_std",
        "lut_ms_mean",
        "lut_ms_std",
        "speedup_mean",
        "speedup_std",
        "speedup_min",
        "speedup_max",
    ]);
    let mut rows: Vec<_> = c
        .groups
        .iter()
        .filter(|(k, _)| {
            is_reference_cell(k.boundary_mode, k.oob_policy) && k.backend == tier.as_str()
        })
        .collect();
    rows.sort_by_key(|(k, _)| (k.scheme, k.samples));
    for (k, g) in rows {
        t.rows.push(vec![
            k.samples.to_string(),
            k.scheme.to_string(),
            seeds(g),
            stat(g, "spline_ms", mean),
            stat(g, "spline_ms", std),
            stat(g, "lut_ms", mean),
            stat(g, "lut_ms", std),
            stat(g, "speedup", mean),
            stat(g, "speedup", std),
            stat(g, "speedup", min),
            stat(g, "speedup", max),
        ]);
    }
    t
}

fn memory_table(c: &Collected) -> Table {
    let mut t = Table::new(&[
        "L",
        "scheme",
        "dtype",
        "model_bytes",
        "lut_bytes",
        "lut_over_model",
        "q_table_fraction",
    ]);
    let mut seen = BTreeMap::new();
    for (k, g) in &c.groups {
        if is_reference_cell(k.boundary_mode, k.oob_policy) && g["total_bytes"].is_some() {
            seen.entry((k.scheme, k.samples, k.dtype)).or_insert(g);
        }
    }
    for ((s, l, d), g) in seen {
        t.rows.push(vec![
            l.to_string(),
            s.to_string(),
            d.to_string(),
            stat(g, "float_model_bytes", mean),
            stat(g, "total_bytes", mean),
            stat(g, "overhead_ratio", mean),
            stat(g, "q_table_fraction", mean),
        ]);
    }
    t
}

fn oob_table(c: &Collected) -> Table {
    let mut t = Table::new(&[
        "boundary_mode",
        "oob_policy",
        "n",
        "oob_frac_mean",
        "oob_frac_std",
        "mae_oob_mean",
        "mae_oob_std",
        "maxabs_oob_mean",
        "maxabs_oob_std",
        "mae_inrange_mean",
        "mae_inrange_std",
        "mae_common_inrange_mean",
    ]);
    let mut rows: Vec<_> = accuracy_groups(c)
        .into_iter()
        .filter(|((l, s, ..), _)| *l == 64 && *s == Scheme::Symmetric)
        .collect();
    rows.sort_by_key(|((_, _, _, b, p), _)| (*b != BoundaryMode::Closed, *p));
    for ((_, _, _, b, p), g) in rows {
        t.rows.push(vec![
            b.to_string(),
            p.to_string(),
            seeds(g),
            stat(g, "oob_any_frac", mean),
            stat(g, "oob_any_frac", std),
            stat(g, "mae_oob", mean),
            stat(g, "mae_oob", std),
            stat(g, "maxabs_oob", mean),
            stat(g, "maxabs_oob", std),
            stat(g, "mae_inrange", mean),
            stat(g, "mae_inrange", std),
            stat(g, "mae_common_inrange", mean),
        ]);
    }
    t
}

fn scheme_table(c: &Collected) -> Table {
    let mut t = Table::new(&[
        "scheme",
        "oob_policy",
        "n",
        "mae_inrange_mean",
        "mae_inrange_std",
        "maxabs_inrange_mean",
        "maxabs_inrange_std",
        "maxabs_oob_mean",
        "maxabs_oob_std",
    ]);
    let mut rows: Vec<_> = accuracy_groups(c)
        .into_iter()
        .filter(|((l, _, _, b, _), _)| *l == 64 && *b == BoundaryMode::HalfOpen)
        .collect();
    rows.sort_by_key(|((_, s, _, _, p), _)| (*p, *s));
    for ((_, s, _, _, p), g) in rows {
        t.rows.push(vec![
            s.to_string(),
            p.to_string(),
            seeds(g),
            stat(g, "mae_inrange", mean),
            stat(g, "mae_inrange", std),
            stat(g, "maxabs_inrange", mean),
            stat(g, "maxabs_inrange", std),
            stat(g, "maxabs_oob", mean),
            stat(g, "maxabs_oob", std),
        ]);
    }
    t
}

pub const TABLE_FILES: [&str; 7] = [
    "summary.csv",
    "table1_accuracy.csv",
    "table2_speed_scalar.csv",
    "table3_speed_optimized.csv",
    "table4_memory.csv",
    "table5_oob_matrix.csv",
    "table6_sym_vs_asym.csv",
];

/// Aggregate every report under `root` and write the CSV tables to `outdir`.
/// Output depends only on the reports, so repeated calls are idempotent.
pub fn collect_results(root: &Path, outdir: &Path) -> Result<(Collected, Vec<PathBuf>)> {
    let collected = aggregate(root)?;
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let tables = [
        summary_table(&collected),
        accuracy_table(&collected),
        speed_table(&collected, Tier::Scalar),
        speed_table(&collected, Tier::Optimized),
        memory_table(&collected),
        oob_table(&collected),
        scheme_table(&collected),
    ];
    let mut written = Vec::new();
    for (name, table) in TABLE_FILES.iter().zip(&tables) {
        let path = outdir.join(name);
        table.write(&path)?;
        written.push(path);
    }
    Ok((collected, written))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SweepConfig {
        SweepConfig {
            seeds: vec![0, 1],
            samples: vec![16, 32],
            schemes: vec![Scheme::Symmetric],
            boundary_modes: vec![BoundaryMode::Closed],
            oob_policies: vec![OobPolicy::ClipX],
            num_samples: 32,
            bench: BenchSection {
                enabled: false,
                ..BenchSection::default()
            },
            ..SweepConfig::default()
        }
    }

    #[test]
    fn full_grid_cardinality() {
        let cells = SweepConfig::default().cells();
        assert_eq!(cells.len(), 4 * 2 * 2 * 2 * 5);
        let mut dirs: Vec<_> = cells.iter().map(|c| c.dir(Path::new("r"))).collect();
        dirs.sort();
        dirs.dedup();
        assert_eq!(dirs.len(), 160);
        assert_eq!(cells[0].name, "L16_symmetric_half_open_clip_x");
    }

    #[test]
    fn stats_basics() {
        let s = Stats::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!((s.min, s.max, s.n), (1.0, 3.0, 3));
        assert!((s.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(Stats::of(&[0.25; 5]).unwrap().std, 0.0);
        assert_eq!(Stats::of(&[]), None);
    }

    #[test]
    fn sweep_resumes_and_collects() {
        let root = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let s = run_sweep(&cfg, root.path(), false, |_, _| {}).unwrap();
        assert_eq!((s.ran, s.skipped), (4, 0));
        let s = run_sweep(&cfg, root.path(), false, |_, _| {}).unwrap();
        assert_eq!((s.ran, s.skipped), (0, 4));

        let out = root.path().join("tables");
        let (c, files) = collect_results(root.path(), &out).unwrap();
        assert_eq!(c.reports_ok, 4);
        assert_eq!(files.len(), TABLE_FILES.len());
        assert_eq!(c.groups.len(), 2);
        let first = fs::read_to_string(&files[0]).unwrap();
        collect_results(root.path(), &out).unwrap();
        assert_eq!(fs::read_to_string(&files[0]).unwrap(), first);
        assert!(first.starts_with("L,scheme,dtype,boundary_mode,oob_policy,backend,n,"));
        let t1 = fs::read_to_string(out.join("table1_accuracy.csv")).unwrap();
        assert_eq!(t1.lines().count(), 3);
    }
}
