//! Declarative single-run description and the run directory it produces.
//!
//! A run directory holds:
//!
//! ```text
//! config.toml            resolved RunConfig
//! artifacts/layer_000.lut
//! artifacts/manifest.json
//! report.json            RunReport
//! ```

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifact_io::{save_lut_model, save_report};
use crate::bench::{resolve_threads, run_honest_bench, BenchOptions, BenchProtocol, BenchReport};
use crate::compiler::compile_layer_threaded;
use crate::config::{
    BenchMode, BoundaryMode, Interp, OobConfig, OobPolicy, ParamDtype, QuantConfig, QuantDtype,
    Scheme, Tier, ValueRepr,
};
use crate::error::{Error, Result};
use crate::metrics::{eval_accuracy, EvalReport};
use crate::model_gen::{gen_layer_inputs, gen_sanity_layer, CALIBRATION_SAMPLES};
use crate::spline::{load_model, KanLayerSpec};

pub const CONFIG_NAME: &str = "config.toml";
pub const REPORT_NAME: &str = "report.json";
pub const ARTIFACT_DIR: &str = "artifacts";

/// `[quant]` table. `dtype` defaults to the one implied by `scheme`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantSection {
    #[serde(rename = "L", default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtype: Option<QuantDtype>,
    #[serde(default = "default_value_repr")]
    pub value_repr: ValueRepr,
    #[serde(default = "default_interp")]
    pub interp: Interp,
    #[serde(default = "default_param_dtype")]
    pub param_dtype: ParamDtype,
}

fn default_samples() -> usize {
    QuantConfig::default().samples
}
fn default_scheme() -> Scheme {
    QuantConfig::default().scheme
}
fn default_value_repr() -> ValueRepr {
    QuantConfig::default().value_repr
}
fn default_interp() -> Interp {
    QuantConfig::default().interp
}
fn default_param_dtype() -> ParamDtype {
    QuantConfig::default().param_dtype
}

impl Default for QuantSection {
    fn default() -> Self {
        QuantSection::from(QuantConfig::default())
    }
}

impl From<QuantConfig> for QuantSection {
    fn from(c: QuantConfig) -> Self {
        QuantSection {
            samples: c.samples,
            scheme: c.scheme,
            dtype: Some(c.dtype),
            value_repr: c.value_repr,
            interp: c.interp,
            param_dtype: c.param_dtype,
        }
    }
}

impl QuantSection {
    pub fn resolve(&self) -> Result<QuantConfig> {
        let cfg = QuantConfig {
            samples: self.samples,
            scheme: self.scheme,
            dtype: self.dtype.unwrap_or(self.scheme.dtype()),
            value_repr: self.value_repr,
            interp: self.interp,
            param_dtype: self.param_dtype,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OobSection {
    pub boundary_mode: BoundaryMode,
    pub oob_policy: OobPolicy,
}

impl Default for OobSection {
    fn default() -> Self {
        OobSection::from(OobConfig::default())
    }
}

impl From<OobConfig> for OobSection {
    fn from(c: OobConfig) -> Self {
        OobSection {
            boundary_mode: c.boundary_mode,
            oob_policy: c.oob_policy,
        }
    }
}

impl From<OobSection> for OobConfig {
    fn from(s: OobSection) -> Self {
        OobConfig::new(s.boundary_mode, s.oob_policy)
    }
}

/// `[bench]` table. One report is produced per `tiers x modes` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub enabled: bool,
    pub tiers: Vec<Tier>,
    pub modes: Vec<BenchMode>,
    pub warmup_iters: usize,
    pub timed_iters: usize,
    pub batch: usize,
    pub min_iter_ns: u64,
}

impl Default for BenchSection {
    fn default() -> Self {
        let p = BenchProtocol::default();
        BenchSection {
            enabled: true,
            tiers: Tier::ALL.to_vec(),
            modes: vec![BenchMode::Steady],
            warmup_iters: p.warmup_iters,
            timed_iters: p.timed_iters,
            batch: p.batch,
            min_iter_ns: p.min_iter_ns,
        }
    }
}

impl BenchSection {
    pub fn protocol(&self) -> BenchProtocol {
        BenchProtocol {
            warmup_iters: self.warmup_iters,
            timed_iters: self.timed_iters,
            batch: self.batch,
            min_iter_ns: self.min_iter_ns,
        }
    }
}

/// Everything needed to reproduce one run.
///
/// Without `model` the seeded sanity layer is generated from `seed`; the same
/// seed always drives the probe inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Which layer of `model` to compile and measure.
    #[serde(default)]
    pub layer: usize,
    #[serde(default = "default_num_samples")]
    pub num_samples: usize,
    #[serde(default = "default_clip")]
    pub clip: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub quant: QuantSection,
    #[serde(default)]
    pub oob: OobSection,
    #[serde(default)]
    pub bench: BenchSection,
}

fn default_num_samples() -> usize {
    CALIBRATION_SAMPLES
}
fn default_clip() -> bool {
    true
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            model: None,
            layer: 0,
            num_samples: CALIBRATION_SAMPLES,
            clip: true,
            threads: None,
            quant: QuantSection::default(),
            oob: OobSection::default(),
            bench: BenchSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn quant_config(&self) -> Result<QuantConfig> {
        self.quant.resolve()
    }

    pub fn oob_config(&self) -> OobConfig {
        self.oob.into()
    }

    /// The layer this run measures.
    pub fn load_layer(&self) -> Result<KanLayerSpec> {
        match &self.model {
            None => Ok(gen_sanity_layer(self.seed)),
            Some(path) => {
                let mut layers = load_model(path)?;
                let count = layers.len();
                if self.layer >= count {
                    return Err(Error::InvalidConfig(format!(
                        "layer {} requested but {} has {count} layer(s)",
                        self.layer,
                        path.display()
                    )));
                }
                Ok(layers.swap_remove(self.layer))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for ErrorInfo {
    fn from(e: &Error) -> Self {
        ErrorInfo {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub status: RunStatus,
    pub error: Option<ErrorInfo>,
    pub config: RunConfig,
    pub eval: Option<EvalReport>,
    pub bench: Vec<BenchReport>,
}

impl RunReport {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }
}

/// Compile, evaluate and (optionally) benchmark one configuration in memory.
pub fn execute(cfg: &RunConfig) -> Result<(crate::LutLayerArtifact, RunReport)> {
    let quant = cfg.quant_config()?;
    let threads = resolve_threads(cfg.threads)?;
    let layer = cfg.load_layer()?;
    let art = compile_layer_threaded(&layer, &quant, cfg.oob_config(), threads)?;
    let xs = gen_layer_inputs(cfg.seed, cfg.num_samples, &layer, cfg.clip);
    let eval = eval_accuracy(&layer, &art, &xs, cfg.seed)?;

    let mut bench = Vec::new();
    if cfg.bench.enabled {
        let protocol = cfg.bench.protocol();
        let bx = gen_layer_inputs(cfg.seed, protocol.batch, &layer, cfg.clip);
        for &tier in &cfg.bench.tiers {
            for &mode in &cfg.bench.modes {
                let opts = BenchOptions {
                    protocol,
                    tier,
                    mode,
                    threads,
                    seed: cfg.seed,
                };
                bench.push(run_honest_bench(&layer, &art, &bx, &opts)?);
            }
        }
    }
    let report = RunReport {
        status: RunStatus::Ok,
        error: None,
        config: cfg.clone(),
        eval: Some(eval),
        bench,
    };
    Ok((art, report))
}

/// Run one configuration into `dir`. Failures are written to `report.json`
/// with `status = "error"` and returned as a report rather than an `Err`;
/// only failures to write the directory itself are `Err`.
pub fn run_cell(cfg: &RunConfig, dir: &Path) -> Result<RunReport> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    cfg.save(&dir.join(CONFIG_NAME))?;
    let outcome = catch_unwind(AssertUnwindSafe(|| {
        let (art, report) = execute(cfg)?;
        save_lut_model(std::slice::from_ref(&art), dir.join(ARTIFACT_DIR))?;
        Ok(report)
    }))
    .unwrap_or_else(|panic| {
        let msg = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".to_string());
        Err(Error::InvalidConfig(format!("run aborted: {msg}")))
    });
    let report = outcome.unwrap_or_else(|e: Error| RunReport {
        status: RunStatus::Error,
        error: Some(ErrorInfo::from(&e)),
        config: cfg.clone(),
        eval: None,
        bench: Vec::new(),
    });
    save_report(&report, dir.join(REPORT_NAME))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifact_io::{load_lut_model, load_report};

    fn quick() -> RunConfig {
        RunConfig {
            num_samples: 64,
            bench: BenchSection {
                warmup_iters: 1,
                timed_iters: 3,
                batch: 16,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn toml_defaults_and_round_trip() {
        let cfg = RunConfig::from_toml_str("seed = 3\n[quant]\nL = 32\nscheme = \"asymmetric\"\n")
            .unwrap();
        assert_eq!(cfg.seed, 3);
        let q = cfg.quant_config().unwrap();
        assert_eq!((q.samples, q.dtype), (32, QuantDtype::Uint8));
        assert_eq!(cfg.num_samples, CALIBRATION_SAMPLES);
        assert_eq!(cfg.bench.timed_iters, 200);
        let back = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn toml_rejects_unknown_keys_and_values() {
        assert!(matches!(
            RunConfig::from_toml_str("sead = 1"),
            Err(Error::Config(_))
        ));
        let err = RunConfig::from_toml_str("[oob]\nboundary_mode = \"open\"").unwrap_err();
        assert!(err.to_string().contains("open"), "{err}");
        let bad =
            RunConfig::from_toml_str("[quant]\nscheme = \"symmetric\"\ndtype = \"uint8\"").unwrap();
        assert!(matches!(bad.quant_config(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn cell_writes_layout() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_cell(&quick(), dir.path()).unwrap();
        assert!(report.is_ok(), "{:?}", report.error);
        assert_eq!(report.bench.len(), 2);
        assert!(dir.path().join(CONFIG_NAME).is_file());
        let arts = load_lut_model(dir.path().join(ARTIFACT_DIR)).unwrap();
        assert_eq!(arts.len(), 1);
        let back: RunReport = load_report(dir.path().join(REPORT_NAME)).unwrap();
        assert_eq!(back, report);
        assert_eq!(
            RunConfig::load(&dir.path().join(CONFIG_NAME)).unwrap(),
            quick()
        );
    }

    #[test]
    fn failing_cell_records_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick();
        cfg.model = Some(dir.path().join("missing.json"));
        let report = run_cell(&cfg, dir.path()).unwrap();
        assert_eq!(report.status, RunStatus::Error);
        let err = report.error.unwrap();
        assert_eq!(err.kind, "io");
        assert!(err.message.contains("missing.json"));
        assert!(report.eval.is_none());
    }
}
