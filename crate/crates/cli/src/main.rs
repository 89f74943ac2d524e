use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use lutkan::artifact_io::{load_lut_model, save_artifact, save_lut_model};
use lutkan::bench::{resolve_threads, run_honest_bench, BenchOptions};
use lutkan::metrics::eval_accuracy;
use lutkan::model_gen::{gen_layer, gen_layer_inputs};
use lutkan::run::RunConfig;
use lutkan::spline::save_model;
use lutkan::sweep::{collect_results, run_sweep, CellOutcome, SweepConfig};
use lutkan::{
    compile_layer_threaded, BenchMode, BoundaryMode, Interp, KanLayerSpec, KnotGrid,
    LutLayerArtifact, OobPolicy, ParamDtype, QuantDtype, Scheme, Tier, ValueRepr,
};

#[derive(Parser)]
#[command(
    name = "lutkan",
    version,
    about = "Compile B-spline KAN layers into quantized lookup tables, then evaluate and benchmark them"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a seeded synthetic model file (JSON).
    Gen(GenArgs),
    /// Compile every layer of a model into LUT artifacts.
    Compile(CompileArgs),
    /// Measure the accuracy of an artifact against its float layer.
    Eval(EvalArgs),
    /// Time spline and LUT forward passes in the same tier.
    Bench(BenchArgs),
    /// Run a sweep grid into a run directory tree (resumable).
    Sweep(SweepArgs),
    /// Aggregate sweep reports into CSV tables.
    Collect(CollectArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Layer widths, e.g. `10,8` for one 10 -> 8 layer or `10,8,2` for two layers.
    #[arg(long, value_delimiter = ',', default_value = "10,8")]
    dims: Vec<usize>,
    /// Number of uniform knot segments K.
    #[arg(long, default_value_t = 8)]
    segments: usize,
    /// Spline degree p.
    #[arg(long, default_value_t = 3)]
    degree: usize,
    /// Lower end of the knot domain.
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    lo: f64,
    /// Upper end of the knot domain.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    hi: f64,
    /// Output model path.
    #[arg(long)]
    out: PathBuf,
}

/// Run description shared by compile, eval and bench. Flags override `--config`.
#[derive(Args)]
struct RunArgs {
    /// Run config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model file (JSON). Without it the seeded sanity layer is used.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Seed for the generated layer and the probe inputs.
    #[arg(long)]
    seed: Option<u64>,
    /// Layer of the model to evaluate or benchmark.
    #[arg(long)]
    layer: Option<usize>,
    /// Samples per segment.
    #[arg(long = "L")]
    samples: Option<usize>,
    /// What the table stores: phi | spline_component.
    #[arg(long)]
    value_repr: Option<ValueRepr>,
    /// Quantization scheme: symmetric | asymmetric.
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Table dtype: int8 | uint8. Defaults to the scheme's dtype.
    #[arg(long)]
    dtype: Option<QuantDtype>,
    /// Interpolation: linear.
    #[arg(long)]
    interp: Option<Interp>,
    /// Storage of scale and y_min: float32 | float16.
    #[arg(long)]
    param_dtype: Option<ParamDtype>,
    /// Domain membership of x = t_K: half_open | closed.
    #[arg(long)]
    boundary_mode: Option<BoundaryMode>,
    /// Output rule outside the domain: clip_x | zero_spline.
    #[arg(long)]
    oob_policy: Option<OobPolicy>,
    /// Worker threads for compilation (also LUTKAN_NUM_THREADS).
    #[arg(long)]
    threads: Option<usize>,
    /// Number of probe samples used for evaluation.
    #[arg(long)]
    num_samples: Option<usize>,
    /// Do not clamp probe inputs to the knot domain.
    #[arg(long)]
    no_clip: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if self.model.is_some() {
            cfg.model = self.model.clone();
        }
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.layer, self.layer);
        set(&mut cfg.num_samples, self.num_samples);
        set(&mut cfg.quant.samples, self.samples);
        set(&mut cfg.quant.value_repr, self.value_repr);
        set(&mut cfg.quant.interp, self.interp);
        set(&mut cfg.quant.param_dtype, self.param_dtype);
        set(&mut cfg.oob.boundary_mode, self.boundary_mode);
        set(&mut cfg.oob.oob_policy, self.oob_policy);
        if let Some(s) = self.scheme {
            cfg.quant.scheme = s;
            cfg.quant.dtype = None;
        }
        if self.dtype.is_some() {
            cfg.quant.dtype = self.dtype;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        if self.no_clip {
            cfg.clip = false;
        }
        cfg.quant_config()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

#[derive(Args)]
struct CompileArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Output: a `.lut` file for a single layer, otherwise a directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Artifact file or model directory. Compiled from the run flags when absent.
    #[arg(long)]
    artifact: Option<PathBuf>,
    /// Report path. Printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Artifact file or model directory. Compiled from the run flags when absent.
    #[arg(long)]
    artifact: Option<PathBuf>,
    /// Optimization tier shared by both sides: scalar | optimized.
    #[arg(long)]
    tier: Option<Tier>,
    /// steady | cold_start (reload the artifact inside every timed iteration).
    #[arg(long)]
    mode: Option<BenchMode>,
    /// Warmup iterations.
    #[arg(long)]
    warmup: Option<usize>,
    /// Timed iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Rows per forward call.
    #[arg(long)]
    batch: Option<usize>,
    /// Report path. Printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep config file (TOML). Defaults to the full 160-run grid.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root of the run directory tree.
    #[arg(long)]
    root: PathBuf,
    /// Rerun cells that already have a successful report.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct CollectArgs {
    /// Root of the run directory tree.
    #[arg(long)]
    root: PathBuf,
    /// Directory for the CSV tables.
    #[arg(long)]
    outdir: PathBuf,
}

fn emit(value: Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(&value)? + "\n";
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_gen(a: &GenArgs) -> Result<Value> {
    if a.dims.len() < 2 {
        bail!("--dims needs at least two widths");
    }
    let grid = KnotGrid::uniform(a.lo, a.hi, a.segments, a.degree)?;
    let layers: Vec<KanLayerSpec> = a
        .dims
        .windows(2)
        .enumerate()
        .map(|(i, w)| gen_layer(a.seed.wrapping_add(i as u64), w[0], w[1], grid.clone()))
        .collect();
    save_model(&layers, &a.out)?;
    Ok(
        json!({"model": a.out, "layers": layers.len(), "params": layers.iter().map(|l| l.param_count()).sum::<usize>()}),
    )
}

fn load_layers(cfg: &RunConfig) -> Result<Vec<KanLayerSpec>> {
    Ok(match &cfg.model {
        Some(p) => lutkan::spline::load_model(p)?,
        None => vec![cfg.load_layer()?],
    })
}

fn cmd_compile(a: &CompileArgs) -> Result<Value> {
    let cfg = a.run.resolve()?;
    let quant = cfg.quant_config()?;
    let threads = resolve_threads(cfg.threads)?;
    let layers = load_layers(&cfg)?;
    let arts = layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            compile_layer_threaded(l, &quant, cfg.oob_config(), threads)
                .with_context(|| format!("compiling layer {i}"))
        })
        .collect::<Result<Vec<_>>>()?;
    let files = if arts.len() == 1 && a.out.extension().is_some_and(|e| e == "lut") {
        save_artifact(&arts[0], &a.out)?;
        vec![a.out.clone()]
    } else {
        save_lut_model(&arts, &a.out)?
    };
    let mut evals = Vec::new();
    if cfg.num_samples > 0 {
        for (layer, art) in layers.iter().zip(&arts) {
            let xs = gen_layer_inputs(cfg.seed, cfg.num_samples, layer, cfg.clip);
            let r = eval_accuracy(layer, art, &xs, cfg.seed)?;
            evals.push(json!({
                "mae_inrange": r.mae_inrange,
                "maxabs_inrange": r.maxabs_inrange,
                "oob_any_frac": r.oob_any_frac,
            }));
        }
    }
    Ok(json!({"files": files, "quant": quant, "oob": cfg.oob_config(), "eval": evals}))
}

/// The layer under test and its artifact, loaded or compiled.
fn layer_and_artifact(
    cfg: &RunConfig,
    artifact: Option<&Path>,
) -> Result<(KanLayerSpec, LutLayerArtifact)> {
    let layer = cfg.load_layer()?;
    let art = match artifact {
        None => compile_layer_threaded(
            &layer,
            &cfg.quant_config()?,
            cfg.oob_config(),
            resolve_threads(cfg.threads)?,
        )?,
        Some(path) => {
            let mut arts = load_lut_model(path)?;
            let idx = if arts.len() == 1 { 0 } else { cfg.layer };
            if idx >= arts.len() {
                bail!(
                    "{} holds {} layer(s), layer {idx} requested",
                    path.display(),
                    arts.len()
                );
            }
            arts.swap_remove(idx)
        }
    };
    Ok((layer, art))
}

fn cmd_eval(a: &EvalArgs) -> Result<Value> {
    let cfg = a.run.resolve()?;
    let (layer, art) = layer_and_artifact(&cfg, a.artifact.as_deref())?;
    let xs = gen_layer_inputs(cfg.seed, cfg.num_samples, &layer, cfg.clip);
    let report = eval_accuracy(&layer, &art, &xs, cfg.seed)?;
    Ok(serde_json::to_value(&report)?)
}

fn only<T: Copy>(v: &[T]) -> Option<T> {
    match v {
        [x] => Some(*x),
        _ => None,
    }
}

fn cmd_bench(a: &BenchArgs) -> Result<Value> {
    let mut cfg = a.run.resolve()?;
    set(&mut cfg.bench.warmup_iters, a.warmup);
    set(&mut cfg.bench.timed_iters, a.iters);
    set(&mut cfg.bench.batch, a.batch);
    let tier = a.tier.or(only(&cfg.bench.tiers)).unwrap_or(Tier::Optimized);
    let mode = a
        .mode
        .or(only(&cfg.bench.modes))
        .unwrap_or(BenchMode::Steady);
    let (layer, art) = layer_and_artifact(&cfg, a.artifact.as_deref())?;
    let protocol = cfg.bench.protocol();
    let xs = gen_layer_inputs(cfg.seed, protocol.batch, &layer, cfg.clip);
    let opts = BenchOptions {
        protocol,
        tier,
        mode,
        threads: resolve_threads(cfg.threads)?,
        seed: cfg.seed,
    };
    let report = run_honest_bench(&layer, &art, &xs, &opts)?;
    Ok(serde_json::to_value(&report)?)
}

fn cmd_sweep(a: &SweepArgs) -> Result<Value> {
    let cfg = match &a.config {
        Some(p) => SweepConfig::load(p)?,
        None => SweepConfig::default(),
    };
    let total = cfg.cells().len();
    let mut done = 0;
    let summary = run_sweep(&cfg, &a.root, a.force, |cell, outcome| {
        done += 1;
        let tag = match outcome {
            CellOutcome::Ran => "ok",
            CellOutcome::Failed => "FAILED",
            CellOutcome::Skipped => "skip",
        };
        eprintln!(
            "[{done}/{total}] {} seed {} {tag}",
            cell.name, cell.config.seed
        );
    })?;
    let v = json!({
        "root": a.root,
        "cells": total,
        "ran": summary.ran,
        "skipped": summary.skipped,
        "failed": summary.failed,
    });
    if !summary.failed.is_empty() {
        println!("{}", serde_json::to_string_pretty(&v)?);
        bail!(SweepFailures(summary.failed.len()));
    }
    Ok(v)
}

#[derive(Debug)]
struct SweepFailures(usize);

impl std::fmt::Display for SweepFailures {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} sweep cell(s) failed; see their report.json", self.0)
    }
}

impl std::error::Error for SweepFailures {}

fn cmd_collect(a: &CollectArgs) -> Result<Value> {
    let (c, files) = collect_results(&a.root, &a.outdir)?;
    Ok(json!({
        "reports_ok": c.reports_ok,
        "reports_failed": c.reports_failed,
        "groups": c.groups.len(),
        "files": files,
    }))
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<lutkan::Error>() {
            return err.kind();
        }
        if cause.is::<SweepFailures>() {
            return "sweep_failures";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "error"
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Gen(a) => cmd_gen(a).and_then(|v| emit(v, None)),
        Cmd::Compile(a) => cmd_compile(a).and_then(|v| emit(v, None)),
        Cmd::Eval(a) => cmd_eval(a).and_then(|v| emit(v, a.out.as_deref())),
        Cmd::Bench(a) => cmd_bench(a).and_then(|v| emit(v, a.out.as_deref())),
        Cmd::Sweep(a) => cmd_sweep(a).and_then(|v| emit(v, None)),
        Cmd::Collect(a) => cmd_collect(a).and_then(|v| emit(v, None)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = json!({"error": {"kind": error_kind(&e), "message": format!("{e:#}")}});
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
