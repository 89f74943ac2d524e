//! Same-tier timing of spline vs LUT forward passes, and memory accounting.
//!
//! Protocol: `warmup` untimed calls, then `iters` timed iterations on a
//! monotonic clock. If a single call takes less than `min_iter`, each timed
//! iteration runs the call `inner_repeats` times and records the per-call
//! average. Speedup is always `spline_ms / lut_ms` within one tier.
//!
//! In `cold_start` mode the LUT timed region also loads the artifact from
//! disk; the spline side is unchanged.

use std::hint::black_box;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::artifact::LutLayerArtifact;
use crate::artifact_io::{load_artifact, save_artifact};
use crate::batch::Batch;
use crate::config::{BenchMode, OobConfig, QuantConfig, Tier};
use crate::error::{Error, Result};
use crate::spline::KanLayerSpec;

pub const THREADS_ENV: &str = "LUTKAN_NUM_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchProtocol {
    pub warmup_iters: usize,
    pub timed_iters: usize,
    pub batch: usize,
    /// Minimum duration of one timed region, in nanoseconds.
    pub min_iter_ns: u64,
}

impl Default for BenchProtocol {
    fn default() -> Self {
        BenchProtocol {
            warmup_iters: 50,
            timed_iters: 200,
            batch: 1024,
            min_iter_ns: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean_ms: f64,
    /// Population std over per-iteration samples.
    pub std_ms: f64,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub ms_per_sample: f64,
    pub inner_repeats: usize,
}

impl TimingStats {
    fn from_samples(mut ms: Vec<f64>, batch: usize, inner_repeats: usize) -> Self {
        let n = ms.len().max(1) as f64;
        let mean = ms.iter().sum::<f64>() / n;
        let var = ms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        ms.sort_by(f64::total_cmp);
        let median = match ms.len() {
            0 => 0.0,
            len if len % 2 == 1 => ms[len / 2],
            len => 0.5 * (ms[len / 2 - 1] + ms[len / 2]),
        };
        TimingStats {
            mean_ms: mean,
            std_ms: var.sqrt(),
            median_ms: median,
            min_ms: ms.first().copied().unwrap_or(0.0),
            max_ms: ms.last().copied().unwrap_or(0.0),
            ms_per_sample: mean / batch.max(1) as f64,
            inner_repeats,
        }
    }
}

/// Time `f` under `protocol`. `f` must not be optimized away; return its output.
pub fn measure<T>(protocol: &BenchProtocol, mut f: impl FnMut() -> T) -> TimingStats {
    for _ in 0..protocol.warmup_iters {
        black_box(f());
    }
    let min_iter = Duration::from_nanos(protocol.min_iter_ns);
    let mut repeats = 1usize;
    loop {
        let t0 = Instant::now();
        for _ in 0..repeats {
            black_box(f());
        }
        if t0.elapsed() >= min_iter || repeats >= 1 << 20 {
            break;
        }
        repeats *= 2;
    }
    let samples = (0..protocol.timed_iters)
        .map(|_| {
            let t0 = Instant::now();
            for _ in 0..repeats {
                black_box(f());
            }
            t0.elapsed().as_secs_f64() * 1e3 / repeats as f64
        })
        .collect();
    TimingStats::from_samples(samples, protocol.batch, repeats)
}

/// Byte counts of a compiled layer, from shapes and dtypes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryBreakdown {
    pub q_table_bytes: usize,
    pub scale_bytes: usize,
    pub y_min_bytes: usize,
    pub knots_bytes: usize,
    pub edge_scalar_bytes: usize,
    pub total_bytes: usize,
    pub float_model_bytes: usize,
    pub overhead_ratio: f64,
    pub q_table_fraction: f64,
}

pub fn memory_breakdown(artifact: &LutLayerArtifact, layer: &KanLayerSpec) -> MemoryBreakdown {
    let segs = artifact.edge_count() * artifact.segments();
    let param = artifact.param_dtype().size_bytes();
    let q_table_bytes = artifact.q_table().len() * artifact.dtype().size_bytes();
    let scale_bytes = segs * param;
    let y_min_bytes = segs * param;
    let knots_bytes = artifact.knots().len() * 4;
    let edge_scalar_bytes = if artifact.edge_scalars().is_some() {
        3 * artifact.edge_count() * 4
    } else {
        0
    };
    let total_bytes = q_table_bytes + scale_bytes + y_min_bytes + knots_bytes + edge_scalar_bytes;
    let float_model_bytes = 4 * layer.param_count();
    MemoryBreakdown {
        q_table_bytes,
        scale_bytes,
        y_min_bytes,
        knots_bytes,
        edge_scalar_bytes,
        total_bytes,
        float_model_bytes,
        overhead_ratio: total_bytes as f64 / float_model_bytes as f64,
        q_table_fraction: q_table_bytes as f64 / total_bytes as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub seed: u64,
    pub quant: QuantConfig,
    pub oob: OobConfig,
    pub tier: Tier,
    pub mode: BenchMode,
    pub threads: usize,
    pub batch: usize,
    pub warmup_iters: usize,
    pub timed_iters: usize,
    pub spline: TimingStats,
    pub lut: TimingStats,
    pub speedup: f64,
    pub memory: MemoryBreakdown,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub protocol: BenchProtocol,
    pub tier: Tier,
    pub mode: BenchMode,
    pub threads: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            protocol: BenchProtocol::default(),
            tier: Tier::Optimized,
            mode: BenchMode::Steady,
            threads: 1,
            seed: 0,
        }
    }
}

/// Time the spline and LUT forward passes of one layer on the same inputs and tier.
///
/// `xs` must hold exactly `protocol.batch` rows.
pub fn run_honest_bench(
    layer: &KanLayerSpec,
    artifact: &LutLayerArtifact,
    xs: &Batch,
    opts: &BenchOptions,
) -> Result<BenchReport> {
    let p = &opts.protocol;
    if xs.rows() != p.batch {
        return Err(Error::DimensionMismatch {
            expected: p.batch,
            found: xs.rows(),
        });
    }
    if p.timed_iters == 0 {
        return Err(Error::InvalidConfig("timed_iters must be positive".into()));
    }
    let tier = opts.tier;
    // Fail early on shape or value problems instead of inside the timed loop.
    layer.forward_batch(xs, tier)?;
    artifact.forward_batch(xs, tier)?;

    let spline = measure(p, || layer.forward_batch(xs, tier));
    let lut = match opts.mode {
        BenchMode::Steady => measure(p, || artifact.forward_batch(xs, tier)),
        BenchMode::ColdStart => {
            let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
            let path = dir.path().join("layer.lut");
            save_artifact(artifact, &path)?;
            cold_start(p, &path, xs, tier)?
        }
    };
    Ok(BenchReport {
        seed: opts.seed,
        quant: artifact.quant_config(),
        oob: artifact.oob(),
        tier,
        mode: opts.mode,
        threads: opts.threads,
        batch: p.batch,
        warmup_iters: p.warmup_iters,
        timed_iters: p.timed_iters,
        speedup: spline.mean_ms / lut.mean_ms,
        spline,
        lut,
        memory: memory_breakdown(artifact, layer),
    })
}

fn cold_start(p: &BenchProtocol, path: &Path, xs: &Batch, tier: Tier) -> Result<TimingStats> {
    load_artifact(path)?.forward_batch(xs, tier)?;
    Ok(measure(p, || {
        let art = load_artifact(path).expect("artifact loaded before timing");
        art.forward_batch(xs, tier)
            .expect("forward validated before timing")
    }))
}

/// Thread count: explicit value, then `LUTKAN_NUM_THREADS`, then 1.
pub fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return positive_threads(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n = v.trim().parse::<usize>().map_err(|_| {
                Error::InvalidConfig(format!("{THREADS_ENV}={v:?} is not a positive integer"))
            })?;
            positive_threads(n)
        }
        Err(_) => Ok(1),
    }
}

fn positive_threads(n: usize) -> Result<usize> {
    if n == 0 {
        Err(Error::InvalidConfig("thread count must be positive".into()))
    } else {
        Ok(n)
    }
}
