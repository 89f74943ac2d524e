//! Accuracy of a compiled layer against its float reference.
//!
//! Errors are measured per (sample, edge) pair as `|phi_hat(x_i) - phi(x_i)|`.
//! Each pair is classified by the artifact's domain membership `m(x_i)`.
//! A third subset, `common_inrange`, keeps the pairs with `t_0 <= x_i < t_K`,
//! which are in range under either boundary convention, so its metrics can be
//! compared across boundary modes.

use serde::{Deserialize, Serialize};

use crate::artifact::LutLayerArtifact;
use crate::batch::Batch;
use crate::compiler::FloatLut;
use crate::config::{OobConfig, QuantConfig};
use crate::error::{Error, Result};
use crate::runtime::{in_domain, OobStats};
use crate::spline::KanLayerSpec;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct ErrorAccum {
    sum: f64,
    max: f64,
    count: usize,
}

impl ErrorAccum {
    fn push(&mut self, err: f64) {
        self.sum += err;
        self.max = self.max.max(err);
        self.count += 1;
    }

    fn mae(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }

    fn maxabs(&self) -> Option<f64> {
        (self.count > 0).then_some(self.max)
    }
}

/// Accuracy report. Subset metrics are `None` (JSON `null`) when the subset is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub quant: QuantConfig,
    pub oob: OobConfig,
    pub num_samples: usize,
    pub num_edges: usize,
    pub mae_inrange: Option<f64>,
    pub maxabs_inrange: Option<f64>,
    pub mae_oob: Option<f64>,
    pub maxabs_oob: Option<f64>,
    pub mae_common_inrange: Option<f64>,
    pub maxabs_common_inrange: Option<f64>,
    pub inrange_pairs: usize,
    pub oob_pairs: usize,
    pub oob_any_frac: f64,
    pub oob_stats: OobStats,
}

/// Compare the quantized artifact against the reference layer on `xs`.
pub fn eval_accuracy(
    layer: &KanLayerSpec,
    artifact: &LutLayerArtifact,
    xs: &Batch,
    seed: u64,
) -> Result<EvalReport> {
    evaluate(layer, artifact, xs, seed, |e, x| artifact.eval_phi(e, x))
}

/// Same as [`eval_accuracy`] but reading the unquantized table.
pub fn eval_accuracy_float(
    layer: &KanLayerSpec,
    artifact: &LutLayerArtifact,
    table: &FloatLut,
    xs: &Batch,
    seed: u64,
) -> Result<EvalReport> {
    let ev = artifact.with_float_table(table)?;
    evaluate(layer, artifact, xs, seed, |e, x| ev.eval_phi(e, x))
}

fn evaluate(
    layer: &KanLayerSpec,
    artifact: &LutLayerArtifact,
    xs: &Batch,
    seed: u64,
    phi_hat: impl Fn(usize, f64) -> Result<f64>,
) -> Result<EvalReport> {
    let d = layer.in_dim();
    let m = layer.out_dim();
    if artifact.in_dim() != d || artifact.out_dim() != m {
        return Err(Error::DimensionMismatch {
            expected: d * m,
            found: artifact.edge_count(),
        });
    }
    if xs.cols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: xs.cols(),
        });
    }
    let knots = artifact.knots();
    let (lo, hi) = (knots[0] as f64, knots[knots.len() - 1] as f64);
    let mode = artifact.boundary_mode();

    let mut inrange = ErrorAccum::default();
    let mut oob = ErrorAccum::default();
    let mut common = ErrorAccum::default();
    let mut stats = OobStats::default();
    let mut reference = vec![0.0; m];
    for row in xs.iter_rows() {
        let mut oob_coords = 0;
        for (i, &x) in row.iter().enumerate() {
            layer.input_edge_phis(i, x, &mut reference);
            let inside = in_domain(x, knots, mode);
            let in_common = x >= lo && x < hi;
            oob_coords += usize::from(!inside);
            for (j, &want) in reference.iter().enumerate() {
                let err = (phi_hat(i * m + j, x)? - want).abs();
                if inside {
                    inrange.push(err);
                } else {
                    oob.push(err);
                }
                if in_common {
                    common.push(err);
                }
            }
        }
        stats.samples += 1;
        stats.coords += d;
        stats.oob_coords += oob_coords;
        stats.oob_samples += usize::from(oob_coords > 0);
    }

    Ok(EvalReport {
        seed,
        quant: artifact.quant_config(),
        oob: artifact.oob(),
        num_samples: xs.rows(),
        num_edges: d * m,
        mae_inrange: inrange.mae(),
        maxabs_inrange: inrange.maxabs(),
        mae_oob: oob.mae(),
        maxabs_oob: oob.maxabs(),
        mae_common_inrange: common.mae(),
        maxabs_common_inrange: common.maxabs(),
        inrange_pairs: inrange.count,
        oob_pairs: oob.count,
        oob_any_frac: stats.oob_any_frac(),
        oob_stats: stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{build_float_lut, compile_layer};
    use crate::config::{BoundaryMode, OobPolicy, Scheme, ValueRepr};
    use crate::model_gen::{gen_layer_inputs, gen_sanity_layer};

    #[test]
    fn float_table_at_nodes_is_exact() {
        let layer = gen_sanity_layer(0);
        for repr in ValueRepr::ALL {
            let cfg = QuantConfig::new(16, Scheme::Symmetric).with_value_repr(*repr);
            let art = compile_layer(&layer, &cfg, OobConfig::default()).unwrap();
            let lut = build_float_lut(&layer, &cfg).unwrap();
            let rows: Vec<Vec<f64>> = (0..8).map(|k| vec![lut.point(k, 0); 10]).collect();
            let xs = Batch::from_rows(&rows).unwrap();
            let r = eval_accuracy_float(&layer, &art, &lut, &xs, 0).unwrap();
            assert_eq!(r.mae_inrange, Some(0.0), "{r:?}");
            assert_eq!(r.maxabs_inrange, Some(0.0));
        }
    }

    #[test]
    fn closed_mode_has_no_oob_on_clipped_inputs() {
        let layer = gen_sanity_layer(1);
        let xs = gen_layer_inputs(1, 256, &layer, true);
        let cfg = QuantConfig::new(32, Scheme::Asymmetric);
        let art = compile_layer(
            &layer,
            &cfg,
            OobConfig::new(BoundaryMode::Closed, OobPolicy::ClipX),
        )
        .unwrap();
        let r = eval_accuracy(&layer, &art, &xs, 1).unwrap();
        assert_eq!(r.oob_any_frac, 0.0);
        assert_eq!((r.mae_oob, r.maxabs_oob), (None, None));
        assert!(r.mae_inrange.unwrap() <= r.maxabs_inrange.unwrap());
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["mae_oob"].is_null());

        let half = art
            .with_oob(OobConfig::new(BoundaryMode::HalfOpen, OobPolicy::ClipX))
            .unwrap();
        let h = eval_accuracy(&layer, &half, &xs, 1).unwrap();
        assert!(h.oob_any_frac > 0.0);
        assert!(h.mae_oob.is_some());
        assert_eq!(h.inrange_pairs + h.oob_pairs, 256 * 80);
    }

    #[test]
    fn dimension_checks() {
        let layer = gen_sanity_layer(0);
        let art = compile_layer(&layer, &QuantConfig::default(), OobConfig::default()).unwrap();
        let xs = Batch::zeros(2, 3);
        assert!(matches!(
            eval_accuracy(&layer, &art, &xs, 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
