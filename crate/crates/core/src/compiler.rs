//! Compile a float KAN layer into a segment-wise quantized lookup table.
//!
//! Each segment `[t_k, t_{k+1})` is sampled at `L` points
//! `x_{k,l} = t_k + l * (t_{k+1} - t_k) / L`, so the right endpoint is never
//! sampled. The sampled values are quantized per `(edge, segment)`.

use std::thread;

use crate::artifact::{ArtifactParts, EdgeScalars, LutLayerArtifact, QTable};
use crate::config::{OobConfig, QuantConfig, Scheme, ValueRepr};
use crate::error::{Error, Result};
use crate::quant::{quantize_segment, ParamPrecision};
use crate::spline::{combine_phi, KanLayerSpec, KnotGrid};

/// Sample points `x_{k,l}`, flattened `[K, L]`.
pub fn sample_segment_points(grid: &KnotGrid, samples: usize) -> Result<Vec<f64>> {
    if samples < 2 {
        return Err(Error::InvalidConfig(format!(
            "L must be at least 2, got {samples}"
        )));
    }
    let bp = grid.breakpoints();
    let mut points = Vec::with_capacity(grid.segments() * samples);
    for w in bp.windows(2) {
        let delta = (w[1] - w[0]) / samples as f64;
        points.extend((0..samples).map(|l| w[0] + l as f64 * delta));
    }
    Ok(points)
}

/// Unquantized table values `v[e][k][l]` together with their sample points.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatLut {
    edges: usize,
    segments: usize,
    samples: usize,
    points: Vec<f64>,
    values: Vec<f64>,
}

impl FloatLut {
    pub fn edges(&self) -> usize {
        self.edges
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Sample points, flattened `[K, L]`.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, k: usize, l: usize) -> f64 {
        self.points[k * self.samples + l]
    }

    /// Values, flattened `[E, K, L]`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, e: usize, k: usize, l: usize) -> f64 {
        self.values[(e * self.segments + k) * self.samples + l]
    }

    pub fn segment(&self, e: usize, k: usize) -> &[f64] {
        let start = (e * self.segments + k) * self.samples;
        &self.values[start..start + self.samples]
    }
}

pub fn build_float_lut(layer: &KanLayerSpec, cfg: &QuantConfig) -> Result<FloatLut> {
    let points = sample_segment_points(layer.grid(), cfg.samples)?;
    let values = table_values(layer, cfg.value_repr, &points, 0..layer.edge_count());
    Ok(FloatLut {
        edges: layer.edge_count(),
        segments: layer.grid().segments(),
        samples: cfg.samples,
        points,
        values,
    })
}

/// Values for a contiguous edge range, laid out `[edge, point]`.
fn table_values(
    layer: &KanLayerSpec,
    repr: ValueRepr,
    points: &[f64],
    edges: std::ops::Range<usize>,
) -> Vec<f64> {
    let grid = layer.grid();
    let r_count = grid.basis_count();
    let mut basis = vec![0.0; grid.scratch_len()];
    let n_edges = edges.len();
    let mut out = vec![0.0; n_edges * points.len()];
    for (p, &x) in points.iter().enumerate() {
        grid.basis_values_into(x, &mut basis);
        let b = layer.base_kind().eval(x);
        for (slot, e) in edges.clone().enumerate() {
            let edge = &layer.edges()[e];
            let s: f64 = edge
                .coeffs
                .iter()
                .zip(&basis[..r_count])
                .fold(0.0, |acc, (c, v)| acc + c * v);
            out[slot * points.len() + p] = match repr {
                ValueRepr::SplineComponent => s,
                ValueRepr::Phi => {
                    combine_phi(edge.out_scale, edge.base_scale, edge.spline_scale, b, s)
                }
            };
        }
    }
    out
}

struct EdgeChunk {
    q: Vec<i16>,
    scale: Vec<f32>,
    y_min: Vec<f32>,
}

fn compile_edges(
    layer: &KanLayerSpec,
    cfg: &QuantConfig,
    points: &[f64],
    edges: std::ops::Range<usize>,
) -> Result<EdgeChunk> {
    let values = table_values(layer, cfg.value_repr, points, edges.clone());
    let precision = ParamPrecision::Stored(cfg.param_dtype);
    let n_seg = edges.len() * layer.grid().segments();
    let mut chunk = EdgeChunk {
        q: Vec::with_capacity(values.len()),
        scale: Vec::with_capacity(n_seg),
        y_min: Vec::with_capacity(n_seg),
    };
    for segment in values.chunks_exact(cfg.samples) {
        let s = quantize_segment(segment, cfg.scheme, precision)?;
        chunk.q.extend_from_slice(&s.q);
        // Exact: parameters were already rounded to a representable value.
        chunk.scale.push(s.scale as f32);
        chunk.y_min.push(s.y_min as f32);
    }
    Ok(chunk)
}

pub fn compile_layer(
    layer: &KanLayerSpec,
    cfg: &QuantConfig,
    oob: OobConfig,
) -> Result<LutLayerArtifact> {
    compile_layer_threaded(layer, cfg, oob, 1)
}

/// As [`compile_layer`], splitting edges across `threads` workers. Output is
/// bit-identical for every thread count.
pub fn compile_layer_threaded(
    layer: &KanLayerSpec,
    cfg: &QuantConfig,
    oob: OobConfig,
    threads: usize,
) -> Result<LutLayerArtifact> {
    cfg.validate()?;
    let points = sample_segment_points(layer.grid(), cfg.samples)?;
    let e_count = layer.edge_count();
    let threads = threads.clamp(1, e_count);
    let per = e_count.div_ceil(threads);
    let ranges: Vec<_> = (0..e_count)
        .step_by(per)
        .map(|s| s..(s + per).min(e_count))
        .collect();

    let chunks: Vec<Result<EdgeChunk>> = if ranges.len() == 1 {
        vec![compile_edges(layer, cfg, &points, 0..e_count)]
    } else {
        thread::scope(|scope| {
            let handles: Vec<_> = ranges
                .iter()
                .map(|r| {
                    let r = r.clone();
                    let points = &points;
                    scope.spawn(move || compile_edges(layer, cfg, points, r))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("compile worker panicked"))
                .collect()
        })
    };

    let mut q = Vec::with_capacity(e_count * layer.grid().segments() * cfg.samples);
    let mut scale = Vec::new();
    let mut y_min = Vec::new();
    for chunk in chunks {
        let chunk = chunk?;
        q.extend(chunk.q);
        scale.extend(chunk.scale);
        y_min.extend(chunk.y_min);
    }
    let q_table = match cfg.scheme {
        Scheme::Symmetric => QTable::Int8(q.into_iter().map(|v| v as i8).collect()),
        Scheme::Asymmetric => QTable::Uint8(q.into_iter().map(|v| v as u8).collect()),
    };

    let edge_scalars = match cfg.value_repr {
        ValueRepr::Phi => None,
        ValueRepr::SplineComponent => {
            let edges = layer.edges();
            Some(EdgeScalars {
                base_kind: layer.base_kind(),
                base_scale: edges.iter().map(|e| e.base_scale as f32).collect(),
                spline_scale: edges.iter().map(|e| e.spline_scale as f32).collect(),
                out_scale: edges.iter().map(|e| e.out_scale as f32).collect(),
            })
        }
    };

    LutLayerArtifact::from_parts(ArtifactParts {
        in_dim: layer.in_dim(),
        out_dim: layer.out_dim(),
        samples: cfg.samples,
        knots: layer
            .grid()
            .breakpoints()
            .iter()
            .map(|&t| t as f32)
            .collect(),
        q_table,
        scale,
        y_min,
        scheme: cfg.scheme,
        param_dtype: cfg.param_dtype,
        value_repr: cfg.value_repr,
        interp: cfg.interp,
        oob,
        edge_scalars,
    })
}

/// Compile every layer of a model, preserving order.
pub fn compile_model(
    layers: &[KanLayerSpec],
    cfg: &QuantConfig,
    oob: OobConfig,
) -> Result<Vec<LutLayerArtifact>> {
    layers
        .iter()
        .enumerate()
        .map(|(index, layer)| {
            compile_layer(layer, cfg, oob).map_err(|e| Error::Layer {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ParamDtype, QuantDtype};
    use crate::spline::{BaseKind, EdgeParams};

    fn layer_with(d: usize, m: usize, f: impl Fn(usize) -> EdgeParams) -> KanLayerSpec {
        let grid = KnotGrid::uniform(-1.0, 1.0, 4, 3).unwrap();
        KanLayerSpec::new(d, m, grid, (0..d * m).map(f).collect(), BaseKind::Silu).unwrap()
    }

    fn wavy(e: usize) -> EdgeParams {
        EdgeParams {
            coeffs: (0..7)
                .map(|r| ((r * 7 + e * 3) as f64 * 0.37).sin() * 0.2)
                .collect(),
            base_scale: 0.75,
            spline_scale: 1.25,
            out_scale: 0.5 + e as f64 * 0.125,
        }
    }

    #[test]
    fn sample_points_formula() {
        let g = KnotGrid::new(vec![0.0, 1.0, 2.0], 3).unwrap();
        let p = sample_segment_points(&g, 4).unwrap();
        assert_eq!(&p[..4], &[0.0, 0.25, 0.5, 0.75]);
        assert_eq!(&p[4..], &[1.0, 1.25, 1.5, 1.75]);

        let g = KnotGrid::new(vec![0.0, 1.0, 3.0], 1).unwrap();
        let p = sample_segment_points(&g, 2).unwrap();
        assert_eq!(&p[2..], &[1.0, 2.0]);
        assert!(sample_segment_points(&g, 1).is_err());
    }

    #[test]
    fn last_point_is_one_step_before_right_knot() {
        let g = KnotGrid::new(vec![-1.0, -0.3, 0.2, 1.7], 3).unwrap();
        let l = 7;
        let p = sample_segment_points(&g, l).unwrap();
        for (k, w) in g.breakpoints().windows(2).enumerate() {
            let delta = (w[1] - w[0]) / l as f64;
            assert!((p[k * l + l - 1] - (w[1] - delta)).abs() < 1e-15);
            assert!(p[k * l + l - 1] < w[1]);
        }
    }

    #[test]
    fn spline_component_zero_coeffs_gives_zero_table() {
        let layer = layer_with(2, 2, |_| EdgeParams {
            coeffs: vec![0.0; 7],
            base_scale: 1.0,
            spline_scale: 1.0,
            out_scale: 1.0,
        });
        let lut = build_float_lut(&layer, &QuantConfig::new(8, Scheme::Symmetric)).unwrap();
        assert!(lut.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn phi_base_only_table() {
        let layer = layer_with(1, 1, |_| EdgeParams {
            coeffs: vec![0.4; 7],
            base_scale: 0.5,
            spline_scale: 0.0,
            out_scale: 2.0,
        });
        let cfg = QuantConfig::new(8, Scheme::Symmetric).with_value_repr(ValueRepr::Phi);
        let lut = build_float_lut(&layer, &cfg).unwrap();
        for k in 0..4 {
            for l in 0..8 {
                let x = lut.point(k, l);
                assert_eq!(
                    lut.value(0, k, l),
                    2.0 * (0.5 * crate::spline::silu(x) + 0.0 * 0.4)
                );
            }
        }
    }

    #[test]
    fn spline_component_ignores_edge_scalars() {
        let a = layer_with(1, 2, wavy);
        let b = layer_with(1, 2, |e| EdgeParams {
            base_scale: -3.0,
            spline_scale: 9.0,
            out_scale: 0.0,
            ..wavy(e)
        });
        let cfg = QuantConfig::new(16, Scheme::Asymmetric);
        assert_eq!(
            build_float_lut(&a, &cfg).unwrap(),
            build_float_lut(&b, &cfg).unwrap()
        );
    }

    #[test]
    fn phi_table_matches_reference() {
        let layer = layer_with(2, 3, wavy);
        let cfg = QuantConfig::new(5, Scheme::Symmetric).with_value_repr(ValueRepr::Phi);
        let lut = build_float_lut(&layer, &cfg).unwrap();
        for e in 0..6 {
            for k in 0..4 {
                for l in 0..5 {
                    assert_eq!(lut.value(e, k, l), layer.edge_phi(e, lut.point(k, l)));
                }
            }
        }
    }

    #[test]
    fn compiled_shapes_and_metadata() {
        let layer = layer_with(3, 2, wavy);
        let cfg = QuantConfig::new(16, Scheme::Symmetric);
        let art = compile_layer(&layer, &cfg, OobConfig::default()).unwrap();
        assert_eq!(art.q_table().len(), 6 * 4 * 16);
        assert_eq!(art.scale().len(), 24);
        assert_eq!(art.dtype(), QuantDtype::Int8);
        assert!(art.y_min().iter().all(|&y| y == 0.0));
        let s = art.edge_scalars().unwrap();
        assert_eq!(s.out_scale[5], layer.edges()[5].out_scale as f32);

        let phi = compile_layer(
            &layer,
            &cfg.with_value_repr(ValueRepr::Phi),
            OobConfig::default(),
        )
        .unwrap();
        assert!(phi.edge_scalars().is_none());
    }

    #[test]
    fn dequantized_table_within_half_step() {
        let layer = layer_with(2, 2, wavy);
        for scheme in Scheme::ALL {
            for dtype in ParamDtype::ALL {
                let cfg = QuantConfig::new(12, *scheme).with_param_dtype(*dtype);
                let lut = build_float_lut(&layer, &cfg).unwrap();
                let art = compile_layer(&layer, &cfg, OobConfig::default()).unwrap();
                for e in 0..4 {
                    for k in 0..4 {
                        let alpha = art.scale()[e * 4 + k] as f64;
                        for l in 0..12 {
                            let err = (art.dequantized(e, k, l) - lut.value(e, k, l)).abs();
                            assert!(
                                err <= alpha / 2.0 + 1e-9,
                                "{scheme} {dtype} err={err} alpha={alpha}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn threaded_compile_is_bit_identical() {
        let layer = layer_with(5, 3, wavy);
        let cfg = QuantConfig::new(10, Scheme::Asymmetric);
        let one = compile_layer_threaded(&layer, &cfg, OobConfig::default(), 1).unwrap();
        for t in [2, 4, 7, 64] {
            assert_eq!(
                compile_layer_threaded(&layer, &cfg, OobConfig::default(), t).unwrap(),
                one
            );
        }
    }

    #[test]
    fn compile_model_keeps_order_and_tags_errors() {
        let layers = vec![layer_with(2, 3, wavy), layer_with(3, 1, wavy)];
        let cfg = QuantConfig::new(8, Scheme::Symmetric);
        let arts = compile_model(&layers, &cfg, OobConfig::default()).unwrap();
        assert_eq!(
            arts.iter().map(|a| a.edge_count()).collect::<Vec<_>>(),
            vec![6, 3]
        );
        assert!(compile_model(&[], &cfg, OobConfig::default())
            .unwrap()
            .is_empty());

        let bad = QuantConfig::new(1, Scheme::Symmetric);
        assert!(matches!(
            compile_model(&layers, &bad, OobConfig::default()),
            Err(Error::Layer { index: 0, .. })
        ));
    }
}
