//! Reference (float64) evaluation of B-spline KAN layers.
//!
//! A layer maps `x in R^d` to `y in R^m` with `y_j = sum_i phi_ij(x_i)`, where
//! each edge function is
//!
//! ```text
//! phi(x) = s_out * (s_base * b(x) + s_spline * sum_r c_r B_{r,p}(x))
//! ```
//!
//! and `B_{r,p}` are Cox-de Boor basis functions over the breakpoints extended
//! by `p` knots on each side. The extension continues the spacing of the end
//! segment uniformly (`t_{-q} = t_0 - q (t_1 - t_0)`, `t_{K+q} = t_K + q (t_K - t_{K-1})`),
//! so an edge owns `R = K + p` coefficients.
//!
//! Two batch tiers exist. `Scalar` evaluates every edge independently through
//! the public per-edge functions; `Optimized` runs the same recursion but
//! computes the basis vector and base function once per input coordinate and
//! reuses them across the `m` output edges. Both compute identical formulas.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::batch::Batch;
use crate::config::Tier;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KnotGrid {
    breakpoints: Vec<f64>,
    degree: usize,
    extended: Vec<f64>,
}

impl KnotGrid {
    pub fn new(breakpoints: Vec<f64>, degree: usize) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 breakpoints, got {}",
                breakpoints.len()
            )));
        }
        if let Some(bad) = breakpoints.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite breakpoint {bad}")));
        }
        if let Some(w) = breakpoints.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid(format!(
                "breakpoints must be strictly increasing ({} >= {})",
                w[0], w[1]
            )));
        }

        let k = breakpoints.len() - 1;
        let h_left = breakpoints[1] - breakpoints[0];
        let h_right = breakpoints[k] - breakpoints[k - 1];
        let mut extended = Vec::with_capacity(breakpoints.len() + 2 * degree);
        for q in (1..=degree).rev() {
            extended.push(breakpoints[0] - q as f64 * h_left);
        }
        extended.extend_from_slice(&breakpoints);
        for q in 1..=degree {
            extended.push(breakpoints[k] + q as f64 * h_right);
        }
        Ok(KnotGrid {
            breakpoints,
            degree,
            extended,
        })
    }

    /// `segments` equal-width segments over `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, segments: usize, degree: usize) -> Result<Self> {
        if segments == 0 {
            return Err(Error::InvalidGrid("need at least one segment".into()));
        }
        let h = (hi - lo) / segments as f64;
        let mut bp: Vec<f64> = (0..segments).map(|k| lo + k as f64 * h).collect();
        bp.push(hi);
        Self::new(bp, degree)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn extended_knots(&self) -> &[f64] {
        &self.extended
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of segments `K`.
    pub fn segments(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// Number of basis functions (and coefficients per edge), `K + p`.
    pub fn basis_count(&self) -> usize {
        self.segments() + self.degree
    }

    pub fn lower(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn upper(&self) -> f64 {
        self.breakpoints[self.segments()]
    }

    /// `B_{r,p}(x)` for `r = 0..R`.
    pub fn basis_values(&self, x: f64) -> Vec<f64> {
        let mut buf = vec![0.0; self.extended.len() - 1];
        cox_de_boor(&self.extended, self.degree, x, &mut buf);
        buf.truncate(self.basis_count());
        buf
    }

    /// Scratch length required by [`KnotGrid::basis_values_into`].
    pub fn scratch_len(&self) -> usize {
        self.extended.len() - 1
    }

    /// Allocation-free variant of [`KnotGrid::basis_values`]; the first `R`
    /// entries of `buf` hold the result.
    #[inline]
    pub fn basis_values_into(&self, x: f64, buf: &mut [f64]) {
        cox_de_boor(&self.extended, self.degree, x, buf);
    }
}

/// Dense Cox-de Boor recursion, in place. Zero-width spans contribute zero.
#[inline]
fn cox_de_boor(ext: &[f64], degree: usize, x: f64, buf: &mut [f64]) {
    let n0 = ext.len() - 1;
    let buf = &mut buf[..n0];
    for r in 0..n0 {
        buf[r] = if ext[r] <= x && x < ext[r + 1] {
            1.0
        } else {
            0.0
        };
    }
    for q in 1..=degree {
        for r in 0..n0 - q {
            let left_span = ext[r + q] - ext[r];
            let right_span = ext[r + q + 1] - ext[r + 1];
            let left = if left_span == 0.0 {
                0.0
            } else {
                (x - ext[r]) / left_span * buf[r]
            };
            let right = if right_span == 0.0 {
                0.0
            } else {
                (ext[r + q + 1] - x) / right_span * buf[r + 1]
            };
            buf[r] = left + right;
        }
    }
}

/// Base nonlinearity `b(x)` of the edge function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum BaseKind {
    #[default]
    Silu,
}

impl BaseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BaseKind::Silu => "silu",
        }
    }

    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            BaseKind::Silu => silu(x),
        }
    }
}

impl FromStr for BaseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "silu" => Ok(BaseKind::Silu),
            other => Err(Error::UnsupportedBase(other.to_string())),
        }
    }
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// Evaluate the base function named `kind`.
pub fn base_fn(kind: &str, x: f64) -> Result<f64> {
    Ok(kind.parse::<BaseKind>()?.eval(x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeParams {
    pub coeffs: Vec<f64>,
    pub base_scale: f64,
    pub spline_scale: f64,
    pub out_scale: f64,
}

impl EdgeParams {
    /// Spline branch `s(x) = sum_r c_r B_{r,p}(x)`.
    pub fn eval_spline(&self, grid: &KnotGrid, x: f64) -> f64 {
        let basis = grid.basis_values(x);
        dot(&self.coeffs, &basis)
    }

    pub fn eval_phi(&self, grid: &KnotGrid, base: BaseKind, x: f64) -> f64 {
        combine_phi(
            self.out_scale,
            self.base_scale,
            self.spline_scale,
            base.eval(x),
            self.eval_spline(grid, x),
        )
    }
}

/// `s_out * (s_base * b + s_spline * s)`, the one place this formula is spelled out.
#[inline(always)]
pub(crate) fn combine_phi(out: f64, base_scale: f64, spline_scale: f64, b: f64, s: f64) -> f64 {
    out * (base_scale * b + spline_scale * s)
}

#[inline(always)]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub fn eval_spline(edge: &EdgeParams, grid: &KnotGrid, x: f64) -> f64 {
    edge.eval_spline(grid, x)
}

pub fn eval_edge_phi(edge: &EdgeParams, grid: &KnotGrid, base_kind: &str, x: f64) -> Result<f64> {
    Ok(edge.eval_phi(grid, base_kind.parse()?, x))
}

/// Float reference model of one KAN layer. Edges are stored row-major,
/// `i` (input) outer and `j` (output) inner, so edge `(i -> j)` is `i * m + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct KanLayerSpec {
    in_dim: usize,
    out_dim: usize,
    grid: KnotGrid,
    edges: Vec<EdgeParams>,
    base_kind: BaseKind,
    // Coefficients regrouped as [i][r][j] for the optimized tier.
    fanout_coeffs: Vec<f64>,
}

impl KanLayerSpec {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        grid: KnotGrid,
        edges: Vec<EdgeParams>,
        base_kind: BaseKind,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "layer dimensions must be positive, got {in_dim}x{out_dim}"
            )));
        }
        if edges.len() != in_dim * out_dim {
            return Err(Error::EdgeCount {
                expected: in_dim * out_dim,
                found: edges.len(),
            });
        }
        let r = grid.basis_count();
        for (e, edge) in edges.iter().enumerate() {
            if edge.coeffs.len() != r {
                return Err(Error::CoefficientCount {
                    edge: e,
                    expected: r,
                    found: edge.coeffs.len(),
                });
            }
        }
        let mut fanout_coeffs = vec![0.0; edges.len() * r];
        for (e, edge) in edges.iter().enumerate() {
            let (i, j) = (e / out_dim, e % out_dim);
            for (q, &c) in edge.coeffs.iter().enumerate() {
                fanout_coeffs[(i * r + q) * out_dim + j] = c;
            }
        }
        Ok(KanLayerSpec {
            in_dim,
            out_dim,
            grid,
            edges,
            base_kind,
            fanout_coeffs,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn grid(&self) -> &KnotGrid {
        &self.grid
    }

    pub fn edges(&self) -> &[EdgeParams] {
        &self.edges
    }

    pub fn edge(&self, i: usize, j: usize) -> &EdgeParams {
        &self.edges[i * self.out_dim + j]
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn base_kind(&self) -> BaseKind {
        self.base_kind
    }

    /// Reference `phi` of edge index `e` at `x`.
    pub fn edge_phi(&self, e: usize, x: f64) -> f64 {
        self.edges[e].eval_phi(&self.grid, self.base_kind, x)
    }

    /// Reference `phi` of every edge leaving input `i`, written to `out[j]`.
    pub fn input_edge_phis(&self, i: usize, x: f64, out: &mut [f64]) {
        let m = self.out_dim;
        let basis = self.grid.basis_values(x);
        let b = self.base_kind.eval(x);
        for (o, edge) in out[..m].iter_mut().zip(&self.edges[i * m..(i + 1) * m]) {
            let s = dot(&edge.coeffs, &basis[..self.grid.basis_count()]);
            *o = combine_phi(edge.out_scale, edge.base_scale, edge.spline_scale, b, s);
        }
    }

    /// Number of stored float parameters: coefficients plus three scalars per edge.
    pub fn param_count(&self) -> usize {
        self.edges.len() * (self.grid.basis_count() + 3)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim,
                found: x.len(),
            });
        }
        let mut y = vec![0.0; self.out_dim];
        for (i, &xi) in x.iter().enumerate() {
            for (j, yj) in y.iter_mut().enumerate() {
                *yj += self.edge_phi(i * self.out_dim + j, xi);
            }
        }
        Ok(y)
    }

    pub fn forward_batch(&self, xs: &Batch, tier: Tier) -> Result<Batch> {
        xs.expect_cols(self.in_dim)?;
        let mut out = Batch::zeros(xs.rows(), self.out_dim);
        match tier {
            Tier::Scalar => {
                for (r, row) in xs.iter_rows().enumerate() {
                    let y = self.forward(row)?;
                    out.row_mut(r).copy_from_slice(&y);
                }
            }
            Tier::Optimized => self.forward_batch_optimized(xs, &mut out),
        }
        Ok(out)
    }

    /// Works one input column at a time: basis and base values for every row
    /// first, then the `m` spline sums of each row accumulated side by side in
    /// the order `r = 0..R` (the same order as the scalar dot product).
    fn forward_batch_optimized(&self, xs: &Batch, out: &mut Batch) {
        let (n, d, m) = (xs.rows(), self.in_dim, self.out_dim);
        let r_count = self.grid.basis_count();
        let stride = self.grid.scratch_len();
        let x_all = xs.as_slice();
        let ys = out.as_mut_slice();
        let mut basis = vec![0.0; n * stride];
        let mut base = vec![0.0; n];
        let mut acc = vec![0.0; m];
        let acc = &mut acc[..m];
        for i in 0..d {
            for ((bs, b), r) in basis
                .chunks_exact_mut(stride)
                .zip(base.iter_mut())
                .zip(0..n)
            {
                let x = x_all[r * d + i];
                self.grid.basis_values_into(x, bs);
                *b = self.base_kind.eval(x);
            }
            let coeffs = &self.fanout_coeffs[i * r_count * m..][..r_count * m];
            let edges = &self.edges[i * m..][..m];
            for ((bs, &b), y_row) in basis
                .chunks_exact(stride)
                .zip(&base)
                .zip(ys.chunks_exact_mut(m))
            {
                acc.fill(0.0);
                for (&br, c_row) in bs[..r_count].iter().zip(coeffs.chunks_exact(m)) {
                    for (a, &c) in acc.iter_mut().zip(c_row) {
                        *a += c * br;
                    }
                }
                for ((y, &a), e) in y_row.iter_mut().zip(acc.iter()).zip(edges) {
                    *y += combine_phi(e.out_scale, e.base_scale, e.spline_scale, b, a);
                }
            }
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: LayerFile = serde_json::from_str(text)?;
        file.into_spec()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&LayerFile::from_spec(self)).expect("layer serializes")
    }
}

pub fn layer_forward(layer: &KanLayerSpec, x: &[f64]) -> Result<Vec<f64>> {
    layer.forward(x)
}

pub fn layer_forward_batch(layer: &KanLayerSpec, xs: &Batch, tier: Tier) -> Result<Batch> {
    layer.forward_batch(xs, tier)
}

/// Reference forward through a chain of layers.
pub fn model_forward(layers: &[KanLayerSpec], x: &[f64]) -> Result<Vec<f64>> {
    let Some(first) = layers.first() else {
        return Err(Error::EmptyChain);
    };
    let mut h = first.forward(x).map_err(|e| layer_err(0, e))?;
    for (idx, layer) in layers.iter().enumerate().skip(1) {
        if layer.in_dim() != h.len() {
            return Err(Error::ChainMismatch {
                index: idx,
                expected: layer.in_dim(),
                found: h.len(),
            });
        }
        h = layer.forward(&h).map_err(|e| layer_err(idx, e))?;
    }
    Ok(h)
}

fn layer_err(index: usize, e: Error) -> Error {
    Error::Layer {
        index,
        source: Box::new(e),
    }
}

/// On-disk JSON form of one layer.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    in_dim: usize,
    out_dim: usize,
    degree: usize,
    breakpoints: Vec<f64>,
    base_kind: String,
    edges: Vec<EdgeParams>,
}

impl LayerFile {
    fn into_spec(self) -> Result<KanLayerSpec> {
        let grid = KnotGrid::new(self.breakpoints, self.degree)?;
        KanLayerSpec::new(
            self.in_dim,
            self.out_dim,
            grid,
            self.edges,
            self.base_kind.parse()?,
        )
    }

    fn from_spec(spec: &KanLayerSpec) -> Self {
        LayerFile {
            in_dim: spec.in_dim,
            out_dim: spec.out_dim,
            degree: spec.grid.degree(),
            breakpoints: spec.grid.breakpoints().to_vec(),
            base_kind: spec.base_kind.as_str().to_string(),
            edges: spec.edges.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    layers: Vec<LayerFile>,
}

/// Parse a model file: either a single layer object or `{"layers": [...]}`.
pub fn parse_model(text: &str) -> Result<Vec<KanLayerSpec>> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    if value.get("layers").is_some() {
        let file: ModelFile = serde_json::from_value(value)?;
        file.layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| l.into_spec().map_err(|e| layer_err(i, e)))
            .collect()
    } else {
        let file: LayerFile = serde_json::from_value(value)?;
        Ok(vec![file.into_spec()?])
    }
}

pub fn load_model(path: &Path) -> Result<Vec<KanLayerSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text)
}

pub fn save_model(layers: &[KanLayerSpec], path: &Path) -> Result<()> {
    let text = if let [single] = layers {
        single.to_json_string()
    } else {
        let file = ModelFile {
            layers: layers.iter().map(LayerFile::from_spec).collect(),
        };
        serde_json::to_string_pretty(&file)?
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(coeffs: Vec<f64>, base: f64, spline: f64, out: f64) -> EdgeParams {
        EdgeParams {
            coeffs,
            base_scale: base,
            spline_scale: spline,
            out_scale: out,
        }
    }

    #[test]
    fn degree_zero_is_an_indicator() {
        let g = KnotGrid::new(vec![0.0, 1.0], 0).unwrap();
        assert_eq!(g.basis_values(0.5), vec![1.0]);
        assert_eq!(g.basis_values(1.0), vec![0.0]);
    }

    #[test]
    fn degree_one_hat_at_interior_knot() {
        let g = KnotGrid::new(vec![0.0, 1.0, 2.0], 1).unwrap();
        assert_eq!(g.extended_knots(), &[-1.0, 0.0, 1.0, 2.0, 3.0]);
        // Hat r spans [ext[r], ext[r+2]]; r = 1 is centred at 1.
        assert_eq!(g.basis_values(1.0), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn cubic_partition_of_unity() {
        let g = KnotGrid::uniform(-1.0, 1.0, 8, 3).unwrap();
        for i in 0..200 {
            let x = -1.0 + 2.0 * i as f64 / 200.0;
            let s: f64 = g.basis_values(x).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "x={x} sum={s}");
        }
    }

    #[test]
    fn grid_validation() {
        assert!(KnotGrid::new(vec![0.0], 3).is_err());
        assert!(KnotGrid::new(vec![0.0, 0.0, 1.0], 3).is_err());
        assert!(KnotGrid::new(vec![0.0, f64::NAN], 1).is_err());
        let g = KnotGrid::new(vec![0.0, 1.0, 3.0], 2).unwrap();
        assert_eq!(g.extended_knots(), &[-2.0, -1.0, 0.0, 1.0, 3.0, 5.0, 7.0]);
        assert_eq!(g.basis_count(), 4);
    }

    #[test]
    fn spline_trivial_values() {
        let g = KnotGrid::uniform(-1.0, 1.0, 4, 3).unwrap();
        let zero = edge(vec![0.0; 7], 1.0, 1.0, 1.0);
        let ones = edge(vec![1.0; 7], 1.0, 1.0, 1.0);
        for x in [-0.9, -0.1, 0.3, 0.99] {
            assert_eq!(zero.eval_spline(&g, x), 0.0);
            assert!((ones.eval_spline(&g, x) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn silu_values_and_registry() {
        assert_eq!(base_fn("silu", 0.0).unwrap(), 0.0);
        assert!((base_fn("silu", 20.0).unwrap() - 20.0).abs() < 1e-7);
        assert!(base_fn("silu", -20.0).unwrap().abs() < 1e-7);
        assert!(matches!(
            base_fn("relu", 1.0),
            Err(Error::UnsupportedBase(_))
        ));
    }

    #[test]
    fn edge_phi_branches() {
        let g = KnotGrid::uniform(-1.0, 1.0, 4, 3).unwrap();
        let x = 0.37;
        let off = edge(vec![0.3; 7], 1.0, 1.0, 0.0);
        assert_eq!(eval_edge_phi(&off, &g, "silu", x).unwrap(), 0.0);
        let base_only = edge(vec![0.3; 7], 1.0, 0.0, 1.0);
        assert_eq!(eval_edge_phi(&base_only, &g, "silu", x).unwrap(), silu(x));
        let spline_only = edge(vec![1.0; 7], 0.0, 1.0, 2.0);
        assert!((eval_edge_phi(&spline_only, &g, "silu", x).unwrap() - 2.0).abs() < 1e-12);
        assert!(eval_edge_phi(&spline_only, &g, "tanh", x).is_err());
    }

    #[test]
    fn layer_construction_checks_counts() {
        let g = KnotGrid::uniform(-1.0, 1.0, 4, 3).unwrap();
        let e = edge(vec![0.0; 7], 1.0, 1.0, 1.0);
        let err = KanLayerSpec::new(2, 2, g.clone(), vec![e.clone(); 3], BaseKind::Silu);
        assert!(matches!(
            err,
            Err(Error::EdgeCount {
                expected: 4,
                found: 3
            })
        ));
        let short = edge(vec![0.0; 6], 1.0, 1.0, 1.0);
        let err = KanLayerSpec::new(1, 1, g, vec![short], BaseKind::Silu);
        assert!(matches!(
            err,
            Err(Error::CoefficientCount {
                expected: 7,
                found: 6,
                ..
            })
        ));
    }

    #[test]
    fn layer_forward_sums_edges() {
        let g = KnotGrid::uniform(-1.0, 1.0, 4, 3).unwrap();
        let a = edge(vec![0.1, -0.2, 0.3, 0.0, 0.5, -0.1, 0.2], 0.7, 1.2, 0.9);
        let b = edge(vec![-0.3, 0.2, 0.1, 0.4, -0.5, 0.1, 0.0], 1.1, 0.8, 1.3);
        let layer =
            KanLayerSpec::new(2, 1, g.clone(), vec![a.clone(), b.clone()], BaseKind::Silu).unwrap();
        let x = [0.25, -0.6];
        let y = layer.forward(&x).unwrap();
        let expected = a.eval_phi(&g, BaseKind::Silu, x[0]) + b.eval_phi(&g, BaseKind::Silu, x[1]);
        assert_eq!(y, vec![expected]);
        assert!(matches!(
            layer.forward(&[0.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn json_round_trip_and_errors() {
        let g = KnotGrid::uniform(-1.0, 1.0, 2, 1).unwrap();
        let e = edge(vec![0.5, -0.25, 0.125], 1.0, 0.5, 2.0);
        let layer = KanLayerSpec::new(1, 1, g, vec![e], BaseKind::Silu).unwrap();
        let text = layer.to_json_string();
        assert_eq!(KanLayerSpec::from_json_str(&text).unwrap(), layer);
        assert_eq!(parse_model(&text).unwrap(), vec![layer.clone()]);

        let bad = text.replace("\"silu\"", "\"gelu\"");
        assert!(matches!(
            KanLayerSpec::from_json_str(&bad),
            Err(Error::UnsupportedBase(_))
        ));
    }
}
