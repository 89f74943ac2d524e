//! LUT inference.
//!
//! For an edge input `x` the runtime:
//!
//! 1. clamps `x' = clamp(x, t_0, t_K*)`, where `t_K* = t_K` (closed) or the
//!    largest float32 below `t_K` (half_open);
//! 2. picks `k = searchsorted_right(T, x') - 1`, clamped to `[0, K-1]`;
//! 3. computes `u = (x' - t_k) / (t_{k+1} - t_k)`;
//! 4. maps `z = u (L-1)`, `l0 = floor(z)`, `l1 = min(l0 + 1, L-1)`, `w = z - l0`;
//! 5. returns `(1 - w) v_hat[l0] + w v_hat[l1]` with `v_hat = y_min + scale * q`.
//!
//! Domain membership `m(x)` follows the boundary mode. Under `zero_spline`
//! the looked-up value is multiplied by `m(x)`; under `clip_x` it is not.
//! For `spline_component` artifacts only the spline branch is masked and the
//! base branch is evaluated analytically at the raw `x`.
//!
//! Note that step 4 spreads the `L` table entries over `[t_k, t_{k+1}]`
//! while compilation sampled them over `[t_k, t_{k+1} - Delta_k]`. The offset
//! is part of the approximation error and is kept as is.
//!
//! Arithmetic is float64. Non-finite inputs are rejected.

use serde::{Deserialize, Serialize};

use crate::artifact::{EdgeScalars, LutLayerArtifact, QTable};
use crate::batch::Batch;
use crate::compiler::FloatLut;
use crate::config::{BoundaryMode, OobPolicy, Tier};
use crate::error::{Error, Result};
use crate::spline::combine_phi;

/// OOB accounting. A sample counts as OOB when any of its input coordinates is.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OobStats {
    pub samples: usize,
    pub oob_samples: usize,
    pub coords: usize,
    pub oob_coords: usize,
}

impl OobStats {
    pub fn oob_any_frac(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.oob_samples as f64 / self.samples as f64
        }
    }

    pub fn merge(&mut self, other: &OobStats) {
        self.samples += other.samples;
        self.oob_samples += other.oob_samples;
        self.coords += other.coords;
        self.oob_coords += other.oob_coords;
    }

    fn record_sample(&mut self, coords: usize, oob_coords: usize) {
        self.samples += 1;
        self.coords += coords;
        self.oob_coords += oob_coords;
        if oob_coords > 0 {
            self.oob_samples += 1;
        }
    }
}

/// Domain membership `m(x)`.
pub fn in_domain(x: f64, knots: &[f32], mode: BoundaryMode) -> bool {
    let lo = knots[0] as f64;
    let hi = knots[knots.len() - 1] as f64;
    in_domain_bounds(x, lo, hi, mode)
}

#[inline(always)]
fn in_domain_bounds(x: f64, lo: f64, hi: f64, mode: BoundaryMode) -> bool {
    match mode {
        BoundaryMode::HalfOpen => x >= lo && x < hi,
        BoundaryMode::Closed => x >= lo && x <= hi,
    }
}

/// Step 1: clamp into `[t_0, t_K*]`.
pub fn safe_clip(x: f64, knots: &[f32], mode: BoundaryMode) -> f64 {
    let t_k = knots[knots.len() - 1];
    let upper = match mode {
        BoundaryMode::Closed => t_k as f64,
        BoundaryMode::HalfOpen => t_k.next_down() as f64,
    };
    x.max(knots[0] as f64).min(upper)
}

/// Step 2: `searchsorted(T, x', right) - 1`, clamped to `[0, K-1]`.
pub fn segment_index(knots: &[f32], x: f64) -> usize {
    let k = knots.len() - 1;
    knots
        .partition_point(|&t| t as f64 <= x)
        .saturating_sub(1)
        .min(k - 1)
}

/// Branch-free count of knots `<= x` (the right-bisect insertion point).
#[inline(always)]
fn upper_bound(knots: &[f64], x: f64) -> usize {
    let mut base = 0usize;
    let mut size = knots.len();
    while size > 1 {
        let half = size / 2;
        let mid = base + half;
        base += half * usize::from(knots[mid] <= x);
        size -= half;
    }
    base + usize::from(knots[base] <= x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpCoords {
    pub l0: usize,
    pub l1: usize,
    pub w: f64,
}

/// Steps 3 and 4 for `x'` inside segment `k`.
pub fn interp_coords(knots: &[f32], k: usize, x: f64, samples: usize) -> InterpCoords {
    coords_in(knots[k] as f64, knots[k + 1] as f64, x, samples)
}

#[inline(always)]
fn coords_in(t_k: f64, t_k1: f64, x: f64, samples: usize) -> InterpCoords {
    let u = (x - t_k) / (t_k1 - t_k);
    let z = u * (samples - 1) as f64;
    // z >= 0, so truncation is floor.
    let l0 = (z as usize).min(samples - 1);
    let l1 = (l0 + 1).min(samples - 1);
    InterpCoords {
        l0,
        l1,
        w: z - l0 as f64,
    }
}

/// Source of dequantized table entries, addressed by flat segment `e * K + k`.
pub trait SegmentTable {
    fn value(&self, seg: usize, l: usize) -> f64;

    /// `(1 - w) v[l0] + w v[l1]` within segment `seg`.
    #[inline(always)]
    fn lerp(&self, seg: usize, c: InterpCoords) -> f64 {
        (1.0 - c.w) * self.value(seg, c.l0) + c.w * self.value(seg, c.l1)
    }

    /// [`SegmentTable::lerp`] for every edge leaving input `i`, segment `k`.
    #[inline(always)]
    fn lerp_fanout(&self, i: usize, k: usize, k_count: usize, c: InterpCoords, out: &mut [f64]) {
        let m = out.len();
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.lerp((i * m + j) * k_count + k, c);
        }
    }
}

trait QValue: Copy {
    fn widen(self) -> f64;
}

impl QValue for i8 {
    #[inline(always)]
    fn widen(self) -> f64 {
        self as f64
    }
}

impl QValue for u8 {
    #[inline(always)]
    fn widen(self) -> f64 {
        self as f64
    }
}

struct QuantView<'a, Q> {
    q: &'a [Q],
    scale: &'a [f32],
    y_min: &'a [f32],
    samples: usize,
    fanout_q: &'a [Q],
    fanout_scale: &'a [f64],
    fanout_y_min: &'a [f64],
}

impl<Q: QValue> SegmentTable for QuantView<'_, Q> {
    #[inline(always)]
    fn value(&self, seg: usize, l: usize) -> f64 {
        self.y_min[seg] as f64 + self.scale[seg] as f64 * self.q[seg * self.samples + l].widen()
    }

    #[inline(always)]
    fn lerp(&self, seg: usize, c: InterpCoords) -> f64 {
        let y_min = self.y_min[seg] as f64;
        let scale = self.scale[seg] as f64;
        let row = &self.q[seg * self.samples..(seg + 1) * self.samples];
        let v0 = y_min + scale * row[c.l0].widen();
        let v1 = y_min + scale * row[c.l1].widen();
        (1.0 - c.w) * v0 + c.w * v1
    }

    #[inline(always)]
    fn lerp_fanout(&self, i: usize, k: usize, k_count: usize, c: InterpCoords, out: &mut [f64]) {
        let m = out.len();
        let seg_row = (i * k_count + k) * m;
        let scale = &self.fanout_scale[seg_row..][..m];
        let y_min = &self.fanout_y_min[seg_row..][..m];
        let q_base = (i * k_count + k) * self.samples;
        let q0 = &self.fanout_q[(q_base + c.l0) * m..][..m];
        let q1 = &self.fanout_q[(q_base + c.l1) * m..][..m];
        let (w0, w1) = (1.0 - c.w, c.w);
        let params = scale.iter().zip(y_min);
        for ((o, (&a, &y)), (&a0, &a1)) in out.iter_mut().zip(params).zip(q0.iter().zip(q1)) {
            let v0 = y + a * a0.widen();
            let v1 = y + a * a1.widen();
            *o = w0 * v0 + w1 * v1;
        }
    }
}

impl SegmentTable for FloatLut {
    #[inline(always)]
    fn value(&self, seg: usize, l: usize) -> f64 {
        self.values()[seg * self.samples() + l]
    }
}

#[derive(Clone, Copy)]
struct Located {
    k: usize,
    coords: InterpCoords,
    inside: bool,
}

/// Evaluator binding an artifact's metadata to a table source.
pub struct LutEval<'a, T> {
    art: &'a LutLayerArtifact,
    table: T,
}

impl<'a, T: SegmentTable> LutEval<'a, T> {
    /// [`Self::locate`] with the segment found by counting interior knots
    /// `<= x'`, which equals the clamped right-bisect index.
    #[inline(always)]
    fn locate_small(&self, x: f64) -> Located {
        let knots = self.art.knots_f64();
        if knots.len() > 33 {
            return self.locate(x);
        }
        let k_max = knots.len() - 2;
        let lo = knots[0];
        let inside = in_domain_bounds(x, lo, knots[k_max + 1], self.art.boundary_mode());
        let xc = x.max(lo).min(self.art.upper_star());
        let k = knots[1..=k_max]
            .iter()
            .map(|&t| usize::from(t <= xc))
            .sum::<usize>();
        Located {
            k,
            coords: coords_in(knots[k], knots[k + 1], xc, self.art.samples()),
            inside,
        }
    }

    fn locate(&self, x: f64) -> Located {
        let knots = self.art.knots_f64();
        let k_max = knots.len() - 2;
        let lo = knots[0];
        let hi = knots[k_max + 1];
        let inside = in_domain_bounds(x, lo, hi, self.art.boundary_mode());
        let xc = x.max(lo).min(self.art.upper_star());
        let k = upper_bound(knots, xc).saturating_sub(1).min(k_max);
        Located {
            k,
            coords: coords_in(knots[k], knots[k + 1], xc, self.art.samples()),
            inside,
        }
    }

    #[inline(always)]
    fn masked_value(&self, seg: usize, loc: &Located) -> f64 {
        let v = self.table.lerp(seg, loc.coords);
        match self.art.oob_policy() {
            OobPolicy::ClipX => v,
            OobPolicy::ZeroSpline => {
                if loc.inside {
                    v
                } else {
                    0.0
                }
            }
        }
    }

    #[inline(always)]
    fn phi_from(&self, e: usize, value: f64, x: f64) -> f64 {
        match self.art.edge_scalars() {
            None => value,
            Some(s) => phi_with(s, e, s.base_kind.eval(x), value),
        }
    }

    fn check_edge(&self, e: usize) -> Result<()> {
        let count = self.art.edge_count();
        if e >= count {
            return Err(Error::EdgeIndex { index: e, count });
        }
        Ok(())
    }

    /// Masked table value of edge `e` and whether `x` was out of the domain.
    pub fn eval_value(&self, e: usize, x: f64) -> Result<(f64, bool)> {
        self.check_edge(e)?;
        check_finite(x)?;
        let loc = self.locate(x);
        let seg = e * self.art.segments() + loc.k;
        Ok((self.masked_value(seg, &loc), !loc.inside))
    }

    pub fn eval_phi(&self, e: usize, x: f64) -> Result<f64> {
        let (v, _) = self.eval_value(e, x)?;
        Ok(self.phi_from(e, v, x))
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, OobStats)> {
        let d = self.art.in_dim();
        let m = self.art.out_dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: x.len(),
            });
        }
        let mut y = vec![0.0; m];
        let mut oob = 0;
        for (i, &xi) in x.iter().enumerate() {
            for (j, yj) in y.iter_mut().enumerate() {
                *yj += self.eval_phi(i * m + j, xi)?;
            }
            if !in_domain(xi, self.art.knots(), self.art.boundary_mode()) {
                oob += 1;
            }
        }
        let mut stats = OobStats::default();
        stats.record_sample(d, oob);
        Ok((y, stats))
    }

    pub fn forward_batch(&self, xs: &Batch, tier: Tier) -> Result<(Batch, OobStats)> {
        xs.expect_cols(self.art.in_dim())?;
        let mut out = Batch::zeros(xs.rows(), self.art.out_dim());
        let mut stats = OobStats::default();
        match tier {
            Tier::Scalar => {
                for (r, row) in xs.iter_rows().enumerate() {
                    let (y, s) = self.forward(row)?;
                    out.row_mut(r).copy_from_slice(&y);
                    stats.merge(&s);
                }
            }
            Tier::Optimized => {
                if let Some(&bad) = xs.as_slice().iter().find(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        what: "input",
                        value: bad,
                    });
                }
                self.forward_batch_optimized(xs, &mut out, &mut stats);
            }
        }
        Ok((out, stats))
    }

    /// Works one input column at a time: locate every row first, then run
    /// the `m` output edges of that input. Location, mask and base function
    /// are computed once per coordinate.
    fn forward_batch_optimized(&self, xs: &Batch, out: &mut Batch, stats: &mut OobStats) {
        let (n, d, m) = (xs.rows(), self.art.in_dim(), self.art.out_dim());
        let k_count = self.art.segments();
        let clip = self.art.oob_policy() == OobPolicy::ClipX;
        let scalars = self.art.edge_scalars();
        let edge = self.art.fanout().edge.as_ref();
        let x_all = xs.as_slice();
        let ys = out.as_mut_slice();

        let mut locs = vec![
            Located {
                k: 0,
                coords: InterpCoords {
                    l0: 0,
                    l1: 0,
                    w: 0.0
                },
                inside: true
            };
            n
        ];
        let mut base = vec![0.0; n];
        let mut oob = vec![0usize; n];
        let mut spline = vec![0.0; m];
        let spline = &mut spline[..m];
        for i in 0..d {
            for (r, loc) in locs.iter_mut().enumerate() {
                *loc = self.locate_small(x_all[r * d + i]);
            }
            for (o, l) in oob.iter_mut().zip(&locs) {
                *o += usize::from(!l.inside);
            }
            if let Some(s) = scalars {
                for (b, r) in base.iter_mut().zip(0..n) {
                    *b = s.base_kind.eval(x_all[r * d + i]);
                }
            }
            for ((loc, &b), y_row) in locs.iter().zip(&base).zip(ys.chunks_exact_mut(m)) {
                if clip || loc.inside {
                    self.table
                        .lerp_fanout(i, loc.k, k_count, loc.coords, spline);
                } else {
                    spline.fill(0.0);
                }
                match edge {
                    None => {
                        for (y, &sp) in y_row.iter_mut().zip(spline.iter()) {
                            *y += sp;
                        }
                    }
                    Some([so, sb, ss]) => {
                        let gains = so[i * m..][..m]
                            .iter()
                            .zip(&sb[i * m..][..m])
                            .zip(&ss[i * m..][..m]);
                        for ((y, &sp), ((&o, &gb), &gs)) in
                            y_row.iter_mut().zip(spline.iter()).zip(gains)
                        {
                            *y += combine_phi(o, gb, gs, b, sp);
                        }
                    }
                }
            }
        }
        for &o in &oob {
            stats.record_sample(d, o);
        }
    }
}

#[inline(always)]
fn phi_with(s: &EdgeScalars, e: usize, base: f64, spline: f64) -> f64 {
    combine_phi(
        s.out_scale[e] as f64,
        s.base_scale[e] as f64,
        s.spline_scale[e] as f64,
        base,
        spline,
    )
}

fn check_finite(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what: "input",
            value: x,
        })
    }
}

macro_rules! with_eval {
    ($art:expr, |$ev:ident| $body:expr) => {{
        let art: &LutLayerArtifact = $art;
        let fan = art.fanout();
        match (art.q_table(), &fan.q) {
            (QTable::Int8(q), QTable::Int8(fq)) => {
                let $ev = LutEval {
                    art,
                    table: QuantView {
                        q: q.as_slice(),
                        scale: art.scale(),
                        y_min: art.y_min(),
                        samples: art.samples(),
                        fanout_q: fq.as_slice(),
                        fanout_scale: &fan.scale,
                        fanout_y_min: &fan.y_min,
                    },
                };
                $body
            }
            (QTable::Uint8(q), QTable::Uint8(fq)) => {
                let $ev = LutEval {
                    art,
                    table: QuantView {
                        q: q.as_slice(),
                        scale: art.scale(),
                        y_min: art.y_min(),
                        samples: art.samples(),
                        fanout_q: fq.as_slice(),
                        fanout_scale: &fan.scale,
                        fanout_y_min: &fan.y_min,
                    },
                };
                $body
            }
            _ => unreachable!("fanout table is built from the same q_table"),
        }
    }};
}

impl LutLayerArtifact {
    pub fn eval_value(&self, e: usize, x: f64) -> Result<(f64, bool)> {
        with_eval!(self, |ev| ev.eval_value(e, x))
    }

    pub fn eval_phi(&self, e: usize, x: f64) -> Result<f64> {
        with_eval!(self, |ev| ev.eval_phi(e, x))
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, OobStats)> {
        with_eval!(self, |ev| ev.forward(x))
    }

    pub fn forward_batch(&self, xs: &Batch, tier: Tier) -> Result<(Batch, OobStats)> {
        with_eval!(self, |ev| ev.forward_batch(xs, tier))
    }

    /// Debug path: this artifact's metadata over an unquantized table.
    pub fn with_float_table<'a>(
        &'a self,
        table: &'a FloatLut,
    ) -> Result<LutEval<'a, &'a FloatLut>> {
        let expected = [self.edge_count(), self.segments(), self.samples()];
        let found = [table.edges(), table.segments(), table.samples()];
        if expected != found {
            return Err(Error::ShapeMismatch {
                name: "float table".into(),
                expected: expected.to_vec(),
                found: found.to_vec(),
            });
        }
        Ok(LutEval { art: self, table })
    }
}

impl<T: SegmentTable + ?Sized> SegmentTable for &T {
    #[inline(always)]
    fn value(&self, seg: usize, l: usize) -> f64 {
        (**self).value(seg, l)
    }
}

pub fn lut_eval_value(artifact: &LutLayerArtifact, e: usize, x: f64) -> Result<(f64, bool)> {
    artifact.eval_value(e, x)
}

pub fn lut_eval_phi(artifact: &LutLayerArtifact, e: usize, x: f64) -> Result<f64> {
    artifact.eval_phi(e, x)
}

pub fn lut_layer_forward(artifact: &LutLayerArtifact, x: &[f64]) -> Result<(Vec<f64>, OobStats)> {
    artifact.forward(x)
}

pub fn lut_layer_forward_batch(
    artifact: &LutLayerArtifact,
    xs: &Batch,
    tier: Tier,
) -> Result<(Batch, OobStats)> {
    artifact.forward_batch(xs, tier)
}

/// Run a chain of layers. Returns the output and per-layer OOB statistics.
pub fn lut_model_forward(
    artifacts: &[LutLayerArtifact],
    x: &[f64],
) -> Result<(Vec<f64>, Vec<OobStats>)> {
    check_chain(artifacts)?;
    let mut h = x.to_vec();
    let mut stats = Vec::with_capacity(artifacts.len());
    for (index, art) in artifacts.iter().enumerate() {
        let (y, s) = art.forward(&h).map_err(|e| Error::Layer {
            index,
            source: Box::new(e),
        })?;
        h = y;
        stats.push(s);
    }
    Ok((h, stats))
}

pub fn lut_model_forward_batch(
    artifacts: &[LutLayerArtifact],
    xs: &Batch,
    tier: Tier,
) -> Result<(Batch, Vec<OobStats>)> {
    check_chain(artifacts)?;
    let mut stats = Vec::with_capacity(artifacts.len());
    let mut h = xs.clone();
    for (index, art) in artifacts.iter().enumerate() {
        let (y, s) = art.forward_batch(&h, tier).map_err(|e| Error::Layer {
            index,
            source: Box::new(e),
        })?;
        h = y;
        stats.push(s);
    }
    Ok((h, stats))
}

fn check_chain(artifacts: &[LutLayerArtifact]) -> Result<()> {
    if artifacts.is_empty() {
        return Err(Error::EmptyChain);
    }
    for (index, pair) in artifacts.windows(2).enumerate() {
        if pair[0].out_dim() != pair[1].in_dim() {
            return Err(Error::ChainMismatch {
                index: index + 1,
                expected: pair[1].in_dim(),
                found: pair[0].out_dim(),
            });
        }
    }
    Ok(())
}
