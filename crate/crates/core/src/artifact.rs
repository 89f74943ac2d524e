//! Compiled per-layer lookup-table artifact.

use half::f16;

use crate::config::{
    BoundaryMode, Interp, OobConfig, OobPolicy, ParamDtype, QuantConfig, QuantDtype, Scheme,
    ValueRepr,
};
use crate::error::{Error, Result};
use crate::spline::BaseKind;

pub const FORMAT_VERSION: &str = "lutkan/1";

/// Quantized table `[E, K, L]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub enum QTable {
    Int8(Vec<i8>),
    Uint8(Vec<u8>),
}

impl QTable {
    pub fn len(&self) -> usize {
        match self {
            QTable::Int8(q) => q.len(),
            QTable::Uint8(q) => q.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> QuantDtype {
        match self {
            QTable::Int8(_) => QuantDtype::Int8,
            QTable::Uint8(_) => QuantDtype::Uint8,
        }
    }

    pub fn get(&self, idx: usize) -> i16 {
        match self {
            QTable::Int8(q) => q[idx].into(),
            QTable::Uint8(q) => q[idx].into(),
        }
    }
}

/// Per-edge scalars needed to rebuild `phi` from a stored spline branch.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeScalars {
    pub base_kind: BaseKind,
    pub base_scale: Vec<f32>,
    pub spline_scale: Vec<f32>,
    pub out_scale: Vec<f32>,
}

/// Everything needed to assemble an artifact; validated by [`LutLayerArtifact::from_parts`].
#[derive(Debug, Clone)]
pub struct ArtifactParts {
    pub in_dim: usize,
    pub out_dim: usize,
    pub samples: usize,
    pub knots: Vec<f32>,
    pub q_table: QTable,
    pub scale: Vec<f32>,
    pub y_min: Vec<f32>,
    pub scheme: Scheme,
    pub param_dtype: ParamDtype,
    pub value_repr: ValueRepr,
    pub interp: Interp,
    pub oob: OobConfig,
    pub edge_scalars: Option<EdgeScalars>,
}

#[derive(Debug, Clone)]
pub struct LutLayerArtifact {
    parts: ArtifactParts,
    segments: usize,
    // Runtime-only data, derived from `parts` and never serialized.
    knots_f64: Vec<f64>,
    upper_star: f64,
    fanout: Fanout,
}

/// The table regrouped so the `m` edges leaving one input are adjacent:
/// `q` as `[d, K, L, m]`, `scale` and `y_min` as `[d, K, m]`.
/// Float parameters are widened to f64 once at load.
#[derive(Debug, Clone)]
pub(crate) struct Fanout {
    pub q: QTable,
    pub scale: Vec<f64>,
    pub y_min: Vec<f64>,
    /// `(out_scale, base_scale, spline_scale)` per edge.
    pub edge: Option<[Vec<f64>; 3]>,
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn regroup<T: Copy + Default>(src: &[T], d: usize, m: usize, k: usize, l: usize) -> Vec<T> {
    let mut out = vec![T::default(); src.len()];
    for i in 0..d {
        for j in 0..m {
            let e = i * m + j;
            for kk in 0..k {
                for ll in 0..l {
                    out[((i * k + kk) * l + ll) * m + j] = src[(e * k + kk) * l + ll];
                }
            }
        }
    }
    out
}

impl Fanout {
    fn new(p: &ArtifactParts, k: usize) -> Self {
        let (d, m, l) = (p.in_dim, p.out_dim, p.samples);
        let q = match &p.q_table {
            QTable::Int8(q) => QTable::Int8(regroup(q, d, m, k, l)),
            QTable::Uint8(q) => QTable::Uint8(regroup(q, d, m, k, l)),
        };
        Fanout {
            q,
            scale: widen(&regroup(&p.scale, d, m, k, 1)),
            y_min: widen(&regroup(&p.y_min, d, m, k, 1)),
            edge: p.edge_scalars.as_ref().map(|s| {
                [
                    widen(&s.out_scale),
                    widen(&s.base_scale),
                    widen(&s.spline_scale),
                ]
            }),
        }
    }
}

impl PartialEq for LutLayerArtifact {
    fn eq(&self, other: &Self) -> bool {
        let (a, b) = (&self.parts, &other.parts);
        a.in_dim == b.in_dim
            && a.out_dim == b.out_dim
            && a.samples == b.samples
            && a.knots == b.knots
            && a.q_table == b.q_table
            && a.scale == b.scale
            && a.y_min == b.y_min
            && a.scheme == b.scheme
            && a.param_dtype == b.param_dtype
            && a.value_repr == b.value_repr
            && a.interp == b.interp
            && a.oob == b.oob
            && a.edge_scalars == b.edge_scalars
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArtifact(msg.into())
}

fn check_len(name: &str, found: usize, expected: &[usize]) -> Result<()> {
    if found != expected.iter().product::<usize>() {
        return Err(Error::ShapeMismatch {
            name: name.to_string(),
            expected: expected.to_vec(),
            found: vec![found],
        });
    }
    Ok(())
}

fn check_params(name: &str, values: &[f32], dtype: ParamDtype) -> Result<()> {
    for &v in values {
        if !v.is_finite() {
            return Err(invalid(format!("{name} contains non-finite value {v}")));
        }
        if dtype == ParamDtype::F16 && f16::from_f32(v).to_f32() != v {
            return Err(invalid(format!(
                "{name} value {v} is not representable in float16"
            )));
        }
    }
    Ok(())
}

impl LutLayerArtifact {
    pub fn from_parts(parts: ArtifactParts) -> Result<Self> {
        if parts.in_dim == 0 || parts.out_dim == 0 {
            return Err(invalid("in_dim and out_dim must be positive"));
        }
        if parts.knots.len() < 2 {
            return Err(invalid("need at least two knots"));
        }
        if parts.knots.iter().any(|t| !t.is_finite())
            || parts.knots.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(invalid("knots must be finite and strictly increasing"));
        }
        if parts.samples < 2 {
            return Err(invalid(format!(
                "L must be at least 2, got {}",
                parts.samples
            )));
        }
        let e = parts.in_dim * parts.out_dim;
        let k = parts.knots.len() - 1;
        let l = parts.samples;
        check_len("q_table", parts.q_table.len(), &[e, k, l])?;
        check_len("scale", parts.scale.len(), &[e, k])?;
        check_len("y_min", parts.y_min.len(), &[e, k])?;
        if parts.q_table.dtype() != parts.scheme.dtype() {
            return Err(invalid(format!(
                "scheme {} requires dtype {}, table is {}",
                parts.scheme,
                parts.scheme.dtype(),
                parts.q_table.dtype()
            )));
        }
        if let QTable::Int8(q) = &parts.q_table {
            if q.contains(&i8::MIN) {
                return Err(invalid("symmetric table contains -128"));
            }
        }
        check_params("scale", &parts.scale, parts.param_dtype)?;
        check_params("y_min", &parts.y_min, parts.param_dtype)?;
        if parts.scale.iter().any(|&s| s < 0.0) {
            return Err(invalid("scale must be non-negative"));
        }
        if parts.scheme == Scheme::Symmetric && parts.y_min.iter().any(|&y| y != 0.0) {
            return Err(invalid("symmetric scheme requires y_min == 0"));
        }
        match (parts.value_repr, &parts.edge_scalars) {
            (ValueRepr::Phi, None) => {}
            (ValueRepr::Phi, Some(_)) => {
                return Err(invalid("edge scalars are only stored for spline_component"));
            }
            (ValueRepr::SplineComponent, None) => {
                return Err(Error::MissingKey("edge_base_scale".into()));
            }
            (ValueRepr::SplineComponent, Some(s)) => {
                for (name, v) in [
                    ("edge_base_scale", &s.base_scale),
                    ("edge_spline_scale", &s.spline_scale),
                    ("edge_out_scale", &s.out_scale),
                ] {
                    check_len(name, v.len(), &[e])?;
                    check_params(name, v, ParamDtype::F32)?;
                }
            }
        }

        let knots_f64: Vec<f64> = parts.knots.iter().map(|&t| t as f64).collect();
        let t_k = parts.knots[k];
        let upper_star = match parts.oob.boundary_mode {
            BoundaryMode::Closed => t_k as f64,
            BoundaryMode::HalfOpen => t_k.next_down() as f64,
        };
        let fanout = Fanout::new(&parts, k);
        Ok(LutLayerArtifact {
            parts,
            segments: k,
            knots_f64,
            upper_star,
            fanout,
        })
    }

    pub fn parts(&self) -> &ArtifactParts {
        &self.parts
    }

    pub fn into_parts(self) -> ArtifactParts {
        self.parts
    }

    pub fn in_dim(&self) -> usize {
        self.parts.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.parts.out_dim
    }

    pub fn edge_count(&self) -> usize {
        self.parts.in_dim * self.parts.out_dim
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn samples(&self) -> usize {
        self.parts.samples
    }

    pub fn knots(&self) -> &[f32] {
        &self.parts.knots
    }

    pub(crate) fn knots_f64(&self) -> &[f64] {
        &self.knots_f64
    }

    pub(crate) fn fanout(&self) -> &Fanout {
        &self.fanout
    }

    /// Upper clamp bound `t_K*` used for indexing.
    pub fn upper_star(&self) -> f64 {
        self.upper_star
    }

    pub fn q_table(&self) -> &QTable {
        &self.parts.q_table
    }

    pub fn scale(&self) -> &[f32] {
        &self.parts.scale
    }

    pub fn y_min(&self) -> &[f32] {
        &self.parts.y_min
    }

    pub fn scheme(&self) -> Scheme {
        self.parts.scheme
    }

    pub fn dtype(&self) -> QuantDtype {
        self.parts.q_table.dtype()
    }

    pub fn param_dtype(&self) -> ParamDtype {
        self.parts.param_dtype
    }

    pub fn value_repr(&self) -> ValueRepr {
        self.parts.value_repr
    }

    pub fn interp(&self) -> Interp {
        self.parts.interp
    }

    /// Compilation settings recorded in this artifact.
    pub fn quant_config(&self) -> QuantConfig {
        QuantConfig {
            samples: self.parts.samples,
            scheme: self.parts.scheme,
            dtype: self.dtype(),
            value_repr: self.parts.value_repr,
            interp: self.parts.interp,
            param_dtype: self.parts.param_dtype,
        }
    }

    pub fn oob(&self) -> OobConfig {
        self.parts.oob
    }

    pub fn boundary_mode(&self) -> BoundaryMode {
        self.parts.oob.boundary_mode
    }

    pub fn oob_policy(&self) -> OobPolicy {
        self.parts.oob.oob_policy
    }

    pub fn edge_scalars(&self) -> Option<&EdgeScalars> {
        self.parts.edge_scalars.as_ref()
    }

    pub fn format_version(&self) -> &'static str {
        FORMAT_VERSION
    }

    /// Dequantized table entry `(e, k, l)`.
    pub fn dequantized(&self, e: usize, k: usize, l: usize) -> f64 {
        let seg = e * self.segments + k;
        let q = self.parts.q_table.get(seg * self.parts.samples + l);
        crate::quant::dequantize(
            q.into(),
            self.parts.scale[seg] as f64,
            self.parts.y_min[seg] as f64,
        )
    }

    /// Same artifact with different OOB semantics; tables are shared verbatim.
    pub fn with_oob(&self, oob: OobConfig) -> Result<Self> {
        let mut parts = self.parts.clone();
        parts.oob = oob;
        Self::from_parts(parts)
    }
}
