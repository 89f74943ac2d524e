//! Per-segment affine quantization.
//!
//! Every segment dequantizes with `v_hat = y_min + scale * q`. The symmetric
//! scheme fixes `y_min = 0` and uses `q in [-127, 127]`; the asymmetric scheme
//! stores `y_min = min v` and uses `q in [0, 255]`. Rounding is half away from
//! zero. A segment with no spread stores `scale = 0` and dequantizes to `y_min`.
//!
//! When parameters are destined for float32/float16 storage, the compiler
//! rounds `scale` up and `y_min` down to representable values first and then
//! derives `q` from the stored parameters, so the half-step bound
//! `|v_hat - v| <= scale / 2` holds for the values the runtime actually reads.

use half::f16;

use crate::config::{ParamDtype, Scheme};
use crate::error::{Error, Result};

pub const SYMMETRIC_QMAX: f64 = 127.0;
pub const ASYMMETRIC_QMAX: f64 = 255.0;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedSegment<Q> {
    pub q: Vec<Q>,
    pub scale: f64,
    pub y_min: f64,
}

impl<Q: Copy + Into<f64>> QuantizedSegment<Q> {
    pub fn dequantize(&self) -> Vec<f64> {
        self.q
            .iter()
            .map(|&q| dequantize(q.into(), self.scale, self.y_min))
            .collect()
    }
}

#[inline(always)]
pub fn dequantize(q: f64, scale: f64, y_min: f64) -> f64 {
    y_min + scale * q
}

/// Parameter precision used while quantizing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamPrecision {
    /// Keep float64 parameters as computed.
    Exact,
    /// Round parameters outward to the given storage type.
    Stored(ParamDtype),
}

impl ParamPrecision {
    fn up(self, x: f64) -> Result<f64> {
        let y = match self {
            ParamPrecision::Exact => x,
            ParamPrecision::Stored(ParamDtype::F32) => f32_up(x),
            ParamPrecision::Stored(ParamDtype::F16) => f16_up(x),
        };
        self.check(x, y)
    }

    fn down(self, x: f64) -> Result<f64> {
        let y = match self {
            ParamPrecision::Exact => x,
            ParamPrecision::Stored(ParamDtype::F32) => -f32_up(-x),
            ParamPrecision::Stored(ParamDtype::F16) => -f16_up(-x),
        };
        self.check(x, y)
    }

    fn check(self, x: f64, y: f64) -> Result<f64> {
        if y.is_finite() {
            Ok(y)
        } else {
            let dtype = match self {
                ParamPrecision::Stored(d) => d.as_str(),
                ParamPrecision::Exact => "float64",
            };
            Err(Error::ParamOverflow { value: x, dtype })
        }
    }
}

/// Smallest float32 value `>= x`, widened back to f64.
fn f32_up(x: f64) -> f64 {
    let y = x as f32;
    if (y as f64) < x {
        y.next_up() as f64
    } else {
        y as f64
    }
}

/// Smallest float16 value `>= x`, widened back to f64.
fn f16_up(x: f64) -> f64 {
    let y = f16::from_f64(x);
    if y.to_f64() >= x || y.is_nan() {
        return y.to_f64();
    }
    let bits = y.to_bits();
    let next = if bits == 0x8000 {
        0x0001
    } else if bits & 0x8000 == 0 {
        bits + 1
    } else {
        bits - 1
    };
    f16::from_bits(next).to_f64()
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(&value) => Err(Error::NonFinite {
            what: "table value",
            value,
        }),
        None => Ok(()),
    }
}

#[inline]
fn quantize_value(v: f64, scale: f64, y_min: f64, lo: f64, hi: f64) -> f64 {
    if scale == 0.0 {
        0.0
    } else {
        ((v - y_min) / scale).round().clamp(lo, hi)
    }
}

pub fn quantize_segment_symmetric(values: &[f64]) -> Result<QuantizedSegment<i8>> {
    quantize_symmetric_with(values, ParamPrecision::Exact)
}

pub fn quantize_segment_asymmetric(values: &[f64]) -> Result<QuantizedSegment<u8>> {
    quantize_asymmetric_with(values, ParamPrecision::Exact)
}

pub fn quantize_symmetric_with(
    values: &[f64],
    precision: ParamPrecision,
) -> Result<QuantizedSegment<i8>> {
    check_finite(values)?;
    let amax = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let scale = if amax == 0.0 {
        0.0
    } else {
        precision.up(amax / SYMMETRIC_QMAX)?
    };
    let q = values
        .iter()
        .map(|&v| quantize_value(v, scale, 0.0, -SYMMETRIC_QMAX, SYMMETRIC_QMAX) as i8)
        .collect();
    Ok(QuantizedSegment {
        q,
        scale,
        y_min: 0.0,
    })
}

pub fn quantize_asymmetric_with(
    values: &[f64],
    precision: ParamPrecision,
) -> Result<QuantizedSegment<u8>> {
    check_finite(values)?;
    let (vmin, vmax) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if values.is_empty() {
        return Ok(QuantizedSegment {
            q: Vec::new(),
            scale: 0.0,
            y_min: 0.0,
        });
    }
    let y_min = precision.down(vmin)?;
    let range = vmax - y_min;
    let scale = if range == 0.0 {
        0.0
    } else {
        precision.up(range / ASYMMETRIC_QMAX)?
    };
    let q = values
        .iter()
        .map(|&v| quantize_value(v, scale, y_min, 0.0, ASYMMETRIC_QMAX) as u8)
        .collect();
    Ok(QuantizedSegment { q, scale, y_min })
}

/// Scheme-dispatched quantization of one segment, with `q` widened to `i16`
/// so both integer types share a container.
pub(crate) fn quantize_segment(
    values: &[f64],
    scheme: Scheme,
    precision: ParamPrecision,
) -> Result<QuantizedSegment<i16>> {
    Ok(match scheme {
        Scheme::Symmetric => {
            let s = quantize_symmetric_with(values, precision)?;
            QuantizedSegment {
                q: s.q.into_iter().map(i16::from).collect(),
                scale: s.scale,
                y_min: s.y_min,
            }
        }
        Scheme::Asymmetric => {
            let s = quantize_asymmetric_with(values, precision)?;
            QuantizedSegment {
                q: s.q.into_iter().map(i16::from).collect(),
                scale: s.scale,
                y_min: s.y_min,
            }
        }
    })
}
