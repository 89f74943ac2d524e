//! Compilation and runtime contracts shared by the compiler, the runtime and
//! the on-disk artifact manifest.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! string_enum {
    (
        $(#[$meta:meta])*
        $name:ident, $field:literal { $($variant:ident => $text:literal),+ $(,)? }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(
                #[serde(rename = $text)]
                $variant,
            )+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text,)+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::UnknownVariant {
                        field: $field,
                        value: other.to_string(),
                    }),
                }
            }
        }
    };
}

string_enum!(
    /// Affine quantization variant.
    Scheme, "scheme" { Symmetric => "symmetric", Asymmetric => "asymmetric" }
);

string_enum!(
    /// Integer storage type of the quantized table.
    QuantDtype, "dtype" { Int8 => "int8", Uint8 => "uint8" }
);

string_enum!(
    /// What the table stores: the whole edge output or only the spline branch.
    ValueRepr, "value_repr" { Phi => "phi", SplineComponent => "spline_component" }
);

string_enum!(
    Interp, "interp" { Linear => "linear" }
);

string_enum!(
    /// Storage type of the per-segment `scale` and `y_min` arrays.
    ParamDtype, "param_dtype" { F32 => "float32", F16 => "float16" }
);

string_enum!(
    /// Whether `x == t_K` belongs to the domain.
    BoundaryMode, "boundary_mode" { HalfOpen => "half_open", Closed => "closed" }
);

string_enum!(
    /// Output rule for inputs outside the knot domain.
    OobPolicy, "oob_policy" { ClipX => "clip_x", ZeroSpline => "zero_spline" }
);

string_enum!(
    /// Optimization tier. Speed comparisons are only ever made within one tier.
    Tier, "tier" { Scalar => "scalar", Optimized => "optimized" }
);

string_enum!(
    BenchMode, "mode" { Steady => "steady", ColdStart => "cold_start" }
);

impl Scheme {
    /// The integer type each scheme is defined over.
    pub fn dtype(self) -> QuantDtype {
        match self {
            Scheme::Symmetric => QuantDtype::Int8,
            Scheme::Asymmetric => QuantDtype::Uint8,
        }
    }
}

impl QuantDtype {
    pub fn size_bytes(self) -> usize {
        1
    }
}

impl ParamDtype {
    pub fn size_bytes(self) -> usize {
        match self {
            ParamDtype::F32 => 4,
            ParamDtype::F16 => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantConfig {
    /// Samples per segment.
    #[serde(rename = "L")]
    pub samples: usize,
    pub scheme: Scheme,
    pub dtype: QuantDtype,
    pub value_repr: ValueRepr,
    pub interp: Interp,
    pub param_dtype: ParamDtype,
}

impl QuantConfig {
    pub fn new(samples: usize, scheme: Scheme) -> Self {
        QuantConfig {
            samples,
            scheme,
            dtype: scheme.dtype(),
            ..Default::default()
        }
    }

    pub fn with_value_repr(mut self, value_repr: ValueRepr) -> Self {
        self.value_repr = value_repr;
        self
    }

    pub fn with_param_dtype(mut self, param_dtype: ParamDtype) -> Self {
        self.param_dtype = param_dtype;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::InvalidConfig(format!(
                "L must be at least 2, got {}",
                self.samples
            )));
        }
        if self.scheme.dtype() != self.dtype {
            return Err(Error::InvalidConfig(format!(
                "scheme {} requires dtype {}, got {}",
                self.scheme,
                self.scheme.dtype(),
                self.dtype
            )));
        }
        Ok(())
    }
}

impl Default for QuantConfig {
    fn default() -> Self {
        QuantConfig {
            samples: 64,
            scheme: Scheme::Symmetric,
            dtype: QuantDtype::Int8,
            value_repr: ValueRepr::SplineComponent,
            interp: Interp::Linear,
            param_dtype: ParamDtype::F32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OobConfig {
    pub boundary_mode: BoundaryMode,
    pub oob_policy: OobPolicy,
}

impl OobConfig {
    pub fn new(boundary_mode: BoundaryMode, oob_policy: OobPolicy) -> Self {
        OobConfig {
            boundary_mode,
            oob_policy,
        }
    }

    /// All four boundary_mode x oob_policy combinations.
    pub fn matrix() -> [OobConfig; 4] {
        [
            OobConfig::new(BoundaryMode::Closed, OobPolicy::ClipX),
            OobConfig::new(BoundaryMode::Closed, OobPolicy::ZeroSpline),
            OobConfig::new(BoundaryMode::HalfOpen, OobPolicy::ClipX),
            OobConfig::new(BoundaryMode::HalfOpen, OobPolicy::ZeroSpline),
        ]
    }
}

impl Default for OobConfig {
    fn default() -> Self {
        OobConfig::new(BoundaryMode::Closed, OobPolicy::ClipX)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enum_strings_round_trip() {
        for m in BoundaryMode::ALL {
            assert_eq!(m.as_str().parse::<BoundaryMode>().unwrap(), *m);
        }
        assert_eq!("float16".parse::<ParamDtype>().unwrap(), ParamDtype::F16);
        let err = "open".parse::<BoundaryMode>().unwrap_err();
        assert!(err.to_string().contains("boundary_mode"));
    }

    #[test]
    fn scheme_dtype_pairing_is_enforced() {
        let mut cfg = QuantConfig::new(16, Scheme::Symmetric);
        cfg.validate().unwrap();
        cfg.dtype = QuantDtype::Uint8;
        assert!(cfg.validate().is_err());
        assert!(QuantConfig::new(1, Scheme::Asymmetric).validate().is_err());
    }

    #[test]
    fn serde_uses_manifest_names() {
        let cfg = QuantConfig::new(32, Scheme::Asymmetric);
        let json = serde_json::to_value(cfg).unwrap();
        assert_eq!(json["L"], 32);
        assert_eq!(json["dtype"], "uint8");
        assert_eq!(json["value_repr"], "spline_component");
    }
}
