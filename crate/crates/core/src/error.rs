use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid knot grid: {0}")]
    InvalidGrid(String),

    #[error("edge {edge}: expected {expected} spline coefficients, found {found}")]
    CoefficientCount {
        edge: usize,
        expected: usize,
        found: usize,
    },

    #[error("layer has {found} edges, expected in_dim * out_dim = {expected}")]
    EdgeCount { expected: usize, found: usize },

    #[error("unsupported base function `{0}`")]
    UnsupportedBase(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },

    #[error("quantization parameter {value} does not fit in {dtype}")]
    ParamOverflow { value: f64, dtype: &'static str },

    #[error("edge index {index} out of range for {count} edges")]
    EdgeIndex { index: usize, count: usize },

    #[error("layer {index}: {source}")]
    Layer {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("layer {index} expects {expected} inputs but the previous layer produces {found}")]
    ChainMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("model chain is empty")]
    EmptyChain,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest is missing key `{0}`")]
    MissingKey(String),

    #[error("unknown value `{value}` for `{field}`")]
    UnknownVariant { field: &'static str, value: String },

    #[error("shape mismatch for `{name}`: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("unsupported format version `{0}`")]
    UnsupportedVersion(String),

    #[error("corrupt blob `{name}`: {reason}")]
    CorruptBlob { name: String, reason: String },

    #[error("invalid artifact: {0}")]
    InvalidArtifact(String),

    #[error("corrupt archive: {0}")]
    CorruptArchive(String),

    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed config: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable identifier used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::CoefficientCount { .. } => "coefficient_count",
            Error::EdgeCount { .. } => "edge_count",
            Error::UnsupportedBase(_) => "unsupported_base",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidConfig(_) => "invalid_config",
            Error::NonFinite { .. } => "non_finite",
            Error::ParamOverflow { .. } => "param_overflow",
            Error::EdgeIndex { .. } => "edge_index",
            Error::Layer { source, .. } => source.kind(),
            Error::ChainMismatch { .. } => "chain_mismatch",
            Error::EmptyChain => "empty_chain",
            Error::Io { .. } => "io",
            Error::MissingKey(_) => "missing_key",
            Error::UnknownVariant { .. } => "unknown_variant",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::UnsupportedVersion(_) => "unsupported_version",
            Error::CorruptBlob { .. } => "corrupt_blob",
            Error::InvalidArtifact(_) => "invalid_artifact",
            Error::CorruptArchive(_) => "corrupt_archive",
            Error::Json(_) => "json",
            Error::Config(_) => "config",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
