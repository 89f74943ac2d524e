//! Lookup-table compilation and inference for Kolmogorov-Arnold network layers.

pub mod artifact;
pub mod artifact_io;
pub mod batch;
pub mod bench;
pub mod compiler;
pub mod config;
pub mod error;
pub mod metrics;
pub mod model_gen;
pub mod quant;
pub mod run;
pub mod runtime;
pub mod spline;
pub mod sweep;

pub use artifact::{ArtifactParts, EdgeScalars, LutLayerArtifact, QTable, FORMAT_VERSION};
pub use batch::Batch;
pub use compiler::{
    build_float_lut, compile_layer, compile_layer_threaded, compile_model, FloatLut,
};
pub use config::{
    BenchMode, BoundaryMode, Interp, OobConfig, OobPolicy, ParamDtype, QuantConfig, QuantDtype,
    Scheme, Tier, ValueRepr,
};
pub use error::{Error, Result};
pub use run::{run_cell, RunConfig, RunReport};
pub use runtime::{lut_model_forward, lut_model_forward_batch, OobStats};
pub use spline::{BaseKind, EdgeParams, KanLayerSpec, KnotGrid};
pub use sweep::{collect_results, run_sweep, SweepConfig};
