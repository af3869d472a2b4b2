//! Gradient-guided state-space network for spectral reconstruction from RGB.
//!
//! The crate is generic over the scalar type (`f32`/`f64` via [`Scalar`]);
//! concrete `f64` aliases are exported at the root and used by the CLI.

pub mod scalar;
pub mod tensor;
pub mod tape;
pub mod params;
pub mod gradcheck;
pub mod scan;
pub mod vss;
pub mod attn;
pub mod model;
pub mod train;
pub mod metrics;
pub mod data;
pub mod verify;
pub mod bench;

pub use scalar::Scalar;
pub use tensor::Tensor;
pub use tape::{Tape, TapeError, Var};
pub use params::{BoundParams, ParamId, ParamSet};
pub use scan::{ScanElement, ScanImpl, ScanLayer, ScanParams};

/// Concrete 64-bit aliases; the training/eval pipeline runs on these.
pub type Tensor64 = Tensor<f64>;
pub type Tape64 = Tape<f64>;
pub type ParamSet64 = ParamSet<f64>;
pub type ScanParams64 = ScanParams<f64>;
