//! Memory-protection codecs for floating-point neural-network parameters
//! and the Monte-Carlo fault-injection machinery used to compare them.

pub mod bitcodec;
pub mod campaign;
pub mod container;
pub mod error;
pub mod evalharness;
pub mod faultinj;
pub mod oracle;
pub mod schemes;
pub mod tensor;

pub use bitcodec::{FloatLayout, StorageFloat, Word};
pub use error::{Error, Result};
pub use schemes::{SchemeConfig, SchemeKind};
pub use tensor::Tensor;

/// Half-precision storage.
pub type Fp16 = half::f16;
/// Single-precision storage.
pub type Fp32 = f32;

/// Classifier stored in single precision.
pub type ModelF32 = evalharness::TinyModel<f32>;
/// Classifier stored in half precision.
pub type ModelF16 = evalharness::TinyModel<half::f16>;
