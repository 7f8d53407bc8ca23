//! Hand-written differentiable building blocks for small dialogue models.
//!
//! Everything runs in `f64` on the CPU. Layers expose an explicit
//! `forward` returning a cache plus a `backward` that consumes it and
//! accumulates parameter gradients, so training loops stay explicit and
//! gradients can be verified against finite differences.

pub mod attention;
pub mod checkpoint;
pub mod config;
pub mod dropout;
pub mod error;
pub mod feed_forward;
pub mod gradcheck;
pub mod layer_norm;
pub mod linear;
pub mod loss;
pub mod lstm;
pub mod mlp;
pub mod optim;
pub mod param;
pub mod transformer;

pub use checkpoint::{Checkpoint, CheckpointHeader};
pub use config::ModelConfig;
pub use error::{NnError, Result};
pub use loss::{cross_entropy, CrossEntropy};
pub use optim::{AdamW, AdamWConfig};
pub use param::{Module, Param, ParamInit};
pub use transformer::{Decoder, DecoderInput, Encoder, EncoderInput, ForwardMode};
