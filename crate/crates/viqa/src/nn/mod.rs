//! Minimal trainable network substrate: dense and strided conv layers,
//! elementwise activations, global average pooling, analytic backprop with a
//! guided variant, Adam, finite-difference gradient checking, and a
//! self-describing serialization container.

mod adam;
mod gradcheck;
mod layer;
mod network;
mod serial;
mod tensor;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use gradcheck::{grad_check, GradCheckReport, QuadraticLoss, ScalarLoss};
pub use layer::{Layer, LayerGrad};
pub use network::{he_xavier_init, NetGrads, Network, Trace};
pub use serial::{read_network, write_network, SliceReader};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("network too large for finite differences: {count} params (limit {limit})")]
    TooManyParams { count: usize, limit: usize },
    #[error("serialization: {0}")]
    Serialization(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}
