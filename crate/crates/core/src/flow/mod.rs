//! Constant-determinant normalizing flows.
//!
//! A flow is a stack of blocks, each composing an invertible linear map
//! (actnorm plus Householder reflections for vectors, or actnorm plus two
//! masked invertible convolutions for images) with an additive coupling. All
//! pieces except actnorm are volume preserving, so `log |det|` is a constant
//! independent of the input and the flow is a valid pullback diffeomorphism
//! everywhere.

pub mod activation;
pub mod checkpoint;
pub mod config;
pub mod layers;
pub mod mask;
pub mod model;

pub use checkpoint::{load, save, Checkpoint};
pub use config::{FlowConfig, VectorCouplingSpec};
pub use model::{build_flow, FlowModel, Layer};
