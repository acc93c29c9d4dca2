//! Data-driven pullback Riemannian geometry on `R^d`.
//!
//! A diffeomorphism `phi: R^d -> R^d` pulls the Euclidean structure back onto
//! `R^d`, giving closed-form geodesics, exponential/logarithmic maps, distances
//! and parallel transport. This crate provides
//!
//! - the [`diffeo::Diffeomorphism`] capability trait together with closed-form
//!   and learned implementations,
//! - constant-determinant normalizing flows ([`flow`]) for vector and image
//!   data, with analytic forward/inverse/JVP/VJP,
//! - the plain pullback mappings ([`geometry`]) and their isometrized
//!   counterparts ([`iso`]) that reparametrize geodesics to constant
//!   `l2`-speed,
//! - tangent-space rank-r approximation and evaluation metrics ([`analysis`]),
//! - flow training with Adam ([`train`]) and data generators/loaders
//!   ([`data`]).
//!
//! The numerical core is generic over the scalar type through [`scalar::Real`];
//! the end-to-end pipeline (flows, training, file formats) is fixed to `f64`,
//! for which the crate root exposes concrete aliases.

pub mod analysis;
pub mod data;
pub mod diffeo;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod iso;
pub mod linalg;
pub mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Real;

/// Scalar type used by the end-to-end pipeline.
pub type Scalar = f64;
/// A point in `R^d` with `f64` coordinates.
pub type Point = diffeo::Point<f64>;
/// A tangent vector with `f64` components.
pub type TangentVector = diffeo::TangentVector<f64>;
/// A column-major matrix with `f64` entries.
pub type Matrix = linalg::Matrix<f64>;
/// A discretized geodesic with `f64` samples.
pub type DiscreteGeodesic = iso::DiscreteGeodesic<f64>;
