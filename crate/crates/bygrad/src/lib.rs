//! Byzantine-robust distributed training simulator with cyclic gradient
//! coding and compressed communication.
//!
//! Devices redundantly compute subset gradients selected by a cyclic task
//! matrix, average them into coded vectors, optionally compress them, and
//! a robust rule aggregates honest and adversarial uplinks at the server.
//! The crate pairs the simulator with the closed-form convergence
//! machinery and the enumeration/Monte Carlo oracles that verify it.
//!
//! Numeric kernels are generic over the scalar ([`scalar::Real`], `f32` or
//! `f64`); the simulator and the type aliases below fix `f64`, which is
//! what the verification tolerances assume.

pub mod aggregation;
pub mod analysis;
pub mod attacks;
pub mod coding;
pub mod compression;
pub mod config;
pub mod data;
pub mod error;
pub mod perm;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod vector;
pub mod verify;

pub use error::{Error, Result};

/// Working scalar of the shipped experiments.
pub type Scalar = f64;
/// Dense model/gradient vector over the working scalar.
pub type Vector = vector::ModelVector<Scalar>;
/// Training dataset over the working scalar.
pub type LinearRegressionData = data::Dataset<Scalar>;
/// Theory parameter bundle over the working scalar.
pub type Theory = analysis::TheoryParams<Scalar>;
/// Closed-form constants over the working scalar.
pub type Constants = analysis::TheoryConstants<Scalar>;
