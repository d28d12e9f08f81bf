//! Bayesian matrix factorisation by Gibbs sampling.
//!
//! Sixteen models over partially observed matrices (Gaussian, nonnegative,
//! semi-nonnegative and Poisson families), an NMF baseline, and the
//! experiment protocols used to compare them.

pub mod data;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod linalg;
pub mod models;
pub mod rng;
pub mod samplers;
pub mod selftest;

pub use error::{Error, ErrorClass, Result};
