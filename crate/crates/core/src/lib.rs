//! Perturbed gradient descent with uncorrelated and anticorrelated noise,
//! analytic loss landscapes, recursion oracles and flatness diagnostics.

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod landscapes;
pub mod linalg;
pub mod noise;
pub mod optimizers;
pub mod oracle;
pub mod seed;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
