//! Gaussian-process regression for 1-D fusion-style profiles.
//!
//! The crate generates synthetic tokamak-like profiles (L-mode, H-mode,
//! H-mode with an internal transport barrier), fits them with Gaussian
//! processes built on a change-point kernel and a choice of Gaussian or
//! heavy-tailed likelihoods, and benchmarks four fitting methods by RMSE
//! against the known truth. See the `examples/` directory for runnable
//! walkthroughs of each capability.

pub mod bench;
pub mod cli;
pub mod error;
pub mod gp;
pub mod inference;
pub mod kernels;
pub mod likelihoods;
pub mod profiles;
pub mod rng;
pub mod transform;

pub use error::{Error, Result};
