//! Heavy-tailed SGD and SGD-with-momentum on quadratic models: stable-noise
//! sampling, the two recursions, closed-form spectral stability bounds,
//! Wasserstein estimators and the studies that tie them together.
//!
//! The `htlab` binary exposes everything through [`cli`].

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod quadratic_theory;
pub mod rng;
pub mod stable_noise;
pub mod wasserstein;

pub use dynamics::{Algorithm, Dataset, GradientModel, NeighborPair, OptimizerConfig, TrajectoryState};
pub use error::{Error, Result};
pub use rng::RngStream;
pub use stable_noise::StableParams;
