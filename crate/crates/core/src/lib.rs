//! Fourier-flavoured feedforward networks, their training loop, and numerical
//! checks of how fast truncated Fourier series converge.

pub mod activations;
pub mod datasets;
pub mod error;
pub mod fourier;
pub mod models;
pub mod numerics;
pub mod scrn;
pub mod training;

#[cfg(test)]
mod gradcheck;

pub use datasets::{MnistDataset, RadialMode, RegressionDataset, Split, SyntheticTask};
pub use error::{Error, Result};
pub use models::{Architecture, ClassifierHead, Gradients, Parameterized, RegressionNet};
pub use numerics::{derive_seed, LogLogFit, Matrix, Rng};
pub use scrn::{LmConfig, ScrnParams};
pub use training::{TrainConfig, TrainOutcome, TuneOutcome};
