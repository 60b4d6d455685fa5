//! Causal exposure-response curves under unmeasured confounding, estimated
//! with a negative-control exposure Z and outcome W through a probit
//! stick-breaking mixture of linear regressions fitted by Gibbs sampling.

pub mod baselines;
pub mod config;
pub mod conjugate;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod fit;
pub mod gibbs;
pub mod identification;
pub mod matrix;
pub mod model;
pub mod normal;
pub mod psbp;
pub mod simulation;
pub mod stats;

pub use config::ModelConfig;
pub use data::Dataset;
pub use error::{Error, Result};
pub use fit::{fit, Fit};
pub use identification::{component_effect, component_intercept, CerfEstimate};
pub use model::OutcomeModel;
