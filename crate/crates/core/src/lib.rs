//! Prognosis benchmarking toolkit: penalized binary classifiers at a fixed
//! horizon against censored-survival models (Cox, cure, C-mix) bridged back to
//! the horizon question through their estimated survival functions.

pub mod binary;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod longitudinal;
pub mod nonparametric;
pub mod optim;
pub mod selection;
pub mod survival;

pub use error::{Error, Result};

/// Solver settings shared by every penalized fit.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Reweight the binary losses by inverse class frequency.
    pub balance_classes: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: optim::DEFAULT_TOL,
            max_iter: optim::DEFAULT_MAX_ITER,
            balance_classes: false,
        }
    }
}
