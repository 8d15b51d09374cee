//! Random-effects meta-analysis and meta-regression.
//!
//! The between-study variance can be estimated by DerSimonian & Laird,
//! maximum likelihood, or maximum penalized likelihood, where the penalty
//! removes the first-order bias of the likelihood estimator (and coincides
//! with restricted maximum likelihood). Inference on the fixed effects uses
//! Wald intervals, profile (penalized) deviance intervals and penalized
//! deviance tests. The [`simulation`] module reproduces coverage studies.

pub mod cli;
pub mod distributions;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod model;
mod roots;
pub mod simulation;

pub use error::{MetaError, Result};
pub use estimators::{fit_dl, fit_ml, fit_mpl, FitOptions, FitResult, Method};

pub use inference::{
    chi2_survival, penalized_deviance_test, profile_interval, wald_interval, IntervalMethod,
    IntervalResult, TestResult,
};
pub use model::{MetaDataset, StudyRecord, Theta};
