//! Relapse-time prediction from biomarker panels, evaluated by apparent
//! Shannon information.
//!
//! Methods: a covariate-free exponential prior (the information zero point),
//! Cox proportional hazards with a Breslow baseline (blurred or not), a
//! constant-hazard Cox model, and a Bayesian skew-Student mixture over log
//! covariates and log relapse time.

pub mod cli;
pub mod constant_hazard;
pub mod cox;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod metrics;
pub mod mixture;
pub mod numeric;
pub mod persist;
pub mod prediction;
pub mod prior;
pub mod rng;
pub mod scenarios;
pub mod standardize;
pub mod synth;

pub use data::{load_cohort, save_cohort, Cohort, PatientRecord};
pub use error::{Error, Result};
pub use metrics::{BootConfig, Forecast, InfoReport};
pub use prediction::SurvivalPrediction;
pub use scenarios::{Method, Scenario};
