//! Bayesian generative model over joint log-covariates and log relapse time.
//!
//! The true log-values of a patient are drawn from a finite mixture of
//! multivariate skew-Student components with diagonal scales,
//!
//! ```text
//! z = ξ_k + (δ_k |u| + σ_k ⊙ ε) / √g,   u, ε ~ N(0, 1),  g ~ Gamma(ν_k/2, ν_k/2),
//! ```
//!
//! observations differ from `z` by Student noise, and follow-up is censored
//! at an independent log-normal time. Training draws posterior samples by
//! MCMC; prediction averages the conditional density of log time given the
//! covariates over those samples.

mod density;
mod predictive;
mod sampler;

pub use density::{
    component_log_density, joint_log_density, LogDensity, SkewStudentPart,
};
pub use predictive::{predictive_curve, predictive_total_mass, predictive_log_time_density};
pub use sampler::{run_mcmc, run_mcmc_from};

use serde::{Deserialize, Serialize};

use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::numeric::median;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Number of mixture components K.
    pub components: usize,
    /// Dirichlet concentration α; weights are Dirichlet(α/K, …, α/K).
    pub concentration: f64,
    /// Per-dimension prior mean of component locations (covariates, then log time).
    pub location_mean: Vec<f64>,
    pub location_sd: Vec<f64>,
    /// Inverse-gamma shape of σ².
    pub scale_shape: f64,
    /// Inverse-gamma scale of σ², per dimension.
    pub scale_rate: Vec<f64>,
    pub skew_sd: Vec<f64>,
    /// ν − dof_min ~ Exponential(dof_rate).
    pub dof_rate: f64,
    pub dof_min: f64,
    pub noise_scale: f64,
    pub noise_dof: f64,
    pub censor_mu_mean: f64,
    pub censor_mu_sd: f64,
    /// Half-normal scale of σ_c.
    pub censor_sigma_scale: f64,
}

impl HyperParams {
    /// Empirical-Bayes defaults from training log-values: location prior
    /// centred on the median with sd max(IQR, 0.5); σ² prior scale equal to
    /// the sample variance.
    pub fn empirical(train: &Cohort) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Config("cannot derive hyperparameters from an empty cohort".into()));
        }
        let dims = train.width() + 1;
        let columns: Vec<Vec<f64>> = (0..dims)
            .map(|j| {
                train
                    .patients()
                    .iter()
                    .map(|p| if j < train.width() { p.covariates[j].ln() } else { p.time_months.ln() })
                    .collect()
            })
            .collect();
        let mut location_mean = Vec::with_capacity(dims);
        let mut location_sd = Vec::with_capacity(dims);
        let mut scale_rate = Vec::with_capacity(dims);
        for col in &columns {
            let mut sorted = col.clone();
            sorted.sort_by(f64::total_cmp);
            let iqr = crate::numeric::quantile_sorted(&sorted, 0.75) - crate::numeric::quantile_sorted(&sorted, 0.25);
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = if n > 1.0 { col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
            location_mean.push(median(col));
            location_sd.push(iqr.max(0.5));
            scale_rate.push(var.max(0.01));
        }
        let time_mean = location_mean[dims - 1];
        Ok(Self {
            components: 5,
            concentration: 1.0,
            skew_sd: location_sd.clone(),
            location_mean,
            location_sd,
            scale_shape: 2.0,
            scale_rate,
            dof_rate: 0.1,
            dof_min: 2.0,
            noise_scale: 0.1,
            noise_dof: 4.0,
            censor_mu_mean: time_mean,
            censor_mu_sd: 5.0,
            censor_sigma_scale: 2.0,
        })
    }

    pub fn dims(&self) -> usize {
        self.location_mean.len()
    }

    pub fn validate(&self, dims: usize) -> Result<()> {
        let vectors = [&self.location_mean, &self.location_sd, &self.scale_rate, &self.skew_sd];
        if vectors.iter().any(|v| v.len() != dims) {
            return Err(Error::Config(format!("hyperparameter vectors must have {dims} entries")));
        }
        let positive = self.location_sd.iter().chain(&self.scale_rate).chain(&self.skew_sd).all(|&v| v > 0.0)
            && self.concentration > 0.0
            && self.scale_shape > 0.0
            && self.dof_rate > 0.0
            && self.noise_scale > 0.0
            && self.noise_dof > 0.0
            && self.censor_mu_sd > 0.0
            && self.censor_sigma_scale > 0.0;
        if self.components == 0 || !positive || self.dof_min < 0.0 {
            return Err(Error::Config("K must be at least 1 and all scales positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    /// ξ per dimension.
    pub location: Vec<f64>,
    /// σ per dimension.
    pub scale: Vec<f64>,
    /// δ per dimension.
    pub skew: Vec<f64>,
    /// ν.
    pub dof: f64,
}

/// Per-patient latent state, aligned with `ids`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latents {
    pub ids: Vec<String>,
    pub assignment: Vec<usize>,
    /// |u| of the skew representation.
    pub skew_latent: Vec<f64>,
    /// g of the scale-mixture representation.
    pub tail_latent: Vec<f64>,
    /// True log-values z (covariates, then log relapse time).
    pub true_values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSample {
    pub weights: Vec<f64>,
    pub components: Vec<Component>,
    pub censor_mu: f64,
    pub censor_sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latents: Option<Latents>,
}

impl MixtureSample {
    pub fn dims(&self) -> usize {
        self.components[0].location.len()
    }

    pub fn without_latents(&self) -> Self {
        Self { latents: None, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() || self.weights.len() != self.components.len() {
            return Err(Error::Domain("weights and components must have equal, nonzero length".into()));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Domain(format!("weights must lie on the simplex (sum {sum})")));
        }
        let d = self.dims();
        for c in &self.components {
            if c.location.len() != d || c.scale.len() != d || c.skew.len() != d {
                return Err(Error::Domain("component dimension mismatch".into()));
            }
            if c.scale.iter().any(|&s| !(s > 0.0 && s.is_finite())) || !(c.dof >= 2.0 && c.dof.is_finite()) {
                return Err(Error::Domain("component scales must be positive and dof >= 2".into()));
            }
        }
        if !(self.censor_sigma > 0.0) || !self.censor_mu.is_finite() {
            return Err(Error::Domain("censoring parameters invalid".into()));
        }
        if let Some(l) = &self.latents {
            if l.tail_latent.iter().any(|&g| !(g > 0.0)) || l.skew_latent.iter().any(|&u| u < 0.0) {
                return Err(Error::Domain("latent g must be positive and u non-negative".into()));
            }
            if l.assignment.iter().any(|&c| c >= self.components.len()) {
                return Err(Error::Domain("assignment out of range".into()));
            }
        }
        Ok(())
    }
}

/// Blocks held fixed during sampling.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Clamp {
    /// Hold every ν at this value.
    #[serde(default)]
    pub fixed_dof: Option<f64>,
    /// Hold every δ at zero.
    #[serde(default)]
    pub zero_skew: bool,
    /// Hold ξ, σ, δ and ν at their initial values.
    #[serde(default)]
    pub freeze_components: bool,
    /// Hold z, u and g at their initial values.
    #[serde(default)]
    pub freeze_latents: bool,
    /// Hold only z at its initial value; u, g and assignments still move.
    #[serde(default)]
    pub freeze_true_values: bool,
    #[serde(default)]
    pub freeze_censoring: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub burn_in: usize,
    pub samples: usize,
    pub thin: usize,
    pub seed: u64,
    pub target_acceptance: f64,
    #[serde(default)]
    pub clamp: Clamp,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { burn_in: 5000, samples: 500, thin: 10, seed: 0, target_acceptance: 0.234, clamp: Clamp::default() }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in == 0 || self.samples == 0 || self.thin == 0 {
            return Err(Error::Config("burn-in, sample count and thinning must all be at least 1".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Config("target acceptance must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Patient data in the sampler's coordinates, sorted by id.
#[derive(Debug, Clone)]
pub(crate) struct LogData {
    pub ids: Vec<String>,
    /// Observed log-values: covariates then log time.
    pub values: Vec<Vec<f64>>,
    pub relapsed: Vec<bool>,
}

impl LogData {
    pub fn new(cohort: &Cohort) -> Self {
        let mut patients: Vec<_> = cohort.patients().iter().collect();
        patients.sort_by(|a, b| a.id.cmp(&b.id));
        Self {
            ids: patients.iter().map(|p| p.id.clone()).collect(),
            values: patients
                .iter()
                .map(|p| p.covariates.iter().map(|x| x.ln()).chain(std::iter::once(p.time_months.ln())).collect())
                .collect(),
            relapsed: patients.iter().map(|p| p.relapsed).collect(),
        }
    }

    pub fn dims(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }
}
