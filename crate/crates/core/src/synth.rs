//! Synthetic cohorts with known ground truth.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{default_schema, Cohort, PatientRecord};
use crate::error::{Error, Result};
use crate::rng;

const DEFAULT_LOG_MEAN: [f64; 12] = [1.87, 1.79, 1.10, 3.40, 5.30, 6.40, 1.61, -0.11, 3.40, 0.92, 1.87, 0.53];
const DEFAULT_LOG_SD: [f64; 12] = [0.6, 0.5, 0.6, 0.4, 0.6, 0.4, 0.4, 0.5, 0.5, 0.4, 0.12, 0.35];

/// Proportional-hazards generator settings. Log-covariates are normal;
/// the event hazard is `lambda * exp(beta · standardized log-covariates)`,
/// standardized with the generating means and sds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub censor_mu: f64,
    pub censor_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariate_log_mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariate_log_sd: Option<Vec<f64>>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 400,
            beta: vec![0.5, 0.0, 0.3, 0.0, 0.0, -0.3, 0.0, 0.2, 0.0, 0.0, 0.4, 0.2],
            lambda: 0.01,
            censor_mu: (60f64).ln(),
            censor_sigma: 0.5,
            seed: 0,
            schema: None,
            covariate_log_mean: None,
            covariate_log_sd: None,
        }
    }
}

impl SynthConfig {
    pub fn schema(&self) -> Vec<String> {
        self.schema.clone().unwrap_or_else(default_schema)
    }

    /// Generating (mean, sd) of each log-covariate.
    pub fn covariate_law(&self) -> (Vec<f64>, Vec<f64>) {
        let width = self.schema().len();
        let pick = |given: &Option<Vec<f64>>, defaults: &[f64], fallback: f64| {
            given.clone().unwrap_or_else(|| {
                if width == defaults.len() {
                    defaults.to_vec()
                } else {
                    vec![fallback; width]
                }
            })
        };
        (pick(&self.covariate_log_mean, &DEFAULT_LOG_MEAN, 1.0), pick(&self.covariate_log_sd, &DEFAULT_LOG_SD, 0.5))
    }

    pub fn validate(&self) -> Result<()> {
        let width = self.schema().len();
        let (mean, sd) = self.covariate_law();
        if self.n < 2 {
            return Err(Error::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if self.beta.len() != width || mean.len() != width || sd.len() != width {
            return Err(Error::Config(format!("beta and covariate laws must have {width} entries")));
        }
        let finite = self.beta.iter().chain(&mean).chain(&sd).all(|v| v.is_finite())
            && self.lambda.is_finite()
            && self.censor_mu.is_finite()
            && self.censor_sigma.is_finite();
        if !finite {
            return Err(Error::Config("all parameters must be finite".into()));
        }
        if self.lambda <= 0.0 || self.censor_sigma < 0.0 || sd.iter().any(|&s| s <= 0.0) {
            return Err(Error::Config("lambda and sds must be positive, censor_sigma non-negative".into()));
        }
        Ok(())
    }
}

/// Latent quantities behind a synthetic cohort, in patient order.
#[derive(Debug, Clone)]
pub struct SynthTruth {
    pub event_times: Vec<f64>,
    pub censor_times: Vec<f64>,
}

pub fn patient_id(i: usize) -> String {
    format!("P{i:05}")
}

fn round_ordinal(name: &str, value: f64) -> f64 {
    match name {
        "gleason" => value.round().clamp(2.0, 10.0),
        "stage" => value.round().clamp(1.0, 4.0),
        _ => value,
    }
}

fn draw_censor<R: Rng>(rng: &mut R, mu: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        mu.exp()
    } else {
        (mu + sigma * Normal::new(0.0, 1.0).unwrap().sample(rng)).exp()
    }
}

pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<Cohort> {
    generate_synthetic_with_truth(config, seed).map(|(c, _)| c)
}

pub fn generate_synthetic_with_truth(config: &SynthConfig, seed: u64) -> Result<(Cohort, SynthTruth)> {
    config.validate()?;
    let schema = config.schema();
    let (mean, sd) = config.covariate_law();
    let mut rng = rng::labelled_stream(seed, "synthetic-ph");
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let mut patients = Vec::with_capacity(config.n);
    let mut truth = SynthTruth { event_times: Vec::new(), censor_times: Vec::new() };
    for i in 0..config.n {
        let covariates: Vec<f64> = schema
            .iter()
            .enumerate()
            .map(|(j, name)| round_ordinal(name, (mean[j] + sd[j] * std_normal.sample(&mut rng)).exp()))
            .collect();
        let eta: f64 = covariates
            .iter()
            .enumerate()
            .map(|(j, x)| config.beta[j] * (x.ln() - mean[j]) / sd[j])
            .sum();
        let rate = config.lambda * eta.exp();
        let event = Exp::new(rate).map_err(|e| Error::Config(e.to_string()))?.sample(&mut rng);
        let censor = draw_censor(&mut rng, config.censor_mu, config.censor_sigma);
        truth.event_times.push(event);
        truth.censor_times.push(censor);
        patients.push(PatientRecord {
            id: patient_id(i),
            covariates,
            time_months: event.min(censor).max(1e-9),
            relapsed: event <= censor,
        });
    }
    Ok((Cohort::new(schema, patients)?, truth))
}

/// One diagonal-normal component of a ground truth on (log-covariates, log-time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// Log-normal mixture ground truth: relapse hazard varies smoothly with both
/// time and covariates, unlike the proportional-hazards generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureTruth {
    pub schema: Vec<String>,
    pub components: Vec<TruthComponent>,
    pub censor_mu: f64,
    pub censor_sigma: f64,
}

impl MixtureTruth {
    /// Three risk groups (early, intermediate, late relapse) separated along
    /// the first four covariates.
    pub fn smooth_default() -> Self {
        let schema = default_schema();
        let base_mean = DEFAULT_LOG_MEAN.to_vec();
        let base_sd = DEFAULT_LOG_SD.to_vec();
        let group = |shift: f64, log_time: f64, time_sd: f64, weight: f64| {
            let mut mean = base_mean.clone();
            let mut sd: Vec<f64> = base_sd.clone();
            for j in 0..4 {
                mean[j] += shift * base_sd[j];
                sd[j] *= 0.7;
            }
            mean.push(log_time);
            sd.push(time_sd);
            TruthComponent { weight, mean, sd }
        };
        Self {
            schema,
            components: vec![
                group(1.0, (14f64).ln(), 0.5, 0.35),
                group(0.0, (55f64).ln(), 0.5, 0.35),
                group(-1.0, (220f64).ln(), 0.6, 0.30),
            ],
            censor_mu: (70f64).ln(),
            censor_sigma: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.schema.len() + 1;
        if self.components.is_empty() {
            return Err(Error::Config("mixture truth needs at least one component".into()));
        }
        for c in &self.components {
            if c.mean.len() != d || c.sd.len() != d || c.weight <= 0.0 || c.sd.iter().any(|&s| s <= 0.0) {
                return Err(Error::Config("mixture component shape or parameters invalid".into()));
            }
        }
        Ok(())
    }
}

pub fn generate_mixture_cohort(truth: &MixtureTruth, n: usize, seed: u64) -> Result<Cohort> {
    truth.validate()?;
    if n < 2 {
        return Err(Error::Config(format!("n must be at least 2, got {n}")));
    }
    let mut rng = rng::labelled_stream(seed, "synthetic-mixture");
    let total: f64 = truth.components.iter().map(|c| c.weight).sum();
    let width = truth.schema.len();
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let mut patients = Vec::with_capacity(n);
    for i in 0..n {
        let mut u: f64 = rng.random::<f64>() * total;
        let comp = truth
            .components
            .iter()
            .find(|c| {
                u -= c.weight;
                u <= 0.0
            })
            .unwrap_or_else(|| truth.components.last().unwrap());
        let draws: Vec<f64> =
            (0..=width).map(|j| (comp.mean[j] + comp.sd[j] * std_normal.sample(&mut rng)).exp()).collect();
        let event = draws[width];
        let censor = draw_censor(&mut rng, truth.censor_mu, truth.censor_sigma);
        patients.push(PatientRecord {
            id: patient_id(i),
            covariates: draws[..width].to_vec(),
            time_months: event.min(censor),
            relapsed: event <= censor,
        });
    }
    Cohort::new(truth.schema.clone(), patients)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_cohort() {
        let cfg = SynthConfig { n: 50, ..Default::default() };
        assert_eq!(generate_synthetic(&cfg, 9).unwrap(), generate_synthetic(&cfg, 9).unwrap());
        assert_ne!(generate_synthetic(&cfg, 9).unwrap(), generate_synthetic(&cfg, 10).unwrap());
    }

    #[test]
    fn config_errors() {
        let bad_n = SynthConfig { n: 1, ..Default::default() };
        assert!(matches!(generate_synthetic(&bad_n, 0), Err(Error::Config(_))));
        let bad_beta = SynthConfig { beta: vec![f64::NAN; 12], ..Default::default() };
        assert!(generate_synthetic(&bad_beta, 0).is_err());
        let short = SynthConfig { beta: vec![0.0; 3], ..Default::default() };
        assert!(generate_synthetic(&short, 0).is_err());
    }

    #[test]
    fn config_json_keys() {
        let json = r#"{"n": 10, "beta": [0,0,0,0,0,0,0,0,0,0,0,0], "lambda": 0.02,
                       "censor_mu": 4.0, "censor_sigma": 0.3, "seed": 5}"#;
        let cfg: SynthConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(generate_synthetic(&cfg, cfg.seed).unwrap().len(), 10);
    }

    #[test]
    fn ordinal_columns_are_integers() {
        let cohort = generate_synthetic(&SynthConfig::default(), 1).unwrap();
        for p in cohort.patients() {
            assert_eq!(p.covariates[10].fract(), 0.0);
            assert_eq!(p.covariates[11].fract(), 0.0);
        }
    }

    #[test]
    fn mixture_cohort_is_valid() {
        let c = generate_mixture_cohort(&MixtureTruth::smooth_default(), 300, 4).unwrap();
        assert_eq!(c.len(), 300);
        assert!(c.events() > 60 && c.events() < 280);
    }
}
