//! Covariate-free exponential attrition model: the zero point of the
//! information measure.

use serde::{Deserialize, Serialize};

use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::prediction::SurvivalPrediction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialPrior {
    /// Relapse hazard per month.
    pub rate: f64,
}

impl ExponentialPrior {
    pub fn new(rate: f64) -> Result<Self> {
        if rate.is_finite() && rate > 0.0 {
            Ok(Self { rate })
        } else {
            Err(Error::Domain(format!("prior rate must be positive and finite, got {rate}")))
        }
    }

    /// Censored exponential log-likelihood `Σ δ log λ − λ t`.
    pub fn log_likelihood(rate: f64, cohort: &Cohort) -> f64 {
        cohort
            .patients()
            .iter()
            .map(|p| if p.relapsed { rate.ln() } else { 0.0 } - rate * p.time_months)
            .sum()
    }
}

/// Censored-data MLE: events divided by total follow-up.
pub fn fit_exponential_prior(train: &Cohort) -> Result<ExponentialPrior> {
    let events = train.events();
    if events == 0 {
        return Err(Error::NoEvents);
    }
    let exposure: f64 = train.patients().iter().map(|p| p.time_months).sum();
    ExponentialPrior::new(events as f64 / exposure)
}

pub fn prior_prediction(prior: &ExponentialPrior, horizon: f64) -> Result<SurvivalPrediction> {
    SurvivalPrediction::exponential(prior.rate, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PatientRecord;

    fn cohort(rows: &[(f64, bool)]) -> Cohort {
        let patients = rows
            .iter()
            .enumerate()
            .map(|(i, &(t, e))| PatientRecord { id: i.to_string(), covariates: vec![1.0], time_months: t, relapsed: e })
            .collect();
        Cohort::new(vec!["x".into()], patients).unwrap()
    }

    #[test]
    fn two_events_one_censored() {
        let c = cohort(&[(2.0, true), (3.0, true), (5.0, false)]);
        let prior = fit_exponential_prior(&c).unwrap();
        assert_eq!(prior.rate, 0.2);
        // golden-section search on the log-likelihood lands on the same point
        let (mut lo, mut hi) = (1e-4f64, 5.0f64);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - phi * (hi - lo);
            let b = lo + phi * (hi - lo);
            if ExponentialPrior::log_likelihood(a, &c) > ExponentialPrior::log_likelihood(b, &c) {
                hi = b;
            } else {
                lo = a;
            }
        }
        assert!((0.5 * (lo + hi) - 0.2).abs() < 1e-8);
    }

    #[test]
    fn identical_unit_events() {
        let c = cohort(&[(1.0, true); 7]);
        assert_eq!(fit_exponential_prior(&c).unwrap().rate, 1.0);
    }

    #[test]
    fn all_censored_is_an_error() {
        let c = cohort(&[(1.0, false), (4.0, false)]);
        assert!(matches!(fit_exponential_prior(&c), Err(Error::NoEvents)));
    }

    #[test]
    fn prediction_closed_form() {
        let p = prior_prediction(&ExponentialPrior { rate: 0.2 }, 100.0).unwrap();
        assert_eq!(p.survival_at_horizon(), (-20f64).exp());
        assert_eq!(p.density_at(0.0).unwrap(), 0.2);
    }
}
