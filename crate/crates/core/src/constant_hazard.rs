//! Constant-hazard variant of the Cox model: exponential regression with a
//! time-invariant baseline, fitted by full maximum likelihood.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cox::{DIVERGENCE_NORM, GRADIENT_TOLERANCE, MAX_NEWTON_ITERATIONS};
use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::prediction::SurvivalPrediction;
use crate::standardize::Standardization;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantHazardModel {
    /// λ₀ per month.
    pub baseline_rate: f64,
    /// One coefficient per covariate; zero for columns constant on training data.
    pub beta: Vec<f64>,
    pub standardization: Standardization,
    /// Covariance of (log λ₀, active β) at the optimum.
    pub covariance: Vec<Vec<f64>>,
    pub active: Vec<bool>,
}

impl ConstantHazardModel {
    pub fn log_lambda0(&self) -> f64 {
        self.baseline_rate.ln()
    }

    pub fn rate(&self, covariates: &[f64]) -> Result<f64> {
        let z = self.standardization.apply(covariates)?;
        let eta: f64 = z.iter().zip(&self.beta).map(|(a, b)| a * b).sum();
        Ok(self.baseline_rate * eta.exp())
    }
}

/// Log-likelihood, gradient and Hessian of `Σ δ(θ₀ + βᵀx) − exp(θ₀ + βᵀx) t`
/// in θ = (log λ₀, β).
pub fn exponential_regression_derivatives(
    x: &[Vec<f64>],
    times: &[f64],
    events: &[bool],
    theta: &[f64],
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let p = theta.len();
    let mut ll = 0.0;
    let mut grad = DVector::zeros(p);
    let mut hess = DMatrix::zeros(p, p);
    let mut row = DVector::zeros(p);
    for ((xi, &t), &e) in x.iter().zip(times).zip(events) {
        row[0] = 1.0;
        for j in 1..p {
            row[j] = xi[j - 1];
        }
        let eta = row.dot(&DVector::from_column_slice(theta));
        let mu = eta.exp() * t;
        let delta = if e { 1.0 } else { 0.0 };
        ll += delta * eta - mu;
        grad.axpy(delta - mu, &row, 1.0);
        hess.ger(-mu, &row, &row, 1.0);
    }
    (ll, grad, hess)
}

pub fn fit_constant_hazard(train: &Cohort) -> Result<ConstantHazardModel> {
    let events = train.events();
    if events == 0 {
        return Err(Error::NoEvents);
    }
    let standardization = Standardization::fit(train);
    let constant = standardization.constant_columns();
    let active: Vec<bool> = (0..train.width()).map(|j| !constant.contains(&j)).collect();
    let width = train.width();
    let exposure: f64 = train.patients().iter().map(|p| p.time_months).sum();
    let closed_form = events as f64 / exposure;

    if !active.iter().any(|&a| a) {
        return Ok(ConstantHazardModel {
            baseline_rate: closed_form,
            beta: vec![0.0; width],
            standardization,
            covariance: vec![vec![1.0 / events as f64]],
            active,
        });
    }

    let full = standardization.design(train)?;
    let x: Vec<Vec<f64>> =
        full.iter().map(|r| r.iter().zip(&active).filter(|(_, a)| **a).map(|(v, _)| *v).collect()).collect();
    let times: Vec<f64> = train.patients().iter().map(|p| p.time_months).collect();
    let flags: Vec<bool> = train.patients().iter().map(|p| p.relapsed).collect();
    let p = x[0].len() + 1;
    let mut theta = DVector::zeros(p);
    theta[0] = closed_form.ln();
    let (mut ll, mut grad, mut hess) = exponential_regression_derivatives(&x, &times, &flags, theta.as_slice());
    for _ in 0..MAX_NEWTON_ITERATIONS {
        if grad.amax() < GRADIENT_TOLERANCE {
            break;
        }
        let chol = (-hess.clone())
            .cholesky()
            .ok_or_else(|| Error::Collinear("exponential-regression information matrix is singular".into()))?;
        let step = chol.solve(&grad);
        let mut scale = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let candidate = &theta + &step * scale;
            let (cll, cg, ch) = exponential_regression_derivatives(&x, &times, &flags, candidate.as_slice());
            if cll.is_finite() && cll >= ll {
                theta = candidate;
                (ll, grad, hess) = (cll, cg, ch);
                moved = true;
                break;
            }
            scale *= 0.5;
        }
        if !moved {
            break;
        }
        let norm = theta.rows(1, p - 1).norm();
        if norm > DIVERGENCE_NORM {
            return Err(Error::MonotoneLikelihood { norm, limit: DIVERGENCE_NORM });
        }
    }
    let covariance = (-hess)
        .try_inverse()
        .ok_or_else(|| Error::Collinear("exponential-regression information matrix is singular".into()))?;
    let mut beta = vec![0.0; width];
    let mut k = 1;
    for j in 0..width {
        if active[j] {
            beta[j] = theta[k];
            k += 1;
        }
    }
    Ok(ConstantHazardModel {
        baseline_rate: theta[0].exp(),
        beta,
        standardization,
        covariance: (0..p).map(|i| (0..p).map(|j| covariance[(i, j)]).collect()).collect(),
        active,
    })
}

pub fn ch_predictive(model: &ConstantHazardModel, covariates: &[f64], horizon: f64) -> Result<SurvivalPrediction> {
    SurvivalPrediction::exponential(model.rate(covariates)?, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PatientRecord;
    use crate::prior::{fit_exponential_prior, prior_prediction};

    fn cohort(rows: &[(f64, f64, bool)]) -> Cohort {
        let patients = rows
            .iter()
            .enumerate()
            .map(|(i, &(x, t, e))| PatientRecord { id: format!("p{i}"), covariates: vec![x], time_months: t, relapsed: e })
            .collect();
        Cohort::new(vec!["x".into()], patients).unwrap()
    }

    #[test]
    fn constant_covariates_reduce_to_prior() {
        let c = cohort(&[(2.0, 3.0, true), (2.0, 8.0, false), (2.0, 1.5, true), (2.0, 20.0, false)]);
        let model = fit_constant_hazard(&c).unwrap();
        let prior = fit_exponential_prior(&c).unwrap();
        assert_eq!(model.baseline_rate, prior.rate);
        assert_eq!(ch_predictive(&model, &[2.0], 100.0).unwrap(), prior_prediction(&prior, 100.0).unwrap());
    }

    #[test]
    fn doubling_times_halves_rate() {
        let rows = [(1.0, 3.0, true), (2.0, 8.0, false), (3.0, 1.5, true), (4.0, 20.0, true), (5.0, 2.0, false), (0.5, 9.0, true)];
        let a = fit_constant_hazard(&cohort(&rows)).unwrap();
        let doubled: Vec<_> = rows.iter().map(|&(x, t, e)| (x, 2.0 * t, e)).collect();
        let b = fit_constant_hazard(&cohort(&doubled)).unwrap();
        assert!((b.baseline_rate - a.baseline_rate / 2.0).abs() < 1e-10);
        assert!((b.beta[0] - a.beta[0]).abs() < 1e-8);
    }

    #[test]
    fn zero_events_rejected() {
        assert!(matches!(fit_constant_hazard(&cohort(&[(1.0, 2.0, false), (3.0, 1.0, false)])), Err(Error::NoEvents)));
    }

    #[test]
    fn prediction_is_exponential_and_decreasing() {
        let rows = [(1.0, 3.0, true), (2.0, 8.0, false), (3.0, 1.5, true), (4.0, 20.0, true), (5.0, 2.0, false)];
        let m = fit_constant_hazard(&cohort(&rows)).unwrap();
        let p = ch_predictive(&m, &[2.5], 100.0).unwrap();
        let rate = m.rate(&[2.5]).unwrap();
        assert_eq!(p.survival_at_horizon(), (-rate * 100.0).exp());
        let d: Vec<f64> = (0..100).map(|t| p.density_at(t as f64).unwrap()).collect();
        assert!(d.windows(2).all(|w| w[1] < w[0]));
    }
}
