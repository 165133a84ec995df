//! Cox proportional hazards: Breslow partial likelihood, Breslow baseline,
//! spike predictions and their midpoint blurring.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::prediction::SurvivalPrediction;
use crate::standardize::Standardization;

pub const MAX_NEWTON_ITERATIONS: usize = 100;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
/// Coefficient norm (standardized scale) taken as evidence of a monotone likelihood.
pub const DIVERGENCE_NORM: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PartialLikelihoodFit {
    pub beta: Vec<f64>,
    /// Inverse observed information at the optimum.
    pub covariance: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    /// Log partial likelihood after each accepted Newton step, starting at β = 0.
    pub trace: Vec<f64>,
    pub converged: bool,
}

struct Evaluation {
    log_lik: f64,
    gradient: DVector<f64>,
    hessian: DMatrix<f64>,
}

/// Rows sorted by descending time, grouped by tied time.
fn tie_groups(times: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]).then(a.cmp(&b)));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if times[g[0]] == times[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

fn evaluate(x: &[Vec<f64>], events: &[bool], groups: &[Vec<usize>], beta: &DVector<f64>) -> Evaluation {
    let p = beta.len();
    let eta: Vec<f64> = x.iter().map(|r| r.iter().zip(beta.iter()).map(|(a, b)| a * b).sum()).collect();
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s0 = 0.0;
    let mut s1 = DVector::zeros(p);
    let mut s2 = DMatrix::zeros(p, p);
    let mut log_lik = 0.0;
    let mut gradient = DVector::zeros(p);
    let mut hessian = DMatrix::zeros(p, p);
    for group in groups {
        for &i in group {
            let w = (eta[i] - shift).exp();
            let xi = DVector::from_column_slice(&x[i]);
            s0 += w;
            s1.axpy(w, &xi, 1.0);
            s2.ger(w, &xi, &xi, 1.0);
        }
        let d = group.iter().filter(|&&i| events[i]).count();
        if d == 0 {
            continue;
        }
        let d = d as f64;
        for &i in group.iter().filter(|&&i| events[i]) {
            log_lik += eta[i];
            for j in 0..p {
                gradient[j] += x[i][j];
            }
        }
        log_lik -= d * (s0.ln() + shift);
        let mean = &s1 / s0;
        gradient.axpy(-d, &mean, 1.0);
        let second = &s2 / s0 - &mean * mean.transpose();
        hessian -= second * d;
    }
    Evaluation { log_lik, gradient, hessian }
}

/// Maximizes the Breslow log partial likelihood of the design `x` by Newton's
/// method with step halving.
pub fn fit_partial_likelihood(x: &[Vec<f64>], times: &[f64], events: &[bool]) -> Result<PartialLikelihoodFit> {
    let p = x.first().map_or(0, |r| r.len());
    if events.iter().filter(|&&e| e).count() < 2 {
        return Err(Error::NoEvents);
    }
    let groups = tie_groups(times);
    let mut beta = DVector::zeros(p);
    let mut current = evaluate(x, events, &groups, &beta);
    let mut trace = vec![current.log_lik];
    let mut converged = false;
    for _ in 0..MAX_NEWTON_ITERATIONS {
        if current.gradient.amax() < GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        let information = -current.hessian.clone();
        let chol = information
            .cholesky()
            .ok_or_else(|| Error::Collinear("partial-likelihood information matrix is singular".into()))?;
        let step = chol.solve(&current.gradient);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let candidate = &beta + &step * scale;
            let eval = evaluate(x, events, &groups, &candidate);
            if eval.log_lik.is_finite() && eval.log_lik >= current.log_lik {
                accepted = Some((candidate, eval));
                break;
            }
            scale *= 0.5;
        }
        let Some((next, eval)) = accepted else {
            // no ascent left at floating-point resolution
            converged = current.gradient.amax() < 1e-6;
            break;
        };
        beta = next;
        current = eval;
        trace.push(current.log_lik);
        let norm = beta.norm();
        if norm > DIVERGENCE_NORM {
            return Err(Error::MonotoneLikelihood { norm, limit: DIVERGENCE_NORM });
        }
    }
    if !converged && current.gradient.amax() < GRADIENT_TOLERANCE {
        converged = true;
    }
    let information = -current.hessian.clone();
    let covariance = information
        .try_inverse()
        .ok_or_else(|| Error::Collinear("partial-likelihood information matrix is singular".into()))?;
    // a flat direction at the optimum means the maximum is at infinity
    let widest = (0..p).map(|i| covariance[(i, i)]).fold(0.0, f64::max).sqrt();
    if widest > DIVERGENCE_NORM {
        return Err(Error::MonotoneLikelihood { norm: beta.norm().max(widest), limit: DIVERGENCE_NORM });
    }
    if !converged {
        log::warn!("Cox Newton iterations stopped with gradient {:.3e}", current.gradient.amax());
    }
    Ok(PartialLikelihoodFit {
        beta: beta.iter().copied().collect(),
        covariance: (0..p).map(|i| (0..p).map(|j| covariance[(i, j)]).collect()).collect(),
        log_likelihood: current.log_lik,
        trace,
        converged,
    })
}

/// Breslow cumulative-hazard increments `d_k / Σ_{risk set} exp(βᵀx)` at
/// each distinct event time, in increasing time order.
pub fn breslow_baseline(x: &[Vec<f64>], times: &[f64], events: &[bool], beta: &[f64]) -> Vec<(f64, f64)> {
    let groups = tie_groups(times);
    let mut s0 = 0.0;
    let mut out = Vec::new();
    for group in &groups {
        for &i in group {
            s0 += x[i].iter().zip(beta).map(|(a, b)| a * b).sum::<f64>().exp();
        }
        let d = group.iter().filter(|&&i| events[i]).count();
        if d > 0 {
            out.push((times[group[0]], d as f64 / s0));
        }
    }
    out.reverse();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub beta: Vec<f64>,
    /// (event time, baseline hazard increment), strictly increasing in time.
    pub baseline: Vec<(f64, f64)>,
    pub standardization: Standardization,
    pub covariance: Vec<Vec<f64>>,
}

impl CoxModel {
    pub fn risk_score(&self, covariates: &[f64]) -> Result<f64> {
        let z = self.standardization.apply(covariates)?;
        Ok(z.iter().zip(&self.beta).map(|(a, b)| a * b).sum::<f64>().exp())
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.beta.len()).map(|i| self.covariance[i][i].sqrt()).collect()
    }
}

pub fn fit_cox(train: &Cohort) -> Result<CoxModel> {
    if train.events() < 2 {
        return Err(Error::NoEvents);
    }
    let standardization = Standardization::fit(train);
    standardization.require_nonconstant(train.schema())?;
    let x = standardization.design(train)?;
    let times: Vec<f64> = train.patients().iter().map(|p| p.time_months).collect();
    let events: Vec<bool> = train.patients().iter().map(|p| p.relapsed).collect();
    let fit = fit_partial_likelihood(&x, &times, &events)?;
    let baseline = breslow_baseline(&x, &times, &events, &fit.beta);
    Ok(CoxModel { beta: fit.beta, baseline, standardization, covariance: fit.covariance })
}

/// Discrete predictive distribution: point masses at training event times
/// within the horizon, plus the probability of no relapse by the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeDistribution {
    pub spikes: Vec<(f64, f64)>,
    pub lump: f64,
    pub horizon: f64,
}

impl SpikeDistribution {
    /// P(T > t).
    pub fn survival_at(&self, t: f64) -> f64 {
        self.lump + self.spikes.iter().filter(|(s, _)| *s > t).map(|(_, m)| m).sum::<f64>()
    }

    /// +∞ on a spike carrying mass, −∞ elsewhere.
    pub fn log_density_at(&self, t: f64) -> f64 {
        if self.spikes.iter().any(|&(s, m)| s == t && m > 0.0) {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.spikes.iter().map(|(_, m)| m).sum::<f64>() + self.lump
    }
}

pub fn predict_spikes(model: &CoxModel, covariates: &[f64], horizon: f64) -> Result<SpikeDistribution> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    let r = model.risk_score(covariates)?;
    let mut cumulative = 0.0;
    let mut previous_survival = 1.0;
    let mut spikes = Vec::new();
    for &(t, h) in model.baseline.iter().take_while(|(t, _)| *t <= horizon) {
        cumulative += h;
        let survival = (-r * cumulative).exp();
        spikes.push((t, previous_survival - survival));
        previous_survival = survival;
    }
    Ok(SpikeDistribution { spikes, lump: previous_survival, horizon })
}

/// Spreads each spike uniformly over the times nearer to it than to any
/// other spike; the outer cells end at 0 and at the horizon.
pub fn blur_spikes(spikes: &SpikeDistribution, horizon: f64) -> Result<SurvivalPrediction> {
    if spikes.spikes.iter().any(|&(t, _)| t > horizon || t < 0.0) {
        return Err(Error::Domain("spike outside [0, horizon]".into()));
    }
    if spikes.spikes.is_empty() {
        return SurvivalPrediction::piecewise(vec![0.0, horizon], vec![0.0], spikes.lump, horizon);
    }
    let times: Vec<f64> = spikes.spikes.iter().map(|s| s.0).collect();
    let mut boundaries = vec![0.0];
    boundaries.extend(times.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    boundaries.push(horizon);
    let densities =
        spikes.spikes.iter().enumerate().map(|(k, &(_, m))| m / (boundaries[k + 1] - boundaries[k])).collect();
    SurvivalPrediction::piecewise(boundaries, densities, spikes.lump, horizon)
}

/// True when some relapsed test patient relapsed within the horizon at a time
/// carrying no spike, which makes the unblurred time information −∞.
pub fn unblurred_asi_is_minus_infinity(model: &CoxModel, test: &Cohort, prior: &SurvivalPrediction) -> bool {
    let horizon = prior.horizon();
    test.patients().iter().filter(|p| p.relapsed && p.time_months <= horizon).any(|p| {
        !model.baseline.iter().any(|&(t, h)| t == p.time_months && h > 0.0)
    })
}
