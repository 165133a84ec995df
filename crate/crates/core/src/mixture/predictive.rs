use super::density::SkewStudentPart;
use super::MixtureSample;
use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, StudentCdf};
use crate::prediction::{log_time_grid, SurvivalPrediction, GRID_START};

/// Components whose log responsibility falls below this are skipped.
const PRUNE_LOG_RESPONSIBILITY: f64 = -18.0;
const LOW_GRID_POINTS: usize = 128;
const LOW_GRID_SPAN: f64 = 12.0;

fn check_inputs(samples: &[MixtureSample], width: usize) -> Result<()> {
    let first = samples.first().ok_or_else(|| Error::Domain("no posterior samples to predict from".into()))?;
    if first.dims() != width + 1 {
        return Err(Error::Schema { expected: first.dims() - 1, got: width });
    }
    Ok(())
}

/// Log of the posterior-averaged conditional density of log relapse time
/// given observed log-covariates, at each of `log_times`.
pub fn predictive_log_time_density(
    samples: &[MixtureSample],
    log_covariates: &[f64],
    log_times: &[f64],
) -> Result<Vec<f64>> {
    check_inputs(samples, log_covariates.len())?;
    if log_covariates.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("log-covariates must be finite".into()));
    }
    let time = log_covariates.len();
    let mut per_sample: Vec<Vec<f64>> = Vec::with_capacity(samples.len());
    for sample in samples {
        if sample.dims() != time + 1 {
            return Err(Error::Schema { expected: sample.dims() - 1, got: time });
        }
        let parts: Vec<(SkewStudentPart, f64, f64)> = sample
            .components
            .iter()
            .zip(&sample.weights)
            .map(|(comp, w)| {
                let mut part = SkewStudentPart::default();
                for (j, &v) in log_covariates.iter().enumerate() {
                    part.push(comp, j, v);
                }
                let marginal = part.log_density(comp.dof);
                (part, w.ln() + marginal, marginal)
            })
            .collect();
        let responsibilities: Vec<f64> = parts.iter().map(|p| p.1).collect();
        let norm = log_sum_exp(&responsibilities);
        let mut terms: Vec<Vec<f64>> = Vec::new();
        for ((part, lr, marginal), comp) in parts.iter().zip(&sample.components) {
            let log_resp = lr - norm;
            if !(log_resp > PRUNE_LOG_RESPONSIBILITY) {
                continue;
            }
            let dims = part.dims + 1;
            let constant = SkewStudentPart::log_constant(comp.dof, dims);
            let cdf = StudentCdf::new(comp.dof + dims as f64);
            terms.push(
                log_times
                    .iter()
                    .map(|&s| {
                        let mut full = *part;
                        full.push(comp, time, s);
                        log_resp + full.log_density_with(constant, &cdf) - *marginal
                    })
                    .collect(),
            );
        }
        if terms.is_empty() {
            return Err(Error::Domain("covariates have zero density under every component".into()));
        }
        per_sample.push(
            (0..log_times.len()).map(|m| log_sum_exp(&terms.iter().map(|t| t[m]).collect::<Vec<_>>())).collect(),
        );
    }
    let ln_count = (samples.len() as f64).ln();
    Ok((0..log_times.len())
        .map(|m| log_sum_exp(&per_sample.iter().map(|p| p[m]).collect::<Vec<_>>()) - ln_count)
        .collect())
}

/// Predictive relapse-time distribution for a new patient, on the
/// 512-point log grid up to `horizon`. Mass below the first grid time is
/// integrated on an auxiliary grid and spread uniformly over `[0, 0.1)`.
pub fn predictive_curve(samples: &[MixtureSample], covariates: &[f64], horizon: f64) -> Result<SurvivalPrediction> {
    check_inputs(samples, covariates.len())?;
    if covariates.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Domain("covariates must be positive and finite".into()));
    }
    if !(horizon > GRID_START && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon must exceed {GRID_START}, got {horizon}")));
    }
    let logs: Vec<f64> = covariates.iter().map(|x| x.ln()).collect();
    let times = log_time_grid(horizon);
    let hi = GRID_START.ln();
    let lo = hi - LOW_GRID_SPAN;
    let step = (hi - lo) / (LOW_GRID_POINTS - 1) as f64;
    let low_grid: Vec<f64> = (0..LOW_GRID_POINTS).map(|i| lo + step * i as f64).collect();
    let mut log_times: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    log_times.extend_from_slice(&low_grid);
    let lp = predictive_log_time_density(samples, &logs, &log_times)?;
    let (main, low) = lp.split_at(times.len());
    let densities: Vec<f64> = main.iter().zip(&times).map(|(l, t)| (l - t.ln()).exp()).collect();
    let low_mass: f64 = (1..low.len()).map(|m| 0.5 * (low[m].exp() + low[m - 1].exp()) * step).sum();
    SurvivalPrediction::gridded(times, densities, low_mass, horizon)
}

/// Total predictive probability of log time over the whole real line, by
/// trapezoid quadrature on a wide grid. Should be one up to quadrature and
/// tail truncation error.
pub fn predictive_total_mass(samples: &[MixtureSample], covariates: &[f64]) -> Result<f64> {
    let logs: Vec<f64> = covariates.iter().map(|x| x.ln()).collect();
    let (lo, hi, n) = (-40.0, 60.0, 20001);
    let step = (hi - lo) / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    let lp = predictive_log_time_density(samples, &logs, &grid)?;
    Ok((1..n).map(|m| 0.5 * (lp[m].exp() + lp[m - 1].exp()) * step).sum())
}
