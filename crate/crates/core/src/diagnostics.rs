//! Convergence diagnostics for scalar MCMC traces.

use serde::Serialize;

use crate::error::{Error, Result};

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn autocovariance(x: &[f64], mu: f64, lag: usize) -> f64 {
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - mu) * (x[i + lag] - mu)).sum::<f64>() / n as f64
}

/// Long-run variance σ² of the sample mean's CLT, n·Var(mean), by Geyer's
/// initial positive sequence estimator.
pub fn long_run_variance(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mu = mean(x);
    let gamma0 = autocovariance(x, mu, 0);
    if gamma0 == 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = autocovariance(x, mu, 2 * m) + autocovariance(x, mu, 2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        m += 1;
    }
    (2.0 * sum - gamma0).max(gamma0 / n as f64)
}

pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return n as f64;
    }
    let gamma0 = autocovariance(x, mean(x), 0);
    let sigma2 = long_run_variance(x);
    if sigma2 == 0.0 {
        return n as f64;
    }
    n as f64 * gamma0 / sigma2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Geweke {
    pub z: f64,
    pub early_mean: f64,
    pub late_mean: f64,
}

/// Geweke's comparison of the first 10% of a trace with the last 50%.
pub fn geweke(x: &[f64]) -> Result<Geweke> {
    geweke_with(x, 0.1, 0.5)
}

pub fn geweke_with(x: &[f64], first: f64, last: f64) -> Result<Geweke> {
    if !(first > 0.0 && last > 0.0 && first + last <= 1.0) {
        return Err(Error::Config("Geweke fractions must be positive and sum to at most 1".into()));
    }
    let n = x.len();
    let na = (first * n as f64).floor() as usize;
    let nb = (last * n as f64).floor() as usize;
    if na < 5 || nb < 5 {
        return Err(Error::Config(format!("trace of length {n} is too short for a Geweke test")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("trace contains non-finite values".into()));
    }
    let a = &x[..na];
    let b = &x[n - nb..];
    let (ma, mb) = (mean(a), mean(b));
    let var = long_run_variance(a) / na as f64 + long_run_variance(b) / nb as f64;
    let z = if var > 0.0 {
        (ma - mb) / var.sqrt()
    } else if ma == mb {
        0.0
    } else {
        f64::INFINITY.copysign(ma - mb)
    };
    Ok(Geweke { z, early_mean: ma, late_mean: mb })
}
