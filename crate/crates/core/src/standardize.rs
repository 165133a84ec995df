use serde::{Deserialize, Serialize};

use crate::data::Cohort;
use crate::error::{Error, Result};

/// Per-covariate mean and sd of log-covariates on a training cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardization {
    pub fn fit(cohort: &Cohort) -> Self {
        let n = cohort.len() as f64;
        let width = cohort.width();
        let logs: Vec<Vec<f64>> = cohort.patients().iter().map(|p| p.log_covariates()).collect();
        let mut mean = vec![0.0; width];
        let mut sd = vec![0.0; width];
        for j in 0..width {
            mean[j] = logs.iter().map(|r| r[j]).sum::<f64>() / n;
            let ss: f64 = logs.iter().map(|r| (r[j] - mean[j]).powi(2)).sum();
            sd[j] = if n > 1.0 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
        }
        Self { mean, sd }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    /// Columns with (numerically) zero spread.
    pub fn constant_columns(&self) -> Vec<usize> {
        (0..self.width()).filter(|&j| self.sd[j] <= 1e-10 * (1.0 + self.mean[j].abs())).collect()
    }

    pub fn require_nonconstant(&self, schema: &[String]) -> Result<()> {
        match self.constant_columns().first() {
            Some(&j) => Err(Error::Collinear(format!("covariate `{}` is constant on the training set", schema[j]))),
            None => Ok(()),
        }
    }

    /// Standardized log-covariates of a raw (positive) covariate vector.
    /// Constant columns map to zero.
    pub fn apply(&self, covariates: &[f64]) -> Result<Vec<f64>> {
        if covariates.len() != self.width() {
            return Err(Error::Schema { expected: self.width(), got: covariates.len() });
        }
        let constant = self.constant_columns();
        Ok(covariates
            .iter()
            .enumerate()
            .map(|(j, x)| if constant.contains(&j) { 0.0 } else { (x.ln() - self.mean[j]) / self.sd[j] })
            .collect())
    }

    pub fn design(&self, cohort: &Cohort) -> Result<Vec<Vec<f64>>> {
        cohort.patients().iter().map(|p| self.apply(&p.covariates)).collect()
    }
}
