//! Predictive distributions of relapse time over a finite horizon.
//!
//! A prediction is a sub-distribution: a non-negative density on
//! `[0, horizon]` whose total mass may be below one, plus the lump
//! `survival(horizon)` holding the probability of no relapse in the window.

use crate::error::{Error, Result};

pub const DEFAULT_HORIZON: f64 = 100.0;
pub const GRID_POINTS: usize = 512;
pub const GRID_START: f64 = 0.1;

/// 512 log-spaced times from 0.1 months to the horizon, inclusive.
pub fn log_time_grid(horizon: f64) -> Vec<f64> {
    let (a, b) = (GRID_START.ln(), horizon.ln());
    let step = (b - a) / (GRID_POINTS - 1) as f64;
    let mut grid: Vec<f64> = (0..GRID_POINTS).map(|i| (a + step * i as f64).exp()).collect();
    grid[0] = GRID_START;
    grid[GRID_POINTS - 1] = horizon;
    grid
}

#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    Exponential {
        rate: f64,
    },
    /// Constant density on each `[boundaries[k], boundaries[k + 1])`.
    Piecewise {
        boundaries: Vec<f64>,
        densities: Vec<f64>,
        cumulative: Vec<f64>,
    },
    /// Density linear between grid times; `low_mass` spread uniformly on
    /// `[0, times[0])`.
    Gridded {
        times: Vec<f64>,
        densities: Vec<f64>,
        low_mass: f64,
        cumulative: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalPrediction {
    repr: Representation,
    horizon: f64,
    survival_at_horizon: f64,
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon.is_finite() && horizon > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("horizon must be positive, got {horizon}")))
    }
}

impl SurvivalPrediction {
    pub fn exponential(rate: f64, horizon: f64) -> Result<Self> {
        check_horizon(horizon)?;
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::Domain(format!("exponential rate must be positive, got {rate}")));
        }
        Ok(Self { repr: Representation::Exponential { rate }, horizon, survival_at_horizon: (-rate * horizon).exp() })
    }

    pub fn piecewise(boundaries: Vec<f64>, densities: Vec<f64>, survival_at_horizon: f64, horizon: f64) -> Result<Self> {
        check_horizon(horizon)?;
        if boundaries.len() != densities.len() + 1 || densities.is_empty() {
            return Err(Error::Domain("piecewise density needs one more boundary than cells".into()));
        }
        if boundaries[0] != 0.0 || *boundaries.last().unwrap() != horizon {
            return Err(Error::Domain("piecewise cells must span [0, horizon]".into()));
        }
        if boundaries.windows(2).any(|w| w[1] <= w[0]) || densities.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::Domain("piecewise cells must be increasing with non-negative densities".into()));
        }
        let mut cumulative = Vec::with_capacity(boundaries.len());
        cumulative.push(0.0);
        for (k, d) in densities.iter().enumerate() {
            cumulative.push(cumulative[k] + d * (boundaries[k + 1] - boundaries[k]));
        }
        let total = cumulative.last().unwrap() + survival_at_horizon;
        if survival_at_horizon < 0.0 || (total - 1.0).abs() > 1e-6 {
            return Err(Error::Domain(format!("piecewise prediction has total mass {total}")));
        }
        Ok(Self { repr: Representation::Piecewise { boundaries, densities, cumulative }, horizon, survival_at_horizon })
    }

    /// Gridded prediction. The survival lump is whatever mass the grid does
    /// not account for; if quadrature over-counts, densities are rescaled so
    /// that the total is exactly one and the lump is zero.
    pub fn gridded(times: Vec<f64>, mut densities: Vec<f64>, mut low_mass: f64, horizon: f64) -> Result<Self> {
        check_horizon(horizon)?;
        if times.len() != densities.len() || times.len() < 2 {
            return Err(Error::Domain("grid and densities must have equal length >= 2".into()));
        }
        if times[0] <= 0.0 || *times.last().unwrap() != horizon || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("grid must increase from a positive time to the horizon".into()));
        }
        if densities.iter().any(|d| !(d.is_finite() && *d >= 0.0)) || !(low_mass.is_finite() && low_mass >= 0.0) {
            return Err(Error::Domain("grid densities must be finite and non-negative".into()));
        }
        let trapezoid = |d: &[f64]| -> f64 { (1..times.len()).map(|m| 0.5 * (d[m] + d[m - 1]) * (times[m] - times[m - 1])).sum() };
        let mass = low_mass + trapezoid(&densities);
        if mass > 1.0 {
            densities.iter_mut().for_each(|d| *d /= mass);
            low_mass /= mass;
        }
        let mut cumulative = Vec::with_capacity(times.len());
        cumulative.push(low_mass);
        for m in 1..times.len() {
            cumulative.push(cumulative[m - 1] + 0.5 * (densities[m] + densities[m - 1]) * (times[m] - times[m - 1]));
        }
        let survival_at_horizon = (1.0 - cumulative.last().unwrap()).max(0.0);
        Ok(Self {
            repr: Representation::Gridded { times, densities, low_mass, cumulative },
            horizon,
            survival_at_horizon,
        })
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn survival_at_horizon(&self) -> f64 {
        self.survival_at_horizon
    }

    /// Probability of relapse within the horizon.
    pub fn mass_within_horizon(&self) -> f64 {
        match &self.repr {
            Representation::Exponential { .. } => 1.0 - self.survival_at_horizon,
            Representation::Piecewise { cumulative, .. } | Representation::Gridded { cumulative, .. } => {
                *cumulative.last().unwrap()
            }
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::Domain(format!("time {t} outside [0, {}]", self.horizon)))
        }
    }

    pub fn density_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.density_unchecked(t))
    }

    pub fn survival_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.survival_unchecked(t))
    }

    pub(crate) fn density_unchecked(&self, t: f64) -> f64 {
        match &self.repr {
            Representation::Exponential { rate } => rate * (-rate * t).exp(),
            Representation::Piecewise { boundaries, densities, .. } => {
                let k = boundaries.partition_point(|&b| b <= t).clamp(1, densities.len());
                densities[k - 1]
            }
            Representation::Gridded { times, densities, low_mass, .. } => {
                if t < times[0] {
                    return low_mass / times[0];
                }
                let m = times.partition_point(|&g| g <= t).clamp(1, times.len() - 1);
                let s = (t - times[m - 1]) / (times[m] - times[m - 1]);
                densities[m - 1] + s * (densities[m] - densities[m - 1])
            }
        }
    }

    pub(crate) fn survival_unchecked(&self, t: f64) -> f64 {
        let cdf = match &self.repr {
            Representation::Exponential { rate } => return (-rate * t).exp(),
            Representation::Piecewise { boundaries, densities, cumulative } => {
                let k = boundaries.partition_point(|&b| b <= t).clamp(1, densities.len());
                cumulative[k - 1] + densities[k - 1] * (t - boundaries[k - 1])
            }
            Representation::Gridded { times, densities, low_mass, cumulative } => {
                if t < times[0] {
                    low_mass * t / times[0]
                } else {
                    let m = times.partition_point(|&g| g <= t).clamp(1, times.len() - 1);
                    let width = times[m] - times[m - 1];
                    let s = t - times[m - 1];
                    let slope = (densities[m] - densities[m - 1]) / width;
                    cumulative[m - 1] + densities[m - 1] * s + 0.5 * slope * s * s
                }
            }
        };
        (1.0 - cdf).clamp(0.0, 1.0)
    }

    /// Times at which the density changes functional form, including 0 and
    /// the horizon. Between consecutive knots the density is a polynomial
    /// of degree at most one (none for the exponential form).
    pub fn knots(&self) -> Vec<f64> {
        match &self.repr {
            Representation::Exponential { .. } => vec![0.0, self.horizon],
            Representation::Piecewise { boundaries, .. } => boundaries.clone(),
            Representation::Gridded { times, .. } => std::iter::once(0.0).chain(times.iter().copied()).collect(),
        }
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self.repr, Representation::Exponential { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exponential_closed_forms() {
        let p = SurvivalPrediction::exponential(0.01, 100.0).unwrap();
        assert_eq!(p.density_at(0.0).unwrap(), 0.01);
        assert_eq!(p.survival_at(0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(p.survival_at(100.0).unwrap(), (-1f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(p.survival_at(100.0).unwrap(), 0.36787944117144233, epsilon = 1e-12);
    }

    #[test]
    fn piecewise_cell_rule() {
        let p = SurvivalPrediction::piecewise(vec![0.0, 15.0, 100.0], vec![0.4 / 15.0, 0.2 / 85.0], 0.4, 100.0).unwrap();
        assert_abs_diff_eq!(p.density_at(10.0).unwrap(), 0.4 / 15.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.density_at(10.0).unwrap(), 0.02667, epsilon = 1e-5);
        assert_abs_diff_eq!(p.survival_at(10.0).unwrap(), 1.0 - 10.0 * 0.4 / 15.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.survival_at(10.0).unwrap(), 0.7333, epsilon = 1e-4);
        assert_abs_diff_eq!(p.density_at(100.0).unwrap(), 0.2 / 85.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.survival_at(100.0).unwrap(), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn out_of_window_is_domain_error() {
        let p = SurvivalPrediction::exponential(0.1, 100.0).unwrap();
        assert!(matches!(p.density_at(-1.0), Err(Error::Domain(_))));
        assert!(matches!(p.survival_at(100.5), Err(Error::Domain(_))));
    }

    #[test]
    fn piecewise_rejects_bad_mass() {
        assert!(SurvivalPrediction::piecewise(vec![0.0, 100.0], vec![0.01], 0.5, 100.0).is_err());
    }

    #[test]
    fn gridded_survival_is_consistent_with_density() {
        let times = log_time_grid(100.0);
        let densities: Vec<f64> = times.iter().map(|t| 0.02 * (-0.02 * t).exp()).collect();
        let p = SurvivalPrediction::gridded(times.clone(), densities, 0.002, 100.0).unwrap();
        // survival difference over a cell equals the trapezoid area of the cell
        for m in 1..times.len() {
            let area = 0.5 * (p.density_at(times[m]).unwrap() + p.density_at(times[m - 1]).unwrap()) * (times[m] - times[m - 1]);
            let drop = p.survival_at(times[m - 1]).unwrap() - p.survival_at(times[m]).unwrap();
            assert_abs_diff_eq!(area, drop, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(p.mass_within_horizon() + p.survival_at_horizon(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.survival_at(0.05).unwrap(), 1.0 - 0.001, epsilon = 1e-12);
    }

    #[test]
    fn grid_shape() {
        let g = log_time_grid(100.0);
        assert_eq!(g.len(), 512);
        assert_eq!(g[0], 0.1);
        assert_eq!(g[511], 100.0);
        let r1 = g[1] / g[0];
        let r2 = g[400] / g[399];
        assert_abs_diff_eq!(r1, r2, epsilon = 1e-10);
    }
}
