//! Special functions and samplers shared by the fitting code.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use statrs::function::erf::erfc;
pub use statrs::function::gamma::ln_gamma;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// log Φ(x), accurate far into both tails.
pub fn ln_norm_cdf(x: f64) -> f64 {
    if x > 0.0 {
        (-0.5 * erfc(x / std::f64::consts::SQRT_2)).ln_1p()
    } else if x > -37.0 {
        (0.5 * erfc(-x / std::f64::consts::SQRT_2)).ln()
    } else {
        let x2 = x * x;
        -0.5 * x2 - (-x).ln() - LN_SQRT_2PI + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

pub fn ln_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Log density of a Student-t with location 0, scale `scale` and `dof` degrees of freedom.
pub fn ln_student_pdf(x: f64, scale: f64, dof: f64) -> f64 {
    let z = x / scale;
    ln_gamma(0.5 * (dof + 1.0)) - ln_gamma(0.5 * dof) - 0.5 * (dof * std::f64::consts::PI).ln()
        - scale.ln()
        - 0.5 * (dof + 1.0) * (z * z / dof).ln_1p()
}

/// Log density of Gamma(shape, rate).
pub fn ln_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Student-t CDF evaluator for a fixed number of degrees of freedom.
/// The beta-function normalizers are computed once, which matters when the
/// CDF is evaluated across a whole time grid.
#[derive(Debug, Clone, Copy)]
pub struct StudentCdf {
    dof: f64,
    a: f64,
    // ln B(dof/2, 1/2)
    ln_beta: f64,
}

impl StudentCdf {
    pub fn new(dof: f64) -> Self {
        let a = 0.5 * dof;
        let ln_beta = ln_gamma(a) + ln_gamma(0.5) - ln_gamma(a + 0.5);
        Self { dof, a, ln_beta }
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    /// log P(T <= x).
    pub fn ln_cdf(&self, x: f64) -> f64 {
        if self.dof > 1e5 {
            return ln_norm_cdf(x);
        }
        if x.is_infinite() {
            return if x > 0.0 { 0.0 } else { f64::NEG_INFINITY };
        }
        let (a, b) = (self.a, 0.5);
        let x2 = x * x;
        let w = self.dof / (self.dof + x2);
        let wc = x2 / (self.dof + x2);
        if w < (a + 1.0) / (a + b + 2.0) {
            // tail: I_w(a, b) directly; P(T <= -|x|) = I/2
            let ln_i = a * w.ln() + b * wc.ln() - a.ln() - self.ln_beta + beta_cf(a, b, w).ln();
            let ln_half_i = ln_i - std::f64::consts::LN_2;
            if x < 0.0 {
                ln_half_i
            } else {
                (-ln_half_i.exp()).ln_1p()
            }
        } else {
            // centre: I_w(a, b) = 1 - I_{1-w}(b, a)
            let j = if wc > 0.0 {
                (b * wc.ln() + a * w.ln() - b.ln() - self.ln_beta).exp() * beta_cf(b, a, wc)
            } else {
                0.0
            };
            if x < 0.0 {
                (0.5 * (1.0 - j)).ln()
            } else {
                (0.5 * (1.0 + j)).ln()
            }
        }
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Draws from N(mean, sd²) truncated to [lower, ∞).
pub fn sample_truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lower: f64) -> f64 {
    let a = (lower - mean) / sd;
    let z = if a < 0.5 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z >= a {
                break z;
            }
        }
    } else {
        let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
        loop {
            let e: f64 = Exp1.sample(rng);
            let z = a + e / lambda;
            let u: f64 = rng.random();
            if u.ln() <= -0.5 * (z - lambda) * (z - lambda) {
                break z;
            }
        }
    };
    (mean + sd * z).max(lower)
}

/// Linear-interpolation quantile (R type 7) of sorted data. Interpolation
/// next to an infinite value snaps to the nearer order statistic.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let f = h - lo as f64;
    let (a, b) = (sorted[lo], sorted[hi]);
    if lo == hi || a == b {
        a
    } else if a.is_infinite() || b.is_infinite() {
        if f < 0.5 {
            a
        } else {
            b
        }
    } else {
        a + f * (b - a)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}
