#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use relapse_lab::mixture::Component;
use relapse_lab::{Cohort, PatientRecord};
use statrs::function::gamma::ln_gamma;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn schema(width: usize) -> Vec<String> {
    (0..width).map(|j| format!("x{j}")).collect()
}

/// Cohort whose log-values (covariates, then log time) are independent
/// normals; every patient relapses.
pub fn normal_cohort(n: usize, mean: &[f64], sd: &[f64], seed: u64) -> Cohort {
    let mut r = rng(seed);
    let std = Normal::new(0.0, 1.0).unwrap();
    let d = mean.len();
    let patients = (0..n)
        .map(|i| {
            let z: Vec<f64> = (0..d).map(|j| mean[j] + sd[j] * std.sample(&mut r)).collect();
            PatientRecord {
                id: format!("N{i:04}"),
                covariates: z[..d - 1].iter().map(|v| v.exp()).collect(),
                time_months: z[d - 1].exp(),
                relapsed: true,
            }
        })
        .collect();
    Cohort::new(schema(d - 1), patients).unwrap()
}

fn ln_normal(x: f64, mean: f64, sd: f64) -> f64 {
    let e = (x - mean) / sd;
    -0.5 * e * e - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Log density of z | component, u, g under z = ξ + (δu + σε)/√g, plus the
/// log prior densities of u (half normal) and g (Gamma(ν/2, ν/2)).
pub fn augmented_log_density(comp: &Component, z: &[f64], dims: &[usize], u: f64, g: f64) -> f64 {
    let nu = comp.dof;
    let mut out = std::f64::consts::LN_2 + ln_normal(u, 0.0, 1.0);
    out += 0.5 * nu * (0.5 * nu).ln() - ln_gamma(0.5 * nu) + (0.5 * nu - 1.0) * g.ln() - 0.5 * nu * g;
    let sg = g.sqrt();
    for &j in dims {
        out += ln_normal(z[j], comp.location[j] + comp.skew[j] * u / sg, comp.scale[j] / sg);
    }
    out
}

fn simpson_weights(n: usize) -> Vec<f64> {
    assert!(n % 2 == 1);
    (0..n).map(|i| if i == 0 || i == n - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 }).collect()
}

/// Component density at z over `dims` by 2-D Simpson quadrature over the
/// latents: u on [0, 9], ln g on [-16, 6].
pub fn quadrature_density(comp: &Component, z: &[f64], dims: &[usize]) -> f64 {
    let (nu_pts, ns_pts) = (721, 1601);
    let (u_hi, s_lo, s_hi) = (9.0, -16.0, 6.0);
    let hu = u_hi / (nu_pts - 1) as f64;
    let hs = (s_hi - s_lo) / (ns_pts - 1) as f64;
    let wu = simpson_weights(nu_pts);
    let ws = simpson_weights(ns_pts);
    let mut total = 0.0;
    for (a, wa) in ws.iter().enumerate() {
        let s = s_lo + hs * a as f64;
        let g = s.exp();
        let mut inner = 0.0;
        for (b, wb) in wu.iter().enumerate() {
            let u = hu * b as f64;
            inner += wb * augmented_log_density(comp, z, dims, u, g).exp();
        }
        // dg = g ds
        total += wa * inner * hu / 3.0 * g;
    }
    total * hs / 3.0
}
