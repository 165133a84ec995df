use std::collections::HashMap;

use super::{Component, HyperParams, LogData, MixtureSample};
use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::numeric::{ln_gamma, ln_gamma_pdf, ln_norm_cdf, ln_norm_pdf, ln_student_pdf, StudentCdf};

/// Sufficient sums of a skew-Student component restricted to a subset of
/// dimensions, with residuals r = z − ξ:
/// a = Σ r²/σ², b = Σ δ r/σ², c = Σ δ²/σ².
#[derive(Debug, Clone, Copy, Default)]
pub struct SkewStudentPart {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub ln_scale_sum: f64,
    pub dims: usize,
}

impl SkewStudentPart {
    pub fn push(&mut self, component: &Component, j: usize, value: f64) {
        let s2 = component.scale[j] * component.scale[j];
        let r = value - component.location[j];
        self.a += r * r / s2;
        self.b += component.skew[j] * r / s2;
        self.c += component.skew[j] * component.skew[j] / s2;
        self.ln_scale_sum += component.scale[j].ln();
        self.dims += 1;
    }

    /// Closed-form log density of the marginal over the accumulated
    /// dimensions: 2 t_d(r; Ω + δδᵀ, ν) T_{ν+d}(η √((ν+d)/(ν+Q))).
    pub fn log_density(&self, dof: f64) -> f64 {
        self.log_density_with(Self::log_constant(dof, self.dims), &StudentCdf::new(dof + self.dims as f64))
    }

    /// Dimension-dependent normalizer of [`Self::log_density`], excluding the scales.
    pub(crate) fn log_constant(dof: f64, dims: usize) -> f64 {
        let d = dims as f64;
        std::f64::consts::LN_2 + ln_gamma(0.5 * (dof + d)) - ln_gamma(0.5 * dof) - 0.5 * d * (dof * std::f64::consts::PI).ln()
    }

    /// As [`Self::log_density`] with the constant and the CDF of
    /// T_{ν+d} precomputed; `cdf` must have ν + d degrees of freedom.
    pub(crate) fn log_density_with(&self, constant: f64, cdf: &StudentCdf) -> f64 {
        let d = self.dims as f64;
        let dof = cdf.dof() - d;
        let q = self.a - self.b * self.b / (1.0 + self.c);
        let eta = self.b / (1.0 + self.c).sqrt();
        constant - self.ln_scale_sum - 0.5 * self.c.ln_1p() - 0.5 * (dof + d) * (q / dof).ln_1p()
            + cdf.ln_cdf(eta * ((dof + d) / (dof + q)).sqrt())
    }
}

/// Log density of one component at `values`, marginal over the listed dimensions.
pub fn component_log_density(component: &Component, values: &[f64], dims: &[usize]) -> f64 {
    let mut part = SkewStudentPart::default();
    for &j in dims {
        part.push(component, j, values[j]);
    }
    part.log_density(component.dof)
}

/// Unnormalized log posterior, split into prior and likelihood parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDensity {
    pub prior: f64,
    /// Mixture, latent, observation-noise and censoring terms.
    pub likelihood: f64,
}

impl LogDensity {
    pub fn total(&self) -> f64 {
        self.prior + self.likelihood
    }
}

pub(crate) fn log_prior(sample: &MixtureSample, hyper: &HyperParams) -> f64 {
    let k = sample.components.len() as f64;
    let a = hyper.concentration / k;
    let mut lp = ln_gamma(hyper.concentration) - k * ln_gamma(a);
    lp += sample.weights.iter().map(|w| (a - 1.0) * w.ln()).sum::<f64>();
    for comp in &sample.components {
        for j in 0..comp.location.len() {
            lp += ln_norm_pdf((comp.location[j] - hyper.location_mean[j]) / hyper.location_sd[j]) - hyper.location_sd[j].ln();
            lp += ln_norm_pdf(comp.skew[j] / hyper.skew_sd[j]) - hyper.skew_sd[j].ln();
            let var = comp.scale[j] * comp.scale[j];
            let (shape, rate) = (hyper.scale_shape, hyper.scale_rate[j]);
            lp += shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * var.ln() - rate / var;
        }
        lp += if comp.dof >= hyper.dof_min {
            hyper.dof_rate.ln() - hyper.dof_rate * (comp.dof - hyper.dof_min)
        } else {
            f64::NEG_INFINITY
        };
    }
    lp += ln_norm_pdf((sample.censor_mu - hyper.censor_mu_mean) / hyper.censor_mu_sd) - hyper.censor_mu_sd.ln();
    lp += std::f64::consts::LN_2 + ln_norm_pdf(sample.censor_sigma / hyper.censor_sigma_scale)
        - hyper.censor_sigma_scale.ln();
    lp
}

/// Log density of z given component, u and g (Gaussian in z).
pub(crate) fn conditional_latent_log_density(comp: &Component, z: &[f64], u: f64, g: f64) -> f64 {
    let sg = g.sqrt();
    let mut out = 0.0;
    for j in 0..z.len() {
        let s = comp.scale[j];
        let e = (sg * (z[j] - comp.location[j]) - comp.skew[j] * u) / s;
        out += 0.5 * g.ln() - s.ln() + ln_norm_pdf(e);
    }
    out
}

pub(crate) fn patient_log_likelihood(
    sample: &MixtureSample,
    hyper: &HyperParams,
    observed: &[f64],
    relapsed: bool,
    c: usize,
    u: f64,
    g: f64,
    z: &[f64],
) -> f64 {
    let comp = &sample.components[c];
    let d = z.len();
    let time = d - 1;
    let mut ll = sample.weights[c].ln();
    ll += std::f64::consts::LN_2 + ln_norm_pdf(u);
    ll += ln_gamma_pdf(g, 0.5 * comp.dof, 0.5 * comp.dof);
    ll += conditional_latent_log_density(comp, z, u, g);
    for j in 0..time {
        ll += ln_student_pdf(observed[j] - z[j], hyper.noise_scale, hyper.noise_dof);
    }
    let standardized = (z[time] - sample.censor_mu) / sample.censor_sigma;
    if relapsed {
        ll += ln_student_pdf(observed[time] - z[time], hyper.noise_scale, hyper.noise_dof);
        ll += ln_norm_cdf(-standardized);
    } else {
        let at_censor = (observed[time] - sample.censor_mu) / sample.censor_sigma;
        ll += ln_norm_pdf(at_censor) - sample.censor_sigma.ln();
        if z[time] <= observed[time] {
            ll = f64::NEG_INFINITY;
        }
    }
    ll
}

/// Unnormalized log posterior of a sample with latents, given the training cohort.
pub fn joint_log_density(sample: &MixtureSample, hyper: &HyperParams, train: &Cohort) -> Result<LogDensity> {
    sample.validate()?;
    let latents = sample.latents.as_ref().ok_or_else(|| Error::Domain("sample carries no latent state".into()))?;
    let data = LogData::new(train);
    hyper.validate(data.dims())?;
    if sample.dims() != data.dims() {
        return Err(Error::Schema { expected: sample.dims() - 1, got: data.dims() - 1 });
    }
    let index: HashMap<&str, usize> = latents.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut likelihood = 0.0;
    for (i, id) in data.ids.iter().enumerate() {
        let l = *index.get(id.as_str()).ok_or_else(|| Error::Domain(format!("no latent state for patient `{id}`")))?;
        likelihood += patient_log_likelihood(
            sample,
            hyper,
            &data.values[i],
            data.relapsed[i],
            latents.assignment[l],
            latents.skew_latent[l],
            latents.tail_latent[l],
            &latents.true_values[l],
        );
    }
    Ok(LogDensity { prior: log_prior(sample, hyper), likelihood })
}
