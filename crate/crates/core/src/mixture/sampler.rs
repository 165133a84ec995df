//! Metropolis-within-Gibbs sampler.
//!
//! Patient-level latents (true log-values z, noise precisions, skew latent u,
//! tail latent g, component assignment) are updated from per-patient random
//! streams keyed by patient id; global parameters use a separate stream.
//! Patients are processed in id order, so the chain does not depend on the
//! row order of the input cohort.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::density::{log_prior, patient_log_likelihood, SkewStudentPart};
use super::{ChainConfig, Clamp, Component, HyperParams, Latents, LogData, MixtureSample};
use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::numeric::{ln_gamma, ln_gamma_pdf, ln_norm_cdf, ln_norm_pdf, sample_truncated_normal, StudentCdf};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone)]
struct PatientState {
    c: usize,
    u: f64,
    g: f64,
    z: Vec<f64>,
    /// Student-noise precision multipliers of observed dimensions.
    h: Vec<f64>,
}

/// Random-walk step size tuned towards a target acceptance rate during burn-in.
#[derive(Debug, Clone, Copy)]
struct AdaptiveStep {
    log_scale: f64,
}

impl AdaptiveStep {
    fn new(scale: f64) -> Self {
        Self { log_scale: scale.ln() }
    }

    fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    fn adapt(&mut self, accepted: bool, target: f64, sweep: usize) {
        let gain = 1.0 / ((sweep + 1) as f64).powf(0.6);
        self.log_scale += gain * (if accepted { 1.0 } else { 0.0 } - target);
        self.log_scale = self.log_scale.clamp(-12.0, 4.0);
    }
}

struct ComponentCache {
    ln_weight: f64,
    ln_gamma_norm: f64,
    ln_scale_sum: f64,
    ln_marginal_const: f64,
    cdf: StudentCdf,
}

fn sample_log_categorical<R: Rng + ?Sized>(rng: &mut R, log_probs: &[f64]) -> usize {
    let max = log_probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = log_probs.iter().map(|l| (l - max).exp()).sum();
    let mut target = rng.random::<f64>() * total;
    for (k, l) in log_probs.iter().enumerate() {
        target -= (l - max).exp();
        if target <= 0.0 {
            return k;
        }
    }
    log_probs.len() - 1
}

/// Assignment given u, g and z (used when those are held fixed).
fn conditional_assignment<R: Rng + ?Sized>(
    components: &[Component],
    caches: &[ComponentCache],
    st: &PatientState,
    rng: &mut R,
    log_probs: &mut [f64],
) -> usize {
    let d = st.z.len();
    let sg = st.g.sqrt();
    let ln_g = st.g.ln();
    for (k, comp) in components.iter().enumerate() {
        let cache = &caches[k];
        let mut lp = cache.ln_weight + cache.ln_gamma_norm + (0.5 * comp.dof - 1.0) * ln_g - 0.5 * comp.dof * st.g
            + 0.5 * d as f64 * ln_g
            - cache.ln_scale_sum;
        for j in 0..d {
            let e = (sg * (st.z[j] - comp.location[j]) - comp.skew[j] * st.u) / comp.scale[j];
            lp -= 0.5 * e * e;
        }
        log_probs[k] = lp;
    }
    sample_log_categorical(rng, log_probs)
}

fn gamma_draw<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("gamma parameters").sample(rng)
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn accept<R: Rng + ?Sized>(rng: &mut R, log_ratio: f64) -> bool {
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

struct Chain<'a> {
    data: &'a LogData,
    hyper: &'a HyperParams,
    config: &'a ChainConfig,
    weights: Vec<f64>,
    components: Vec<Component>,
    censor_mu: f64,
    censor_sigma: f64,
    patients: Vec<PatientState>,
    patient_rngs: Vec<StreamRng>,
    rng: StreamRng,
    dof_steps: Vec<AdaptiveStep>,
    censor_mu_step: AdaptiveStep,
    censor_sigma_step: AdaptiveStep,
}

impl<'a> Chain<'a> {
    fn clamp(&self) -> &Clamp {
        &self.config.clamp
    }

    fn initial_components(data: &LogData, hyper: &HyperParams, clamp: &Clamp, rng: &mut StreamRng) -> Vec<Component> {
        let d = data.dims();
        let n = data.values.len();
        let dof = clamp.fixed_dof.unwrap_or(10.0);
        (0..hyper.components)
            .map(|_| {
                let seed_patient = rng.random_range(0..n);
                let location = data.values[seed_patient].clone();
                let scale = (0..d).map(|j| 0.5 * hyper.scale_rate[j].sqrt()).collect();
                Component { location, scale, skew: vec![0.0; d], dof }
            })
            .collect()
    }

    fn initial_patient(data: &LogData, components: &[Component], i: usize, supplied: Option<(&Latents, usize)>) -> PatientState {
        let d = data.dims();
        let time = d - 1;
        if let Some((l, idx)) = supplied {
            return PatientState {
                c: l.assignment[idx],
                u: l.skew_latent[idx],
                g: l.tail_latent[idx],
                z: l.true_values[idx].clone(),
                h: vec![1.0; d],
            };
        }
        let mut z = data.values[i].clone();
        if !data.relapsed[i] {
            z[time] += 0.3;
        }
        let c = (0..components.len())
            .map(|k| {
                let comp = &components[k];
                let dist: f64 = (0..d).map(|j| ((z[j] - comp.location[j]) / comp.scale[j]).powi(2)).sum();
                (k, dist)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k)
            .unwrap_or(0);
        PatientState { c, u: 0.8, g: 1.0, z, h: vec![1.0; d] }
    }

    fn new(data: &'a LogData, hyper: &'a HyperParams, config: &'a ChainConfig, init: Option<&MixtureSample>) -> Result<Self> {
        let n = data.values.len();
        let d = data.dims();
        let time = d - 1;
        let mut rng = rng::labelled_stream(config.seed, "mixture-global");
        let patient_rngs: Vec<StreamRng> =
            data.ids.iter().map(|id| rng::labelled_stream(rng::derive_seed(config.seed, 0x5eed), id)).collect();

        let (mut components, weights, censor_mu, censor_sigma) = match init {
            Some(s) => {
                s.validate()?;
                if s.dims() != d || s.components.len() != hyper.components {
                    return Err(Error::Init("initial sample does not match data dimensions or K".into()));
                }
                (s.components.clone(), s.weights.clone(), s.censor_mu, s.censor_sigma)
            }
            None => {
                let comps = Self::initial_components(data, hyper, &config.clamp, &mut rng);
                let censored: Vec<f64> = (0..n).filter(|&i| !data.relapsed[i]).map(|i| data.values[i][time]).collect();
                let all_mean = data.values.iter().map(|v| v[time]).sum::<f64>() / n as f64;
                let (mu, sigma) = if censored.len() >= 2 {
                    let m = censored.iter().sum::<f64>() / censored.len() as f64;
                    let v = censored.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (censored.len() - 1) as f64;
                    (m, v.sqrt().max(0.3))
                } else {
                    (all_mean + 1.0, 1.0)
                };
                (comps, vec![1.0 / hyper.components as f64; hyper.components], mu, sigma)
            }
        };
        if config.clamp.zero_skew {
            components.iter_mut().for_each(|c| c.skew.iter_mut().for_each(|s| *s = 0.0));
        }
        if let Some(dof) = config.clamp.fixed_dof {
            components.iter_mut().for_each(|c| c.dof = dof);
        }

        let supplied = init.and_then(|s| s.latents.as_ref());
        let lookup: std::collections::HashMap<&str, usize> = supplied
            .map(|l| l.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect())
            .unwrap_or_default();
        let mut patients = Vec::with_capacity(n);
        for i in 0..n {
            let given = supplied.and_then(|l| lookup.get(data.ids[i].as_str()).map(|&idx| (l, idx)));
            if supplied.is_some() && given.is_none() {
                return Err(Error::Init(format!("initial latents lack patient `{}`", data.ids[i])));
            }
            patients.push(Self::initial_patient(data, &components, i, given));
        }
        let mut weights = weights;
        if init.is_none() {
            let mut counts = vec![1.0; hyper.components];
            patients.iter().for_each(|p| counts[p.c] += 1.0);
            let total: f64 = counts.iter().sum();
            weights = counts.iter().map(|c| c / total).collect();
        }

        let chain = Self {
            data,
            hyper,
            config,
            weights,
            components,
            censor_mu,
            censor_sigma,
            patients,
            patient_rngs,
            rng,
            dof_steps: vec![AdaptiveStep::new(0.5); hyper.components],
            censor_mu_step: AdaptiveStep::new(0.1),
            censor_sigma_step: AdaptiveStep::new(0.1),
        };
        let lp = chain.log_posterior();
        if !lp.is_finite() {
            return Err(Error::Init(format!("log posterior at the initial state is {lp}")));
        }
        Ok(chain)
    }

    fn snapshot(&self, with_latents: bool) -> MixtureSample {
        MixtureSample {
            weights: self.weights.clone(),
            components: self.components.clone(),
            censor_mu: self.censor_mu,
            censor_sigma: self.censor_sigma,
            latents: with_latents.then(|| Latents {
                ids: self.data.ids.clone(),
                assignment: self.patients.iter().map(|p| p.c).collect(),
                skew_latent: self.patients.iter().map(|p| p.u).collect(),
                tail_latent: self.patients.iter().map(|p| p.g).collect(),
                true_values: self.patients.iter().map(|p| p.z.clone()).collect(),
            }),
        }
    }

    fn log_posterior(&self) -> f64 {
        let sample = self.snapshot(false);
        let mut lp = log_prior(&sample, self.hyper);
        for (i, p) in self.patients.iter().enumerate() {
            lp += patient_log_likelihood(&sample, self.hyper, &self.data.values[i], self.data.relapsed[i], p.c, p.u, p.g, &p.z);
        }
        lp
    }

    fn sweep(&mut self, index: usize) {
        self.update_patients();
        self.update_weights();
        if !self.clamp().freeze_components {
            self.update_components(index);
        }
        if !self.clamp().freeze_censoring {
            self.update_censoring(index);
        }
    }

    fn update_patients(&mut self) {
        let hyper = self.hyper;
        let d = self.data.dims();
        let time = d - 1;
        let noise_var = hyper.noise_scale * hyper.noise_scale;
        let caches: Vec<ComponentCache> = self
            .components
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| ComponentCache {
                ln_weight: w.ln(),
                ln_gamma_norm: 0.5 * c.dof * (0.5 * c.dof).ln() - ln_gamma(0.5 * c.dof),
                ln_scale_sum: c.scale.iter().map(|s| s.ln()).sum(),
                ln_marginal_const: SkewStudentPart::log_constant(c.dof, d),
                cdf: StudentCdf::new(c.dof + d as f64),
            })
            .collect();
        let clamp = &self.config.clamp;
        let mut log_probs = vec![0.0; self.components.len()];
        let mut tilts = vec![(0.0, 0.0, 0.0); self.components.len()];

        for i in 0..self.patients.len() {
            let rng = &mut self.patient_rngs[i];
            let st = &mut self.patients[i];
            let y = &self.data.values[i];
            let relapsed = self.data.relapsed[i];

            if clamp.freeze_latents {
                if self.components.len() > 1 {
                    st.c = conditional_assignment(&self.components, &caches, st, rng, &mut log_probs);
                }
                continue;
            }

            if !clamp.freeze_true_values {
                let comp = &self.components[st.c];
                let sg = st.g.sqrt();
                for j in 0..d {
                    let var_p = comp.scale[j] * comp.scale[j] / st.g;
                    let mean_p = comp.location[j] + comp.skew[j] * st.u / sg;
                    if j == time && !relapsed {
                        st.z[j] = sample_truncated_normal(rng, mean_p, var_p.sqrt(), y[j]);
                        continue;
                    }
                    let prec_p = 1.0 / var_p;
                    let prec_o = st.h[j] / noise_var;
                    let prec = prec_p + prec_o;
                    let mean = (prec_p * mean_p + prec_o * y[j]) / prec;
                    let proposal = mean + normal(rng) / prec.sqrt();
                    if j < time {
                        st.z[j] = proposal;
                    } else {
                        let surv = |v: f64| ln_norm_cdf(-(v - self.censor_mu) / self.censor_sigma);
                        if accept(rng, surv(proposal) - surv(st.z[j])) {
                            st.z[j] = proposal;
                        }
                    }
                }
                for j in 0..d {
                    if j == time && !relapsed {
                        continue;
                    }
                    let r = (y[j] - st.z[j]) / hyper.noise_scale;
                    st.h[j] = gamma_draw(rng, 0.5 * (hyper.noise_dof + 1.0), 0.5 * (hyper.noise_dof + r * r));
                }
            }

            // (c, g) jointly with u integrated out: c from its exact conditional
            // given z, g from Gamma((ν+D)/2, (ν+Q)/2), corrected by Φ(η√g)/T.
            for (k, comp) in self.components.iter().enumerate() {
                let cache = &caches[k];
                let mut part = SkewStudentPart::default();
                for j in 0..d {
                    part.push(comp, j, st.z[j]);
                }
                log_probs[k] = cache.ln_weight + part.log_density_with(cache.ln_marginal_const, &cache.cdf);
                let q = part.a - part.b * part.b / (1.0 + part.c);
                let eta = part.b / (1.0 + part.c).sqrt();
                let ln_t = cache.cdf.ln_cdf(eta * ((comp.dof + d as f64) / (comp.dof + q)).sqrt());
                tilts[k] = (eta, ln_t, q);
            }
            let proposed_c = if self.components.len() > 1 { sample_log_categorical(rng, &log_probs) } else { 0 };
            let comp_new = &self.components[proposed_c];
            let (eta_new, ln_t_new, q_new) = tilts[proposed_c];
            let g_new = gamma_draw(rng, 0.5 * (comp_new.dof + d as f64), 0.5 * (comp_new.dof + q_new));
            let (eta_old, ln_t_old, _) = tilts[st.c];
            let log_ratio = (ln_norm_cdf(eta_new * g_new.sqrt()) - ln_t_new) - (ln_norm_cdf(eta_old * st.g.sqrt()) - ln_t_old);
            if g_new > 0.0 && accept(rng, log_ratio) {
                st.c = proposed_c;
                st.g = g_new;
            }

            // skew latent given (c, g, z)
            let comp = &self.components[st.c];
            let sg = st.g.sqrt();
            let mut prec = 1.0;
            let mut lin = 0.0;
            for j in 0..d {
                let s2 = comp.scale[j] * comp.scale[j];
                prec += comp.skew[j] * comp.skew[j] / s2;
                lin += comp.skew[j] * sg * (st.z[j] - comp.location[j]) / s2;
            }
            st.u = sample_truncated_normal(rng, lin / prec, 1.0 / prec.sqrt(), 0.0);
        }
    }

    fn update_weights(&mut self) {
        let k = self.components.len();
        let a = self.hyper.concentration / k as f64;
        let mut counts = vec![0usize; k];
        self.patients.iter().for_each(|p| counts[p.c] += 1);
        // log Gamma(shape) via Gamma(shape + 1) · U^{1/shape}, stable for small shapes
        let logs: Vec<f64> = counts
            .iter()
            .map(|&n| {
                let shape = a + n as f64;
                let g = gamma_draw(&mut self.rng, shape + 1.0, 1.0);
                let u: f64 = self.rng.random::<f64>().max(f64::MIN_POSITIVE);
                g.ln() + u.ln() / shape
            })
            .collect();
        let lse = crate::numeric::log_sum_exp(&logs);
        let mut w: Vec<f64> = logs.iter().map(|l| (l - lse).exp().max(1e-300)).collect();
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= sum);
        self.weights = w;
    }

    fn update_components(&mut self, sweep: usize) {
        let hyper = self.hyper;
        let d = self.data.dims();
        let zero_skew = self.config.clamp.zero_skew;
        let burning = sweep < self.config.burn_in;
        for k in 0..self.components.len() {
            let members: Vec<usize> = (0..self.patients.len()).filter(|&i| self.patients[i].c == k).collect();
            // v_i = u_i / √g_i is the skew regressor; g_i are precision weights
            let v: Vec<f64> = members.iter().map(|&i| self.patients[i].u / self.patients[i].g.sqrt()).collect();
            for j in 0..d {
                let s2 = {
                    let s = self.components[k].scale[j];
                    s * s
                };
                let (m0, p_loc) = (hyper.location_mean[j], 1.0 / hyper.location_sd[j].powi(2));
                let p_skew = 1.0 / hyper.skew_sd[j].powi(2);
                let mut s_g = 0.0;
                let mut s_gv = 0.0;
                let mut s_gvv = 0.0;
                let mut s_gz = 0.0;
                let mut s_gvz = 0.0;
                for (idx, &i) in members.iter().enumerate() {
                    let p = &self.patients[i];
                    s_g += p.g;
                    s_gv += p.g * v[idx];
                    s_gvv += p.g * v[idx] * v[idx];
                    s_gz += p.g * p.z[j];
                    s_gvz += p.g * v[idx] * p.z[j];
                }
                if zero_skew {
                    let prec = p_loc + s_g / s2;
                    let mean = (p_loc * m0 + s_gz / s2) / prec;
                    self.components[k].location[j] = mean + normal(&mut self.rng) / prec.sqrt();
                } else {
                    // bivariate normal for (ξ, δ)
                    let l11 = p_loc + s_g / s2;
                    let l12 = s_gv / s2;
                    let l22 = p_skew + s_gvv / s2;
                    let b1 = p_loc * m0 + s_gz / s2;
                    let b2 = s_gvz / s2;
                    let det = l11 * l22 - l12 * l12;
                    let mean1 = (l22 * b1 - l12 * b2) / det;
                    let mean2 = (l11 * b2 - l12 * b1) / det;
                    // Λ = L Lᵀ; draw mean + L⁻ᵀ ε
                    let c11 = l11.sqrt();
                    let c21 = l12 / c11;
                    let c22 = (l22 - c21 * c21).sqrt();
                    let (e1, e2) = (normal(&mut self.rng), normal(&mut self.rng));
                    let x2 = e2 / c22;
                    let x1 = (e1 - c21 * x2) / c11;
                    self.components[k].location[j] = mean1 + x1;
                    self.components[k].skew[j] = mean2 + x2;
                }
                let (xi, delta) = (self.components[k].location[j], self.components[k].skew[j]);
                let ss: f64 = members
                    .iter()
                    .enumerate()
                    .map(|(idx, &i)| {
                        let p = &self.patients[i];
                        p.g * (p.z[j] - xi - delta * v[idx]).powi(2)
                    })
                    .sum();
                let shape = hyper.scale_shape + 0.5 * members.len() as f64;
                let rate = hyper.scale_rate[j] + 0.5 * ss;
                let var = 1.0 / gamma_draw(&mut self.rng, shape, rate);
                self.components[k].scale[j] = var.sqrt().max(1e-8);
            }

            match self.config.clamp.fixed_dof {
                Some(dof) => self.components[k].dof = dof,
                None => {
                    let gs: Vec<f64> = members.iter().map(|&i| self.patients[i].g).collect();
                    let target = |dof: f64| -> f64 {
                        if dof <= hyper.dof_min {
                            return f64::NEG_INFINITY;
                        }
                        let half = 0.5 * dof;
                        gs.iter().map(|&g| ln_gamma_pdf(g, half, half)).sum::<f64>() - hyper.dof_rate * (dof - hyper.dof_min)
                    };
                    let current = self.components[k].dof;
                    let phi = (current - hyper.dof_min).ln();
                    let phi_new = phi + self.dof_steps[k].scale() * normal(&mut self.rng);
                    let proposal = hyper.dof_min + phi_new.exp();
                    // random walk on log(ν − ν_min); Jacobian ν − ν_min
                    let log_ratio = target(proposal) - target(current) + (phi_new - phi);
                    let ok = proposal.is_finite() && accept(&mut self.rng, log_ratio);
                    if ok {
                        self.components[k].dof = proposal;
                    }
                    if burning {
                        self.dof_steps[k].adapt(ok, self.config.target_acceptance, sweep);
                    }
                }
            }
        }
    }

    fn censor_log_target(&self, mu: f64, sigma: f64) -> f64 {
        let hyper = self.hyper;
        let time = self.data.dims() - 1;
        let mut lp = ln_norm_pdf((mu - hyper.censor_mu_mean) / hyper.censor_mu_sd)
            + ln_norm_pdf(sigma / hyper.censor_sigma_scale);
        for (i, p) in self.patients.iter().enumerate() {
            if self.data.relapsed[i] {
                lp += ln_norm_cdf(-(p.z[time] - mu) / sigma);
            } else {
                lp += ln_norm_pdf((self.data.values[i][time] - mu) / sigma) - sigma.ln();
            }
        }
        lp
    }

    fn update_censoring(&mut self, sweep: usize) {
        let burning = sweep < self.config.burn_in;
        let target = self.config.target_acceptance;
        let current = self.censor_log_target(self.censor_mu, self.censor_sigma);
        let mu_new = self.censor_mu + self.censor_mu_step.scale() * normal(&mut self.rng);
        let proposed = self.censor_log_target(mu_new, self.censor_sigma);
        let ok = accept(&mut self.rng, proposed - current);
        let current = if ok {
            self.censor_mu = mu_new;
            proposed
        } else {
            current
        };
        if burning {
            self.censor_mu_step.adapt(ok, target, sweep);
        }
        let log_sigma = self.censor_sigma.ln();
        let log_sigma_new = log_sigma + self.censor_sigma_step.scale() * normal(&mut self.rng);
        let sigma_new = log_sigma_new.exp();
        let proposed = self.censor_log_target(self.censor_mu, sigma_new);
        let ok = sigma_new > 0.0 && accept(&mut self.rng, proposed - current + (log_sigma_new - log_sigma));
        if ok {
            self.censor_sigma = sigma_new;
        }
        if burning {
            self.censor_sigma_step.adapt(ok, target, sweep);
        }
    }
}

/// Runs one chain and returns the kept samples (with latent state).
pub fn run_mcmc(train: &Cohort, hyper: &HyperParams, config: &ChainConfig) -> Result<Vec<MixtureSample>> {
    run_mcmc_from(train, hyper, config, None)
}

/// As [`run_mcmc`], starting from a given state. Latents in `init`, when
/// present, must cover every training patient.
pub fn run_mcmc_from(
    train: &Cohort,
    hyper: &HyperParams,
    config: &ChainConfig,
    init: Option<&MixtureSample>,
) -> Result<Vec<MixtureSample>> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training cohort is empty".into()));
    }
    let data = LogData::new(train);
    hyper.validate(data.dims())?;
    let mut chain = Chain::new(&data, hyper, config, init)?;
    for sweep in 0..config.burn_in {
        chain.sweep(sweep);
    }
    let mut kept = Vec::with_capacity(config.samples);
    let mut sweep = config.burn_in;
    for _ in 0..config.samples {
        for _ in 0..config.thin {
            chain.sweep(sweep);
            sweep += 1;
        }
        kept.push(chain.snapshot(true));
    }
    log::debug!(
        "mixture chain finished: {} sweeps, final weights {:?}",
        sweep,
        chain.weights.iter().map(|w| (w * 1000.0).round() / 1000.0).collect::<Vec<_>>()
    );
    Ok(kept)
}
