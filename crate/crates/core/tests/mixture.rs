mod common;

use common::{augmented_log_density, normal_cohort, quadrature_density, rng};
use proptest::prelude::*;
use rand::Rng;
use relapse_lab::diagnostics::effective_sample_size;
use relapse_lab::mixture::{
    component_log_density, joint_log_density, predictive_curve, predictive_total_mass, run_mcmc, run_mcmc_from,
    ChainConfig, Clamp, Component, HyperParams, Latents, MixtureSample,
};
use relapse_lab::synth::{generate_mixture_cohort, MixtureTruth};
use relapse_lab::{Cohort, PatientRecord};
use statrs::function::gamma::ln_gamma;

fn skewed_component() -> Component {
    Component {
        location: vec![0.3, -1.0, 2.0],
        scale: vec![0.7, 1.3, 0.5],
        skew: vec![1.2, -0.4, 0.8],
        dof: 4.5,
    }
}

#[test]
fn skew_student_density_matches_latent_quadrature() {
    let comp = skewed_component();
    let points = [[0.3, -1.0, 2.0], [1.5, -0.2, 2.6], [-0.8, -3.0, 1.1], [2.5, 1.0, 4.0]];
    for z in &points {
        for dims in [vec![0, 1, 2], vec![0, 2], vec![1]] {
            let closed = component_log_density(&comp, z, &dims);
            let oracle = quadrature_density(&comp, z, &dims).ln();
            assert!((closed - oracle).abs() < 1e-6, "z {z:?} dims {dims:?}: {closed} vs {oracle}");
        }
    }
}

fn fixed_component_sample(components: Vec<Component>, weights: Vec<f64>, censor_mu: f64) -> MixtureSample {
    MixtureSample { weights, components, censor_mu, censor_sigma: 1.0, latents: None }
}

#[test]
fn covariate_free_component_gives_log_normal_curve() {
    // huge covariate scales make the covariates uninformative; large ν and
    // zero skew make log time normal
    let comp = Component { location: vec![1.0, 0.5, 2.5], scale: vec![1e4, 1e4, 0.8], skew: vec![0.0; 3], dof: 1e6 };
    let samples = vec![fixed_component_sample(vec![comp], vec![1.0], 5.0)];
    let curve = predictive_curve(&samples, &[3.0, 0.7], 100.0).unwrap();
    let (mu, sd) = (2.5f64, 0.8f64);
    let mut worst: f64 = 0.0;
    for i in 0..=400 {
        let t = 0.1 + 99.9 * i as f64 / 400.0;
        let e = (t.ln() - mu) / sd;
        let direct = (-0.5 * e * e).exp() / (sd * t * (2.0 * std::f64::consts::PI).sqrt());
        worst = worst.max((curve.density_at(t).unwrap() - direct).abs());
    }
    assert!(worst < 1e-3, "sup-norm {worst}");
    let e = ((100f64).ln() - mu) / sd;
    let tail = 0.5 * statrs::function::erf::erfc(e / std::f64::consts::SQRT_2);
    assert!((curve.survival_at_horizon() - tail).abs() < 1e-3);
}

#[test]
fn skewed_time_conditional_matches_quadrature() {
    let comp = Component { location: vec![0.0, 2.0], scale: vec![1e4, 0.6], skew: vec![0.0, 0.9], dof: 5.0 };
    let samples = vec![fixed_component_sample(vec![comp.clone()], vec![1.0], 5.0)];
    let curve = predictive_curve(&samples, &[1.0], 100.0).unwrap();
    // conditioning on x changes the dof even when x is uninformative
    let marginal = quadrature_density(&comp, &[0.0, 0.0], &[0]);
    for t in [0.5f64, 3.0, 7.5, 20.0, 60.0] {
        let oracle = quadrature_density(&comp, &[0.0, t.ln()], &[0, 1]) / marginal / t;
        let got = curve.density_at(t).unwrap();
        assert!((got - oracle).abs() < 1e-3 * oracle.max(1e-3), "t {t}: {got} vs {oracle}");
    }
}

#[test]
fn single_normal_component_recovers_locations() {
    let truth = [1.0, 2.0, 3.0];
    let sd = [0.5, 0.3, 0.6];
    let cohort = normal_cohort(300, &truth, &sd, 41);
    let mut hyper = HyperParams::empirical(&cohort).unwrap();
    hyper.components = 1;
    let init = MixtureSample {
        weights: vec![1.0],
        components: vec![Component { location: truth.to_vec(), scale: sd.to_vec(), skew: vec![0.0; 3], dof: 1e6 }],
        // no censoring: the censor time sits far beyond every relapse
        censor_mu: 30.0,
        censor_sigma: 1.0,
        latents: None,
    };
    let config = ChainConfig {
        burn_in: 500,
        samples: 600,
        thin: 2,
        seed: 8,
        clamp: Clamp { zero_skew: true, fixed_dof: Some(1e6), freeze_censoring: true, ..Clamp::default() },
        ..ChainConfig::default()
    };
    let samples = run_mcmc_from(&cohort, &hyper, &config, Some(&init)).unwrap();
    for j in 0..3 {
        let xs: Vec<f64> = samples.iter().map(|s| s.components[0].location[j]).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        let z = (mean - truth[j]) / var.sqrt();
        assert!(z.abs() < 3.0, "dimension {j}: mean {mean}, sd {}, z {z}", var.sqrt());
        assert!(samples.iter().all(|s| s.components[0].skew[j] == 0.0));
    }
    assert!(samples.iter().all(|s| s.components[0].dof == 1e6 && s.censor_mu == 30.0));
}

fn small_config(seed: u64) -> ChainConfig {
    ChainConfig { burn_in: 200, samples: 40, thin: 2, seed, ..ChainConfig::default() }
}

#[test]
fn chain_is_deterministic_and_order_free() {
    let cohort = generate_mixture_cohort(&MixtureTruth::smooth_default(), 60, 5).unwrap();
    let hyper = HyperParams::empirical(&cohort).unwrap();
    let a = run_mcmc(&cohort, &hyper, &small_config(3)).unwrap();
    let b = run_mcmc(&cohort, &hyper, &small_config(3)).unwrap();
    assert_eq!(a, b);
    let mut shuffled: Vec<PatientRecord> = cohort.patients().to_vec();
    shuffled.reverse();
    shuffled.swap(3, 17);
    let permuted = Cohort::new(cohort.schema().to_vec(), shuffled).unwrap();
    let c = run_mcmc(&permuted, &hyper, &small_config(3)).unwrap();
    assert_eq!(a, c);
    let other = run_mcmc(&cohort, &hyper, &small_config(4)).unwrap();
    assert_ne!(a, other);
    assert!(a.iter().all(|s| s.validate().is_ok()));
}

#[test]
fn predictive_curves_are_normalized() {
    let cohort = generate_mixture_cohort(&MixtureTruth::smooth_default(), 80, 12).unwrap();
    let hyper = HyperParams::empirical(&cohort).unwrap();
    let samples: Vec<MixtureSample> =
        run_mcmc(&cohort, &hyper, &small_config(1)).unwrap().iter().map(|s| s.without_latents()).collect();
    let mut r = rng(77);
    let width = cohort.width();
    for _ in 0..100 {
        let base = &cohort.patients()[r.random_range(0..cohort.len())];
        let x: Vec<f64> = (0..width).map(|j| base.covariates[j] * (r.random::<f64>() - 0.5).exp()).collect();
        let total = predictive_total_mass(&samples, &x).unwrap();
        assert!((total - 1.0).abs() < 1e-3, "total mass {total}");
        let curve = predictive_curve(&samples, &x, 100.0).unwrap();
        assert!((curve.mass_within_horizon() + curve.survival_at_horizon() - 1.0).abs() < 1e-3);
        let again = predictive_curve(&samples, &x, 100.0).unwrap();
        assert_eq!(curve, again);
    }
}

#[test]
fn predicted_median_follows_a_strong_covariate() {
    let mut r = rng(3);
    let std = rand_distr::Normal::new(0.0, 1.0).unwrap();
    let patients: Vec<PatientRecord> = (0..150)
        .map(|i| {
            let lx: f64 = 1.0 + 0.5 * rand_distr::Distribution::sample(&std, &mut r);
            let noise: f64 = rand_distr::Distribution::sample(&std, &mut r);
            let other: f64 = rand_distr::Distribution::sample(&std, &mut r);
            let lt = 2.0 + 1.5 * (lx - 1.0) + 0.3 * noise;
            PatientRecord {
                id: format!("S{i:03}"),
                covariates: vec![lx.exp(), (0.5 + 0.4 * other).exp()],
                time_months: lt.exp(),
                relapsed: true,
            }
        })
        .collect();
    let cohort = Cohort::new(common::schema(2), patients).unwrap();
    let hyper = HyperParams::empirical(&cohort).unwrap();
    let config = ChainConfig { burn_in: 600, samples: 60, thin: 5, seed: 2, ..ChainConfig::default() };
    let samples: Vec<MixtureSample> =
        run_mcmc(&cohort, &hyper, &config).unwrap().iter().map(|s| s.without_latents()).collect();
    let median = |x: f64| {
        let curve = predictive_curve(&samples, &[x, 0.5f64.exp()], 100.0).unwrap();
        let (mut lo, mut hi) = (0.0, 100.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if curve.survival_at(mid).unwrap() > 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let medians: Vec<f64> = [0.3f64, 0.65, 1.0, 1.35, 1.7].iter().map(|lx| median(lx.exp())).collect();
    assert!(medians.windows(2).all(|w| w[1] > w[0]), "{medians:?}");
}

fn two_components() -> Vec<Component> {
    vec![
        Component { location: vec![0.5, 1.8], scale: vec![0.6, 0.7], skew: vec![0.4, -0.3], dof: 6.0 },
        Component { location: vec![1.2, 2.6], scale: vec![0.5, 0.9], skew: vec![-0.2, 0.6], dof: 3.0 },
    ]
}

fn five_patients() -> (Cohort, Vec<Vec<f64>>) {
    let logs: Vec<Vec<f64>> = vec![vec![0.4, 1.7], vec![1.3, 2.9], vec![0.9, 2.2], vec![0.2, 1.4], vec![1.6, 2.4]];
    let patients = logs
        .iter()
        .enumerate()
        .map(|(i, z)| PatientRecord {
            id: format!("D{i}"),
            covariates: vec![z[0].exp()],
            time_months: z[1].exp(),
            relapsed: true,
        })
        .collect();
    (Cohort::new(common::schema(1), patients).unwrap(), logs)
}

/// Exact E[w_0] given per-patient log likelihoods of each component, by
/// enumerating all assignments; weights are Dirichlet(α/K) a priori.
fn enumerate_weight_mean(loglik: &[[f64; 2]], alpha: f64) -> f64 {
    let n = loglik.len();
    let a = alpha / 2.0;
    let mut num = 0.0;
    let mut den = 0.0;
    for mask in 0..(1u32 << n) {
        let n1 = mask.count_ones() as f64;
        let n0 = n as f64 - n1;
        let ll: f64 = (0..n).map(|i| loglik[i][((mask >> i) & 1) as usize]).sum();
        // Dirichlet-multinomial marginal of the assignment
        let lw = ll + ln_gamma(a + n0) + ln_gamma(a + n1);
        let p = lw.exp();
        den += p;
        num += p * (a + n0) / (alpha + n as f64);
    }
    num / den
}

fn chain_weight_mean(samples: &[MixtureSample]) -> (f64, f64) {
    let w: Vec<f64> = samples.iter().map(|s| s.weights[0]).collect();
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
    (mean, (var / effective_sample_size(&w)).sqrt())
}

#[test]
fn assignment_and_weight_updates_have_the_right_stationary_law() {
    let (cohort, logs) = five_patients();
    let mut hyper = HyperParams::empirical(&cohort).unwrap();
    hyper.components = 2;
    let comps = two_components();
    let u = [0.3, 1.1, 0.6, 0.2, 0.9];
    let g = [0.8, 1.4, 1.0, 0.6, 1.9];
    let init = MixtureSample {
        weights: vec![0.5, 0.5],
        components: comps.clone(),
        censor_mu: 8.0,
        censor_sigma: 1.0,
        latents: Some(Latents {
            ids: (0..5).map(|i| format!("D{i}")).collect(),
            assignment: vec![0, 1, 0, 0, 1],
            skew_latent: u.to_vec(),
            tail_latent: g.to_vec(),
            true_values: logs.clone(),
        }),
    };
    let config = ChainConfig {
        burn_in: 1000,
        samples: 50_000,
        thin: 1,
        seed: 21,
        clamp: Clamp { freeze_components: true, freeze_latents: true, freeze_censoring: true, ..Clamp::default() },
        ..ChainConfig::default()
    };
    let samples = run_mcmc_from(&cohort, &hyper, &config, Some(&init)).unwrap();
    let loglik: Vec<[f64; 2]> = (0..5)
        .map(|i| [0, 1].map(|k| augmented_log_density(&comps[k], &logs[i], &[0, 1], u[i], g[i])))
        .collect();
    let exact = enumerate_weight_mean(&loglik, hyper.concentration);
    let (mean, mc_sd) = chain_weight_mean(&samples);
    assert!((mean - exact).abs() < 3.0 * mc_sd, "chain {mean} ± {mc_sd}, exact {exact}");
}

#[test]
fn blocked_assignment_move_targets_the_marginal_law() {
    let (cohort, logs) = five_patients();
    let mut hyper = HyperParams::empirical(&cohort).unwrap();
    hyper.components = 2;
    let comps = two_components();
    let init = MixtureSample {
        weights: vec![0.5, 0.5],
        components: comps.clone(),
        censor_mu: 8.0,
        censor_sigma: 1.0,
        latents: Some(Latents {
            ids: (0..5).map(|i| format!("D{i}")).collect(),
            assignment: vec![1, 1, 0, 1, 0],
            skew_latent: vec![0.5; 5],
            tail_latent: vec![1.0; 5],
            true_values: logs.clone(),
        }),
    };
    let config = ChainConfig {
        burn_in: 1000,
        samples: 50_000,
        thin: 1,
        seed: 5,
        clamp: Clamp {
            freeze_components: true,
            freeze_true_values: true,
            freeze_censoring: true,
            ..Clamp::default()
        },
        ..ChainConfig::default()
    };
    let samples = run_mcmc_from(&cohort, &hyper, &config, Some(&init)).unwrap();
    // u and g integrated out by quadrature
    let loglik: Vec<[f64; 2]> =
        (0..5).map(|i| [0, 1].map(|k| quadrature_density(&comps[k], &logs[i], &[0, 1]).ln())).collect();
    let exact = enumerate_weight_mean(&loglik, hyper.concentration);
    let (mean, mc_sd) = chain_weight_mean(&samples);
    assert!((mean - exact).abs() < 3.0 * mc_sd, "chain {mean} ± {mc_sd}, exact {exact}");
    assert!(samples.iter().all(|s| s.latents.as_ref().unwrap().true_values == logs));
}

fn random_state(r: &mut impl Rng, cohort: &Cohort, k: usize) -> MixtureSample {
    let d = cohort.width() + 1;
    let components = (0..k)
        .map(|_| Component {
            location: (0..d).map(|_| r.random_range(-1.0..4.0)).collect(),
            scale: (0..d).map(|_| r.random_range(0.1..2.0)).collect(),
            skew: (0..d).map(|_| r.random_range(-2.0..2.0)).collect(),
            dof: r.random_range(2.0..40.0),
        })
        .collect();
    let raw: Vec<f64> = (0..k).map(|_| r.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut ids: Vec<String> = cohort.patients().iter().map(|p| p.id.clone()).collect();
    ids.sort();
    let true_values = ids
        .iter()
        .map(|id| {
            let p = cohort.get(id).unwrap();
            let mut z: Vec<f64> = p.log_covariates().iter().map(|v| v + r.random_range(-0.2..0.2)).collect();
            let lt = p.time_months.ln();
            z.push(if p.relapsed { lt + r.random_range(-0.2..0.2) } else { lt + r.random_range(0.01..2.0) });
            z
        })
        .collect();
    MixtureSample {
        weights: raw.iter().map(|w| w / total).collect(),
        components,
        censor_mu: r.random_range(2.0..5.0),
        censor_sigma: r.random_range(0.2..2.0),
        latents: Some(Latents {
            assignment: ids.iter().map(|_| r.random_range(0..k)).collect(),
            skew_latent: ids.iter().map(|_| r.random_range(0.0..3.0)).collect(),
            tail_latent: ids.iter().map(|_| r.random_range(0.1..3.0)).collect(),
            ids,
            true_values,
        }),
    }
}

#[test]
fn joint_density_is_finite_on_random_states() {
    let cohort = generate_mixture_cohort(&MixtureTruth::smooth_default(), 40, 9).unwrap();
    let hyper = HyperParams::empirical(&cohort).unwrap();
    let mut r = rng(10);
    for _ in 0..100 {
        let s = random_state(&mut r, &cohort, 5);
        let lp = joint_log_density(&s, &hyper, &cohort).unwrap();
        assert!(lp.total().is_finite(), "{lp:?}");
    }
}

#[test]
fn censored_latent_below_threshold_has_zero_density() {
    let cohort = generate_mixture_cohort(&MixtureTruth::smooth_default(), 40, 9).unwrap();
    let hyper = HyperParams::empirical(&cohort).unwrap();
    let mut s = random_state(&mut rng(2), &cohort, 3);
    let lat = s.latents.as_mut().unwrap();
    let i = lat.ids.iter().position(|id| !cohort.get(id).unwrap().relapsed).expect("a censored patient");
    let threshold = cohort.get(&lat.ids[i]).unwrap().time_months.ln();
    let time = lat.true_values[i].len() - 1;
    lat.true_values[i][time] = threshold - 0.1;
    assert_eq!(joint_log_density(&s, &hyper, &cohort).unwrap().total(), f64::NEG_INFINITY);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn likelihood_is_translation_invariant(seed in 0u64..1000, shift in -2.0f64..2.0) {
        let cohort = generate_mixture_cohort(&MixtureTruth::smooth_default(), 30, seed).unwrap();
        let hyper = HyperParams::empirical(&cohort).unwrap();
        let s = random_state(&mut rng(seed), &cohort, 3);
        let base = joint_log_density(&s, &hyper, &cohort).unwrap();

        let mut moved = s.clone();
        moved.components.iter_mut().for_each(|c| c.location[0] += shift);
        moved.latents.as_mut().unwrap().true_values.iter_mut().for_each(|z| z[0] += shift);
        let patients: Vec<PatientRecord> = cohort
            .patients()
            .iter()
            .map(|p| {
                let mut q = p.clone();
                q.covariates[0] *= shift.exp();
                q
            })
            .collect();
        let shifted = Cohort::new(cohort.schema().to_vec(), patients).unwrap();
        let after = joint_log_density(&moved, &hyper, &shifted).unwrap();
        prop_assert!((after.likelihood - base.likelihood).abs() < 1e-8 * (1.0 + base.likelihood.abs()));
    }
}
