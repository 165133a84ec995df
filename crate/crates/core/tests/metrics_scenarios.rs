mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::Rng;
use relapse_lab::constant_hazard::{ch_predictive, fit_constant_hazard};
use relapse_lab::cox::{blur_spikes, fit_cox, predict_spikes};
use relapse_lab::metrics::{
    compare_methods, concordance, forecast_pair_probability, order_asi, order_contribution, pair_probability,
    time_asi, InfoReport,
};
use relapse_lab::prediction::SurvivalPrediction;
use relapse_lab::prior::{fit_exponential_prior, prior_prediction};
use relapse_lab::scenarios::{make_split, memorizer_demo, run_scenario, EvalConfig, Method, Scenario};
use relapse_lab::synth::{generate_synthetic, SynthConfig};
use relapse_lab::{BootConfig, Cohort, Forecast, PatientRecord};

fn boot(seed: u64) -> BootConfig {
    BootConfig { iterations: 2000, seed }
}

fn ph(n: usize, seed: u64) -> Cohort {
    generate_synthetic(&SynthConfig { n, ..SynthConfig::default() }, seed).unwrap()
}

fn null(n: usize, seed: u64) -> Cohort {
    generate_synthetic(&SynthConfig { n, beta: vec![0.0; 12], ..SynthConfig::default() }, seed).unwrap()
}

/// A prediction of one of three shapes, built from a seed.
fn prediction(seed: u64) -> SurvivalPrediction {
    let c = ph(60, seed);
    let x = &c.patients()[0].covariates;
    match seed % 3 {
        0 => ch_predictive(&fit_constant_hazard(&c).unwrap(), x, 100.0).unwrap(),
        1 => blur_spikes(&predict_spikes(&fit_cox(&c).unwrap(), x, 100.0).unwrap(), 100.0).unwrap(),
        _ => {
            let times = relapse_lab::prediction::log_time_grid(100.0);
            let a = 0.002 + (seed % 7) as f64 * 0.003;
            let d = times.iter().map(|t| a * (1.0 + (t * 0.2).cos()) / (1.0 + 0.05 * t)).collect();
            SurvivalPrediction::gridded(times, d, 0.001, 100.0).unwrap()
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn pair_probabilities_are_antisymmetric(a in 0u64..10_000, b in 0u64..10_000) {
        let (pa, pb) = (prediction(a), prediction(b));
        let p = pair_probability(&pa, &pb).unwrap();
        let q = pair_probability(&pb, &pa).unwrap();
        prop_assert!((p + q - 1.0).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&p));
        let (fa, fb) = (Forecast::from(pa.clone()), Forecast::from(pb));
        prop_assert_eq!(forecast_pair_probability(&fa, &fb).unwrap(), p);
        prop_assert!((pair_probability(&pa, &pa).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn time_information_ignores_patient_order(seed in 0u64..1000) {
        let train = ph(120, seed);
        let test = ph(60, seed + 5000);
        let model = fit_constant_hazard(&train).unwrap();
        let prior = prior_prediction(&fit_exponential_prior(&train).unwrap(), 100.0).unwrap();
        let preds: BTreeMap<String, Forecast> = test
            .patients()
            .iter()
            .map(|p| (p.id.clone(), ch_predictive(&model, &p.covariates, 100.0).unwrap().into()))
            .collect();
        let mut patients = test.patients().to_vec();
        let mut r = common::rng(seed);
        for i in (1..patients.len()).rev() {
            patients.swap(i, r.random_range(0..=i));
        }
        let shuffled = Cohort::new(test.schema().to_vec(), patients).unwrap();
        let a = time_asi(&preds, &test, &prior, boot(1)).unwrap();
        let b = time_asi(&preds, &shuffled, &prior, boot(1)).unwrap();
        prop_assert!((a.point - b.point).abs() < 1e-12);
    }

    #[test]
    fn order_information_is_at_most_ln2_per_pair(p in 0.0f64..=1.0) {
        prop_assert!(order_contribution(p) <= std::f64::consts::LN_2);
        prop_assert_eq!(order_contribution(p) == std::f64::consts::LN_2, p == 1.0);
    }
}

#[test]
fn doubling_bootstrap_draws_barely_moves_the_summary() {
    let train = ph(300, 2);
    let test = ph(200, 3);
    let model = fit_constant_hazard(&train).unwrap();
    let prior = prior_prediction(&fit_exponential_prior(&train).unwrap(), 100.0).unwrap();
    let preds: BTreeMap<String, Forecast> = test
        .patients()
        .iter()
        .map(|p| (p.id.clone(), ch_predictive(&model, &p.covariates, 100.0).unwrap().into()))
        .collect();
    let a = time_asi(&preds, &test, &prior, BootConfig { iterations: 10_000, seed: 4 }).unwrap();
    let b = time_asi(&preds, &test, &prior, BootConfig { iterations: 20_000, seed: 4 }).unwrap();
    let (x, y) = (a.summary, b.summary);
    for (u, v) in [(x.q025, y.q025), (x.mean, y.mean), (x.median, y.median), (x.q975, y.q975)] {
        assert!((u - v).abs() < 0.005, "{u} vs {v}");
    }
}

#[test]
fn self_comparison_is_degenerate() {
    let units: Vec<String> = (0..50).map(|i| i.to_string()).collect();
    let values: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 * 0.1 - 0.4).collect();
    let a = InfoReport::from_contributions(units, values, boot(3)).unwrap();
    let c = compare_methods(&a, &a, boot(3)).unwrap();
    assert_eq!(c.p_a_gt_b, 0.5);
    let d = c.difference;
    assert_eq!((d.q025, d.mean, d.median, d.q975), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn perfect_orders_score_ln2_and_full_concordance() {
    // exponential forecasts whose rates follow the realized order closely
    // enough that every pair is p ≈ 1 is impractical; use disjoint blurred
    // cells instead: patient k's mass sits entirely in [10k, 10k + 10)
    let patients: Vec<PatientRecord> = (0..5)
        .map(|k| PatientRecord { id: format!("p{k}"), covariates: vec![1.0], time_months: 10.0 * k as f64 + 5.0, relapsed: true })
        .collect();
    let cohort = Cohort::new(vec!["x".into()], patients).unwrap();
    let preds: BTreeMap<String, Forecast> = (0..5)
        .map(|k| {
            let lo = 10.0 * k as f64;
            let mut b = vec![0.0];
            if lo > 0.0 {
                b.push(lo);
            }
            b.extend([lo + 10.0, 100.0]);
            let mut d = vec![0.0; b.len() - 1];
            d[if lo > 0.0 { 1 } else { 0 }] = 0.1;
            (format!("p{k}"), SurvivalPrediction::piecewise(b, d, 0.0, 100.0).unwrap().into())
        })
        .collect();
    let report = order_asi(&preds, &cohort, boot(1)).unwrap();
    assert_eq!(report.n_units, 10);
    assert!(report.contributions.iter().all(|&c| (c - std::f64::consts::LN_2).abs() < 1e-12));
    assert_eq!(concordance(&preds, &cohort).unwrap(), 1.0);
}

/// Concordance of a constant-hazard model trained and tested on independent
/// null-signal cohorts of 400.
fn null_concordance(seed: u64) -> f64 {
    let model = fit_constant_hazard(&null(400, 2 * seed + 1)).unwrap();
    let test = null(400, 2 * seed + 2);
    let preds: BTreeMap<String, Forecast> = test
        .patients()
        .iter()
        .map(|p| (p.id.clone(), ch_predictive(&model, &p.covariates, 100.0).unwrap().into()))
        .collect();
    concordance(&preds, &test).unwrap()
}

#[test]
fn null_signal_concordance_is_near_one_half() {
    // a single cohort's concordance has sd ≈ 0.025, so ±0.05 holds for most
    // cohorts but not all; the average must be much tighter
    let values: Vec<f64> = (0..20).map(null_concordance).collect();
    let inside = values.iter().filter(|c| (*c - 0.5).abs() <= 0.05).count();
    let mean = values.iter().sum::<f64>() / 20.0;
    assert!(inside >= 18, "{values:?}");
    assert!((mean - 0.5).abs() < 0.015, "{mean}");
}

#[test]
fn split_sizes_match_their_binomial_laws() {
    let c = ph(423, 1);
    let n = 423.0;
    let p = (-1f64).exp();
    for seed in 0..5 {
        let ten = make_split(&c, Scenario::TenE, seed).unwrap();
        assert_eq!(ten.folds.len(), 10);
        let total: usize = ten.folds.iter().map(|f| f.test.len()).sum();
        let sd = (10.0 * n * p * (1.0 - p)).sqrt();
        assert!((total as f64 - 10.0 * n * p).abs() < 3.0 * sd, "{total}");

        let half = make_split(&c, Scenario::Half, seed).unwrap();
        assert_eq!(half.folds.len(), 1);
        let k = half.folds[0].test.len() as f64;
        assert!((k - n / 2.0).abs() < 3.0 * (n * 0.25).sqrt(), "{k}");
        for plan in [&ten, &half] {
            for f in &plan.folds {
                assert!(f.test.iter().all(|id| !f.train.contains(id)));
                assert_eq!(f.train.len() + f.test.len(), 423);
            }
        }
    }
}

fn fast_eval() -> EvalConfig {
    EvalConfig { boot_iterations: 1000, ..EvalConfig::default() }
}

#[test]
fn eightfold_pools_each_patient_once_and_is_reproducible() {
    let c = ph(200, 4);
    let methods = [Method::Prior, Method::CoxPh, Method::CoxCh];
    let a = run_scenario(&c, Scenario::Eightfold, &methods, 6, &fast_eval()).unwrap();
    for m in &a.methods {
        assert_eq!(m.time.n_units, 200);
        let mut ids: Vec<&str> = m.time.units.iter().map(|u| u.split_once(':').unwrap().1).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 200);
    }
    let b = run_scenario(&c, Scenario::Eightfold, &methods, 6, &fast_eval()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.comparisons.len(), 6);
}

#[test]
fn ten_e_counts_repeated_predictions_separately() {
    let c = ph(150, 8);
    let r = run_scenario(&c, Scenario::TenE, &[Method::Prior, Method::CoxCh], 2, &fast_eval()).unwrap();
    let memberships: usize = r.plan.folds.iter().map(|f| f.test.len()).sum();
    assert_eq!(r.methods[1].time.n_units, memberships);
}

#[test]
fn strong_signal_constant_hazard_beats_the_prior() {
    let config = SynthConfig { n: 400, beta: SynthConfig::default().beta.iter().map(|b| 2.5 * b).collect(), ..SynthConfig::default() };
    let c = generate_synthetic(&config, 13).unwrap();
    let r = run_scenario(&c, Scenario::Half, &[Method::Prior, Method::CoxCh], 5, &fast_eval()).unwrap();
    assert!(r.methods[1].time.summary.mean > 0.0);
    let cmp = &r.comparisons[0];
    assert_eq!((cmp.method_a.as_str(), cmp.method_b.as_str()), ("coxch", "prior"));
    assert!(cmp.comparison.p_a_gt_b > 0.95, "{}", cmp.comparison.p_a_gt_b);
}

#[test]
fn null_signal_finds_no_spurious_information() {
    // fitted models pay an out-of-sample overfitting cost under the null, so
    // only the prior's interval is centred on zero; none may claim a gain
    let methods = [Method::Prior, Method::CoxPh, Method::CoxCh];
    let mut covered = 0;
    let mut no_gain = [0usize; 3];
    for seed in 0..20 {
        let c = null(400, 100 + seed);
        let r = run_scenario(&c, Scenario::Half, &methods, seed, &fast_eval()).unwrap();
        let prior = &r.methods[0].time.summary;
        if prior.q025 <= 0.0 && 0.0 <= prior.q975 {
            covered += 1;
        }
        for (k, m) in r.methods.iter().enumerate() {
            if m.time.summary.q025 <= 0.0 {
                no_gain[k] += 1;
            }
        }
    }
    assert_eq!(covered, 20);
    assert!(no_gain.iter().all(|&k| k >= 18), "{no_gain:?}");
}

#[test]
fn memorizer_gap_and_coverage() {
    let r = memorizer_demo(10_000, 200, 3, false).unwrap();
    assert!((0.806..=0.826).contains(&r.corrected), "{}", r.corrected);
    assert_eq!(r.true_performance, 0.5);
    assert!(r.corrected - r.true_performance > 0.25);
    assert!((r.report.mean_coverage - (1.0 - (-1f64).exp())).abs() < 0.02);
    assert_eq!(r.report.apparent, 1.0);
    let sampled = memorizer_demo(2000, 50, 3, true).unwrap();
    assert!((sampled.corrected - 0.816).abs() < 0.03, "{}", sampled.corrected);
}
