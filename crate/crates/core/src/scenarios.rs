//! Train/validation scenarios, experiment orchestration, Harrell's
//! bootstrap optimism correction and the memorizer demonstration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constant_hazard::{ch_predictive, fit_constant_hazard};
use crate::cox::{blur_spikes, fit_cox, predict_spikes};
use crate::data::{Cohort, PatientRecord};
use crate::error::{Error, Result};
use crate::metrics::{
    compare_methods, concordance_of, order_contribution, order_outcomes, time_contribution, BootConfig, Forecast,
    InfoKind, InfoReport, PairRule, Table1Row, Table2Row,
};
use crate::mixture::{predictive_curve, run_mcmc, ChainConfig, HyperParams};
use crate::prediction::{SurvivalPrediction, DEFAULT_HORIZON};
use crate::prior::{fit_exponential_prior, prior_prediction};
use crate::rng;

pub const MIN_COHORT: usize = 20;
const MAX_SPLIT_ATTEMPTS: u64 = 100;
const MAX_SKIPPED_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Half,
    Eightfold,
    TenE,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Half, Scenario::Eightfold, Scenario::TenE];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Half => "half",
            Scenario::Eightfold => "eightfold",
            Scenario::TenE => "ten_e",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario `{s}` (expected half, eightfold or ten_e)")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub scenario: Scenario,
    pub folds: Vec<Fold>,
    pub seed: u64,
    /// Sub-seed of the accepted attempt.
    pub attempt: u64,
}

fn assign(cohort: &Cohort, scenario: Scenario, seed: u64) -> Vec<Fold> {
    let ids: Vec<&str> = cohort.patients().iter().map(|p| p.id.as_str()).collect();
    // one stream per patient, so the split does not depend on row order
    let memberships: Vec<Vec<bool>> = ids
        .iter()
        .map(|id| {
            let mut r = rng::labelled_stream(seed, id);
            match scenario {
                Scenario::Half => vec![r.random_bool(0.5)],
                Scenario::Eightfold => {
                    let k = r.random_range(0..8);
                    (0..8).map(|f| f == k).collect()
                }
                Scenario::TenE => (0..10).map(|_| r.random_bool((-1f64).exp())).collect(),
            }
        })
        .collect();
    let folds = memberships[0].len();
    (0..folds)
        .map(|f| {
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for (i, id) in ids.iter().enumerate() {
                if memberships[i][f] {
                    test.push(id.to_string());
                } else {
                    train.push(id.to_string());
                }
            }
            Fold { train, test }
        })
        .collect()
}

/// Draws the folds of a scenario. Plans in which some fold has no test
/// patients or no training events are redrawn with the next sub-seed.
pub fn make_split(cohort: &Cohort, scenario: Scenario, seed: u64) -> Result<SplitPlan> {
    if cohort.len() < MIN_COHORT {
        return Err(Error::Split(format!("cohort has {} patients; at least {MIN_COHORT} required", cohort.len())));
    }
    let relapsed: BTreeSet<&str> = cohort.patients().iter().filter(|p| p.relapsed).map(|p| p.id.as_str()).collect();
    for attempt in 0..MAX_SPLIT_ATTEMPTS {
        let folds = assign(cohort, scenario, rng::derive_seed(seed, attempt));
        let bad = folds.iter().position(|f| f.test.is_empty() || !f.train.iter().any(|id| relapsed.contains(id.as_str())));
        match bad {
            None => return Ok(SplitPlan { scenario, folds, seed, attempt }),
            Some(f) => log::info!("{scenario} split attempt {attempt}: fold {f} unusable, redrawing"),
        }
    }
    Err(Error::Split(format!("no usable {scenario} split after {MAX_SPLIT_ATTEMPTS} attempts")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "prior")]
    Prior,
    #[serde(rename = "coxph")]
    CoxPh,
    #[serde(rename = "coxph-unblurred")]
    CoxPhUnblurred,
    #[serde(rename = "coxch")]
    CoxCh,
    #[serde(rename = "bayes")]
    Bayes,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Prior, Method::CoxPh, Method::CoxPhUnblurred, Method::CoxCh, Method::Bayes];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Prior => "prior",
            Method::CoxPh => "coxph",
            Method::CoxPhUnblurred => "coxph-unblurred",
            Method::CoxCh => "coxch",
            Method::Bayes => "bayes",
        }
    }

    /// Parses a comma-separated list, rejecting duplicates.
    pub fn parse_list(list: &str) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let m: Method = name.parse()?;
            if out.contains(&m) {
                return Err(Error::Config(format!("method `{name}` listed twice")));
            }
            out.push(m);
        }
        if out.is_empty() {
            return Err(Error::Config("no methods given".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            Error::Config(format!("unknown method `{s}` (expected prior, coxph, coxph-unblurred, coxch or bayes)"))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub horizon: f64,
    pub boot_iterations: usize,
    #[serde(default)]
    pub pair_rule: PairRule,
    pub chain: ChainConfig,
    /// Overrides the number of mixture components.
    #[serde(default)]
    pub components: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            boot_iterations: 10_000,
            pair_rule: PairRule::Standard,
            chain: ChainConfig::default(),
            components: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.boot_iterations == 0 {
            return Err(Error::Config("bootstrap iterations must be at least 1".into()));
        }
        self.chain.validate()
    }

    pub fn hyper(&self, train: &Cohort) -> Result<HyperParams> {
        let mut hyper = HyperParams::empirical(train)?;
        if let Some(k) = self.components {
            hyper.components = k;
        }
        Ok(hyper)
    }
}

/// Fits `method` on `train` and predicts each patient in `test`.
pub fn fit_and_predict(
    method: Method,
    train: &Cohort,
    test: &[&PatientRecord],
    prior: &SurvivalPrediction,
    eval: &EvalConfig,
    chain_seed: u64,
) -> Result<Vec<Forecast>> {
    let h = eval.horizon;
    match method {
        Method::Prior => Ok(test.iter().map(|_| Forecast::Continuous(prior.clone())).collect()),
        Method::CoxPh | Method::CoxPhUnblurred => {
            let model = fit_cox(train)?;
            test.iter()
                .map(|p| {
                    let spikes = predict_spikes(&model, &p.covariates, h)?;
                    Ok(if method == Method::CoxPh { blur_spikes(&spikes, h)?.into() } else { spikes.into() })
                })
                .collect()
        }
        Method::CoxCh => {
            let model = fit_constant_hazard(train)?;
            test.iter().map(|p| Ok(ch_predictive(&model, &p.covariates, h)?.into())).collect()
        }
        Method::Bayes => {
            let hyper = eval.hyper(train)?;
            let chain = ChainConfig { seed: chain_seed, ..eval.chain.clone() };
            let samples = run_mcmc(train, &hyper, &chain)?;
            let samples: Vec<_> = samples.iter().map(|s| s.without_latents()).collect();
            test.par_iter().map(|p| Ok(predictive_curve(&samples, &p.covariates, h)?.into())).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodResult {
    pub method: Method,
    pub time: InfoReport,
    pub order: InfoReport,
    pub concordance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub seed: u64,
    pub plan: SplitPlan,
    pub methods: Vec<MethodResult>,
    pub comparisons: Vec<Table2Row>,
}

impl ScenarioResult {
    pub fn table1(&self) -> Vec<Table1Row> {
        let mut rows = Vec::new();
        for kind in [InfoKind::Time, InfoKind::Order] {
            for m in &self.methods {
                let (report, concordance) = match kind {
                    InfoKind::Time => (&m.time, None),
                    InfoKind::Order => (&m.order, Some(m.concordance)),
                };
                rows.push(Table1Row {
                    kind,
                    scenario: self.scenario.to_string(),
                    method: m.method.to_string(),
                    concordance,
                    summary: report.summary,
                });
            }
        }
        rows
    }

    pub fn method(&self, method: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == method)
    }
}

struct FoldOutput {
    time_units: Vec<String>,
    time: Vec<Vec<f64>>,
    order_units: Vec<String>,
    order: Vec<Vec<f64>>,
}

fn run_fold(
    cohort: &Cohort,
    fold_index: usize,
    fold: &Fold,
    methods: &[Method],
    eval: &EvalConfig,
    seed: u64,
) -> Result<FoldOutput> {
    let train = cohort.subset(fold.train.iter().map(String::as_str));
    let test: Vec<&PatientRecord> =
        fold.test.iter().map(|id| cohort.get(id).expect("split ids come from the cohort")).collect();
    let train_ids: BTreeSet<&str> = fold.train.iter().map(String::as_str).collect();
    if let Some(p) = test.iter().find(|p| train_ids.contains(p.id.as_str())) {
        return Err(Error::Leakage(p.id.clone()));
    }
    let ctx = |method: &str| {
        let method = method.to_string();
        move |e: Error| Error::Fold { fold: fold_index, method, source: Box::new(e) }
    };
    let prior = fit_exponential_prior(&train).map_err(ctx("prior"))?;
    let prior = prior_prediction(&prior, eval.horizon).map_err(ctx("prior"))?;
    let chain_seed = rng::derive_seed(seed, 1000 + fold_index as u64);

    let mut out = FoldOutput {
        time_units: test.iter().map(|p| format!("f{fold_index}:{}", p.id)).collect(),
        time: Vec::new(),
        order_units: Vec::new(),
        order: Vec::new(),
    };
    for &method in methods {
        let forecasts = fit_and_predict(method, &train, &test, &prior, eval, chain_seed).map_err(ctx(method.as_str()))?;
        let time = test
            .iter()
            .zip(&forecasts)
            .map(|(p, f)| time_contribution(f, p, &prior))
            .collect::<Result<Vec<_>>>()
            .map_err(ctx(method.as_str()))?;
        let entries: Vec<(&PatientRecord, &Forecast)> = test.iter().copied().zip(&forecasts).collect();
        let (units, probs) = order_outcomes(&entries, eval.horizon, eval.pair_rule).map_err(ctx(method.as_str()))?;
        out.order_units = units.into_iter().map(|u| format!("f{fold_index}:{u}")).collect();
        out.time.push(time);
        out.order.push(probs);
    }
    Ok(out)
}

/// Runs every method on every fold of a scenario and pools per-unit
/// contributions across folds. Order pairs are formed within folds.
pub fn run_scenario(
    cohort: &Cohort,
    scenario: Scenario,
    methods: &[Method],
    seed: u64,
    eval: &EvalConfig,
) -> Result<ScenarioResult> {
    eval.validate()?;
    if methods.is_empty() {
        return Err(Error::Config("no methods given".into()));
    }
    let plan = make_split(cohort, scenario, seed)?;
    let outputs: Vec<FoldOutput> = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| run_fold(cohort, i, fold, methods, eval, seed))
        .collect::<Result<_>>()?;

    let boot = BootConfig { iterations: eval.boot_iterations, seed: rng::derive_seed(seed, 77) };
    let time_units: Vec<String> = outputs.iter().flat_map(|o| o.time_units.iter().cloned()).collect();
    let order_units: Vec<String> = outputs.iter().flat_map(|o| o.order_units.iter().cloned()).collect();
    if order_units.is_empty() {
        return Err(Error::Domain("no comparable pairs in any validation set".into()));
    }
    let mut results = Vec::with_capacity(methods.len());
    for (k, &method) in methods.iter().enumerate() {
        let time: Vec<f64> = outputs.iter().flat_map(|o| o.time[k].iter().copied()).collect();
        let probs: Vec<f64> = outputs.iter().flat_map(|o| o.order[k].iter().copied()).collect();
        let order: Vec<f64> = probs.iter().map(|&p| order_contribution(p)).collect();
        results.push(MethodResult {
            method,
            time: InfoReport::from_contributions(time_units.clone(), time, boot)?,
            order: InfoReport::from_contributions(order_units.clone(), order, boot)?,
            concordance: concordance_of(&probs)?,
        });
    }
    let mut comparisons = Vec::new();
    for kind in [InfoKind::Time, InfoKind::Order] {
        for j in 0..results.len() {
            for i in 0..j {
                let (a, b) = (&results[j], &results[i]);
                let (ra, rb) = match kind {
                    InfoKind::Time => (&a.time, &b.time),
                    InfoKind::Order => (&a.order, &b.order),
                };
                comparisons.push(Table2Row {
                    method_a: a.method.to_string(),
                    method_b: b.method.to_string(),
                    scenario: scenario.to_string(),
                    kind,
                    comparison: compare_methods(ra, rb, boot)?,
                });
            }
        }
    }
    Ok(ScenarioResult { scenario, seed, plan, methods: results, comparisons })
}

/// Harrell's optimism-corrected estimate of a performance measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapReport {
    /// Apparent performance A: trained and measured on the full data.
    pub apparent: f64,
    /// Mean B: trained and measured on the resample.
    pub b_mean: f64,
    /// Mean C: trained on the resample, measured on the full data.
    pub c_mean: f64,
    /// O = B_mean − C_mean.
    pub optimism: f64,
    /// A − O.
    pub corrected: f64,
    /// Iterations that produced a value.
    pub iterations: usize,
    pub skipped: usize,
    /// Mean fraction of distinct original items present in a resample.
    pub mean_coverage: f64,
}

fn harrell_core<D, M, S, F, P>(
    full: &D,
    n: usize,
    resample: S,
    train: F,
    measure: P,
    iterations: usize,
    seed: u64,
) -> Result<BootstrapReport>
where
    D: Sync,
    S: Fn(&[usize]) -> D + Sync,
    F: Fn(&D) -> Result<M> + Sync,
    P: Fn(&M, &D) -> f64 + Sync,
{
    if iterations == 0 {
        return Err(Error::Config("bootstrap needs at least one iteration".into()));
    }
    if n == 0 {
        return Err(Error::Bootstrap("empty data".into()));
    }
    let model = train(full)?;
    let apparent = measure(&model, full);
    let draws: Vec<(Option<(f64, f64)>, f64)> = (0..iterations)
        .into_par_iter()
        .map(|it| {
            let mut r = rng::stream(seed, it as u64);
            let indices: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
            let mut seen = vec![false; n];
            indices.iter().for_each(|&i| seen[i] = true);
            let coverage = seen.iter().filter(|&&s| s).count() as f64 / n as f64;
            let sample = resample(&indices);
            match train(&sample) {
                Ok(m) => (Some((measure(&m, &sample), measure(&m, full))), coverage),
                Err(e) => {
                    log::info!("bootstrap iteration {it} skipped: {e}");
                    (None, coverage)
                }
            }
        })
        .collect();
    let kept: Vec<(f64, f64)> = draws.iter().filter_map(|d| d.0).collect();
    let skipped = iterations - kept.len();
    if skipped as f64 > MAX_SKIPPED_FRACTION * iterations as f64 {
        return Err(Error::Bootstrap(format!("{skipped} of {iterations} resamples failed to train")));
    }
    let b_mean = kept.iter().map(|k| k.0).sum::<f64>() / kept.len() as f64;
    let c_mean = kept.iter().map(|k| k.1).sum::<f64>() / kept.len() as f64;
    let optimism = b_mean - c_mean;
    Ok(BootstrapReport {
        apparent,
        b_mean,
        c_mean,
        optimism,
        corrected: apparent - optimism,
        iterations: kept.len(),
        skipped,
        mean_coverage: draws.iter().map(|d| d.1).sum::<f64>() / iterations as f64,
    })
}

/// Bootstrap optimism correction over items of any kind. `train` may fail
/// on a resample; such iterations are skipped and counted.
pub fn harrell_bootstrap<T, M, F, P>(data: &[T], train: F, measure: P, iterations: usize, seed: u64) -> Result<BootstrapReport>
where
    T: Clone + Sync + Send,
    F: Fn(&[T]) -> Result<M> + Sync,
    P: Fn(&M, &[T]) -> f64 + Sync,
{
    let full = data.to_vec();
    harrell_core(
        &full,
        data.len(),
        |idx: &[usize]| idx.iter().map(|&i| data[i].clone()).collect::<Vec<T>>(),
        |d: &Vec<T>| train(d),
        |m: &M, d: &Vec<T>| measure(m, d),
        iterations,
        seed,
    )
}

/// As [`harrell_bootstrap`] for cohorts; repeated patients get suffixed ids.
pub fn harrell_bootstrap_cohort<M, F, P>(
    cohort: &Cohort,
    train: F,
    measure: P,
    iterations: usize,
    seed: u64,
) -> Result<BootstrapReport>
where
    F: Fn(&Cohort) -> Result<M> + Sync,
    P: Fn(&M, &Cohort) -> f64 + Sync,
{
    harrell_core(cohort, cohort.len(), |idx: &[usize]| cohort.resample(idx), train, measure, iterations, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MemorizerReport {
    pub corrected: f64,
    pub true_performance: f64,
    pub report: BootstrapReport,
}

/// A classifier that memorizes its training items and guesses at random
/// otherwise. Unseen items score 1/2 in expectation, or a seeded coin flip
/// when `sampled` is set.
pub fn memorizer_demo(n: usize, iterations: usize, seed: u64, sampled: bool) -> Result<MemorizerReport> {
    if n < 100 {
        return Err(Error::Config(format!("memorizer demo needs at least 100 items, got {n}")));
    }
    let mut r = rng::labelled_stream(seed, "memorizer-labels");
    let items: Vec<(usize, bool)> = (0..n).map(|i| (i, r.random_bool(0.5))).collect();
    let flip_seed = rng::derive_seed(seed, 0xf11b);
    let train = |data: &[(usize, bool)]| -> Result<Vec<Option<bool>>> {
        let mut memory = vec![None; n];
        data.iter().for_each(|&(i, label)| memory[i] = Some(label));
        Ok(memory)
    };
    let measure = |memory: &Vec<Option<bool>>, data: &[(usize, bool)]| -> f64 {
        let score: f64 = data
            .iter()
            .map(|&(i, label)| match memory[i] {
                Some(m) => f64::from(u8::from(m == label)),
                None if sampled => {
                    let guess = rng::stream(flip_seed, i as u64).random_bool(0.5);
                    f64::from(u8::from(guess == label))
                }
                None => 0.5,
            })
            .sum();
        score / data.len() as f64
    };
    let report = harrell_bootstrap(&items, train, measure, iterations, seed)?;
    Ok(MemorizerReport { corrected: report.corrected, true_performance: 0.5, report })
}

/// Predictions of one method for every patient of `test`, keyed by id.
pub fn predict_cohort(
    method: Method,
    train: &Cohort,
    test: &Cohort,
    eval: &EvalConfig,
    seed: u64,
) -> Result<(SurvivalPrediction, BTreeMap<String, Forecast>)> {
    let prior = prior_prediction(&fit_exponential_prior(train)?, eval.horizon)?;
    let patients: Vec<&PatientRecord> = test.patients().iter().collect();
    let forecasts = fit_and_predict(method, train, &patients, &prior, eval, seed)?;
    Ok((prior, patients.iter().map(|p| p.id.clone()).zip(forecasts).collect()))
}
