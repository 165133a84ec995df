//! Apparent Shannon information (ASI), pair-order probabilities,
//! concordance, and Bayesian-bootstrap summaries.
//!
//! All information values are in nepers relative to a reference prior.

use std::collections::BTreeMap;
use std::io::Write;

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize, Serializer};

use crate::cox::SpikeDistribution;
use crate::data::{Cohort, PatientRecord};
use crate::error::{Error, Result};
use crate::numeric::quantile_sorted;
use crate::prediction::{Representation, SurvivalPrediction};
use crate::rng;

/// Uniform refinement used when an exponential forecast is paired with a
/// forecast of another shape.
const EXPONENTIAL_REFINEMENT: usize = 2048;
const TIE_TOLERANCE: f64 = 1e-12;

/// A predictive distribution of relapse time, continuous or discrete.
#[derive(Debug, Clone, PartialEq)]
pub enum Forecast {
    Continuous(SurvivalPrediction),
    /// Unblurred Cox prediction: point masses at training event times.
    Spikes(SpikeDistribution),
}

impl From<SurvivalPrediction> for Forecast {
    fn from(p: SurvivalPrediction) -> Self {
        Forecast::Continuous(p)
    }
}

impl From<SpikeDistribution> for Forecast {
    fn from(s: SpikeDistribution) -> Self {
        Forecast::Spikes(s)
    }
}

impl Forecast {
    pub fn horizon(&self) -> f64 {
        match self {
            Forecast::Continuous(p) => p.horizon(),
            Forecast::Spikes(s) => s.horizon,
        }
    }

    /// Log density at `t ∈ [0, horizon]`; ±∞ for spikes.
    pub fn log_density(&self, t: f64) -> f64 {
        match self {
            Forecast::Continuous(p) => p.density_unchecked(t).ln(),
            Forecast::Spikes(s) => s.log_density_at(t),
        }
    }

    pub fn log_survival(&self, t: f64) -> f64 {
        match self {
            Forecast::Continuous(p) => p.survival_unchecked(t).ln(),
            Forecast::Spikes(s) => s.survival_at(t).ln(),
        }
    }
}

/// Bayesian-bootstrap settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootConfig {
    pub iterations: usize,
    pub seed: u64,
}

impl Default for BootConfig {
    fn default() -> Self {
        Self { iterations: 10_000, seed: 0 }
    }
}

fn ser_f64<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_str(&format_value(*x))
    }
}

fn ser_vec<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        if x.is_finite() {
            seq.serialize_element(x)?;
        } else {
            seq.serialize_element(&format_value(*x))?;
        }
    }
    seq.end()
}

/// Number formatting shared by CSV and JSON outputs: six decimals, with
/// infinities spelled `Inf` / `-Inf`.
pub fn format_value(x: f64) -> String {
    if x == f64::INFINITY {
        "Inf".into()
    } else if x == f64::NEG_INFINITY {
        "-Inf".into()
    } else if x.is_nan() {
        "NaN".into()
    } else {
        let s = format!("{x:.6}");
        if s == "-0.000000" {
            "0.000000".into()
        } else {
            s
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    #[serde(serialize_with = "ser_f64")]
    pub q025: f64,
    #[serde(serialize_with = "ser_f64")]
    pub mean: f64,
    #[serde(serialize_with = "ser_f64")]
    pub median: f64,
    #[serde(serialize_with = "ser_f64")]
    pub q975: f64,
}

impl Summary {
    /// Summary of a set of draws. Means with infinite draws are infinite;
    /// when both signs occur the more frequent sign wins.
    pub fn of_draws(draws: &[f64]) -> Self {
        let mut sorted: Vec<f64> = draws.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            q025: quantile_sorted(&sorted, 0.025),
            mean: robust_mean(draws),
            median: quantile_sorted(&sorted, 0.5),
            q975: quantile_sorted(&sorted, 0.975),
        }
    }
}

fn robust_mean(values: &[f64]) -> f64 {
    let pos = values.iter().filter(|v| **v == f64::INFINITY).count();
    let neg = values.iter().filter(|v| **v == f64::NEG_INFINITY).count();
    match (pos, neg) {
        (0, 0) => values.iter().sum::<f64>() / values.len() as f64,
        (p, n) if p > n => f64::INFINITY,
        (p, n) if n > p => f64::NEG_INFINITY,
        _ => f64::NAN,
    }
}

/// Per-unit information contributions and their posterior summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfoReport {
    #[serde(serialize_with = "ser_vec")]
    pub contributions: Vec<f64>,
    /// Unit labels aligned with `contributions` (patient ids, or `a|b` for pairs).
    pub units: Vec<String>,
    pub n_units: usize,
    /// Plain mean of the contributions.
    #[serde(serialize_with = "ser_f64")]
    pub point: f64,
    pub summary: Summary,
    pub iterations: usize,
}

impl InfoReport {
    pub fn from_contributions(units: Vec<String>, contributions: Vec<f64>, boot: BootConfig) -> Result<Self> {
        if contributions.is_empty() || units.len() != contributions.len() {
            return Err(Error::Domain("an information report needs at least one labelled unit".into()));
        }
        if contributions.iter().any(|c| c.is_nan()) {
            return Err(Error::Domain("information contribution is NaN".into()));
        }
        let draws = bootstrap_means(&contributions, boot)?;
        Ok(Self {
            n_units: contributions.len(),
            point: weighted_mean(&contributions, None),
            summary: Summary::of_draws(&draws),
            iterations: boot.iterations,
            units,
            contributions,
        })
    }
}

/// Weighted mean in which a single −∞ contribution makes the mean −∞.
fn weighted_mean(values: &[f64], weights: Option<&[f64]>) -> f64 {
    if values.iter().any(|v| *v == f64::NEG_INFINITY) {
        return f64::NEG_INFINITY;
    }
    if values.iter().any(|v| *v == f64::INFINITY) {
        return f64::INFINITY;
    }
    match weights {
        None => values.iter().sum::<f64>() / values.len() as f64,
        Some(w) => {
            let total: f64 = w.iter().sum();
            values.iter().zip(w).map(|(v, w)| v * w).sum::<f64>() / total
        }
    }
}

/// Unnormalized Dirichlet(1, …, 1) weights for bootstrap draw `draw`.
fn draw_weights(seed: u64, draw: usize, n: usize, out: &mut Vec<f64>) {
    let mut r = rng::stream(seed, draw as u64);
    out.clear();
    out.extend((0..n).map(|_| -> f64 { Exp1.sample(&mut r) }));
}

/// Dirichlet(1, …, 1)-weighted means of `values`, one per draw.
pub fn bootstrap_means(values: &[f64], boot: BootConfig) -> Result<Vec<f64>> {
    if boot.iterations == 0 {
        return Err(Error::Config("bootstrap needs at least one iteration".into()));
    }
    let special = values.iter().any(|v| v.is_infinite());
    if special {
        return Ok(vec![weighted_mean(values, None); boot.iterations]);
    }
    let mut weights = Vec::with_capacity(values.len());
    Ok((0..boot.iterations)
        .map(|d| {
            draw_weights(boot.seed, d, values.len(), &mut weights);
            weighted_mean(values, Some(&weights))
        })
        .collect())
}

/// Paired comparison of two reports over the same units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub p_a_gt_b: f64,
    pub difference: Summary,
    /// Summary of A / max(B, 0).
    pub ratio: Summary,
}

fn difference(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        a - b
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    let denom = b.max(0.0);
    if denom > 0.0 && denom.is_finite() {
        a / denom
    } else if denom == f64::INFINITY {
        if a == f64::INFINITY {
            f64::NAN
        } else {
            0.0
        }
    } else if a > 0.0 {
        f64::INFINITY
    } else if a < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    }
}

pub fn compare_methods(a: &InfoReport, b: &InfoReport, boot: BootConfig) -> Result<ComparisonReport> {
    if a.units != b.units {
        return Err(Error::Domain("compared reports must cover the same units in the same order".into()));
    }
    if boot.iterations == 0 {
        return Err(Error::Config("bootstrap needs at least one iteration".into()));
    }
    let n = a.contributions.len();
    let special = a.contributions.iter().chain(&b.contributions).any(|v| v.is_infinite());
    let mut weights = Vec::with_capacity(n);
    let mut wins = 0.0;
    let mut diffs = Vec::with_capacity(boot.iterations);
    let mut ratios = Vec::with_capacity(boot.iterations);
    for d in 0..boot.iterations {
        let (ma, mb) = if special {
            (weighted_mean(&a.contributions, None), weighted_mean(&b.contributions, None))
        } else {
            draw_weights(boot.seed, d, n, &mut weights);
            (weighted_mean(&a.contributions, Some(&weights)), weighted_mean(&b.contributions, Some(&weights)))
        };
        if ma > mb {
            wins += 1.0;
        } else if ma == mb {
            wins += 0.5;
        }
        diffs.push(difference(ma, mb));
        ratios.push(ratio(ma, mb));
    }
    let ratios: Vec<f64> = ratios.into_iter().filter(|r| !r.is_nan()).collect();
    let ratio_summary = if ratios.is_empty() {
        Summary { q025: f64::NAN, mean: f64::NAN, median: f64::NAN, q975: f64::NAN }
    } else {
        Summary::of_draws(&ratios)
    };
    Ok(ComparisonReport {
        p_a_gt_b: wins / boot.iterations as f64,
        difference: Summary::of_draws(&diffs),
        ratio: ratio_summary,
    })
}

fn check_horizon(forecast: &Forecast, prior: &SurvivalPrediction) -> Result<()> {
    if forecast.horizon() != prior.horizon() {
        return Err(Error::Domain(format!(
            "prediction horizon {} differs from prior horizon {}",
            forecast.horizon(),
            prior.horizon()
        )));
    }
    Ok(())
}

/// Time information of one patient: log predicted density (relapse) or
/// survival (censoring) relative to the prior. Follow-up beyond the horizon
/// counts as censored at the horizon.
pub fn time_contribution(forecast: &Forecast, patient: &PatientRecord, prior: &SurvivalPrediction) -> Result<f64> {
    check_horizon(forecast, prior)?;
    let h = prior.horizon();
    let prior_f = Forecast::Continuous(prior.clone());
    Ok(if patient.time_months > h {
        forecast.log_survival(h) - prior_f.log_survival(h)
    } else if patient.relapsed {
        forecast.log_density(patient.time_months) - prior_f.log_density(patient.time_months)
    } else {
        forecast.log_survival(patient.time_months) - prior_f.log_survival(patient.time_months)
    })
}

pub fn time_asi(
    preds: &BTreeMap<String, Forecast>,
    cohort: &Cohort,
    prior: &SurvivalPrediction,
    boot: BootConfig,
) -> Result<InfoReport> {
    let mut units = Vec::with_capacity(cohort.len());
    let mut contributions = Vec::with_capacity(cohort.len());
    for p in cohort.patients() {
        let f = preds.get(&p.id).ok_or_else(|| Error::Domain(format!("no prediction for patient `{}`", p.id)))?;
        units.push(p.id.clone());
        contributions.push(time_contribution(f, p, prior)?);
    }
    InfoReport::from_contributions(units, contributions, boot)
}

/// Probability that patient `a` relapses before patient `b` under
/// independent predictions, with the no-order mass split evenly.
pub fn pair_probability(a: &SurvivalPrediction, b: &SurvivalPrediction) -> Result<f64> {
    if a.horizon() != b.horizon() {
        return Err(Error::Domain("pair probability needs a shared horizon".into()));
    }
    let (qab, qba) = first_relapse_masses(a, b);
    Ok(split_ties(qab, qba))
}

fn split_ties(qab: f64, qba: f64) -> f64 {
    (0.5 * (1.0 + qab - qba)).clamp(0.0, 1.0)
}

/// (∫ f_a S_b, ∫ f_b S_a) over [0, horizon].
fn first_relapse_masses(a: &SurvivalPrediction, b: &SurvivalPrediction) -> (f64, f64) {
    let h = a.horizon();
    if let (Representation::Exponential { rate: la }, Representation::Exponential { rate: lb }) =
        (a.representation(), b.representation())
    {
        let total = la + lb;
        let reached = -(-total * h).exp_m1();
        return (la / total * reached, lb / total * reached);
    }
    let mut knots: Vec<f64> = a.knots();
    knots.extend(b.knots());
    if a.is_exponential() || b.is_exponential() {
        knots.extend((0..=EXPONENTIAL_REFINEMENT).map(|i| h * i as f64 / EXPONENTIAL_REFINEMENT as f64));
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut qab = 0.0;
    let mut qba = 0.0;
    let eval = |t: f64| (a.density_unchecked(t), a.survival_unchecked(t), b.density_unchecked(t), b.survival_unchecked(t));
    // left-continuous densities: evaluate just inside each interval
    for w in knots.windows(2) {
        let (l, r) = (w[0], w[1]);
        let width = r - l;
        let m = 0.5 * (l + r);
        let inside = width * 1e-9;
        let (fa0, sa0, fb0, sb0) = eval(l + inside);
        let (fa1, sa1, fb1, sb1) = eval(m);
        let (fa2, sa2, fb2, sb2) = eval(r - inside);
        qab += width / 6.0 * (fa0 * sb0 + 4.0 * fa1 * sb1 + fa2 * sb2);
        qba += width / 6.0 * (fb0 * sa0 + 4.0 * fb1 * sa1 + fb2 * sa2);
    }
    (qab, qba)
}

/// Values of a continuous prediction at its knots and interval midpoints,
/// for fast pairing of predictions that share knots.
struct NodeTable {
    knots: Vec<f64>,
    key: u64,
    /// Density and survival at [k0+, m0, k1-, k1+, m1, ...] as triples per interval.
    dens: Vec<[f64; 3]>,
    surv: Vec<[f64; 3]>,
}

impl NodeTable {
    fn new(p: &SurvivalPrediction) -> Self {
        let knots = p.knots();
        let key = knots.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, k| (h ^ k.to_bits()).wrapping_mul(0x0100_0000_01B3));
        let mut dens = Vec::with_capacity(knots.len());
        let mut surv = Vec::with_capacity(knots.len());
        for w in knots.windows(2) {
            let inside = (w[1] - w[0]) * 1e-9;
            let ts = [w[0] + inside, 0.5 * (w[0] + w[1]), w[1] - inside];
            dens.push(ts.map(|t| p.density_unchecked(t)));
            surv.push(ts.map(|t| p.survival_unchecked(t)));
        }
        Self { knots, key, dens, surv }
    }

    fn shares_knots(&self, other: &NodeTable) -> bool {
        self.key == other.key && self.knots == other.knots
    }

    fn masses(&self, other: &NodeTable) -> (f64, f64) {
        let mut qab = 0.0;
        let mut qba = 0.0;
        for (i, w) in self.knots.windows(2).enumerate() {
            let c = (w[1] - w[0]) / 6.0;
            let (fa, sa, fb, sb) = (&self.dens[i], &self.surv[i], &other.dens[i], &other.surv[i]);
            qab += c * (fa[0] * sb[0] + 4.0 * fa[1] * sb[1] + fa[2] * sb[2]);
            qba += c * (fb[0] * sa[0] + 4.0 * fb[1] * sa[1] + fb[2] * sa[2]);
        }
        (qab, qba)
    }
}

/// (Σ_s m_a(s) P(T_b > s), Σ_s m_b(s) P(T_a > s)).
fn spike_masses(a: &SpikeDistribution, b: &SpikeDistribution) -> (f64, f64) {
    let one = |x: &SpikeDistribution, y: &SpikeDistribution| -> f64 {
        // suffix sums of y: P(T_y > s) for s between its spikes
        let mut tail = vec![y.lump; y.spikes.len() + 1];
        for k in (0..y.spikes.len()).rev() {
            tail[k] = tail[k + 1] + y.spikes[k].1;
        }
        x.spikes
            .iter()
            .map(|&(s, m)| {
                let idx = y.spikes.partition_point(|&(t, _)| t <= s);
                m * tail[idx]
            })
            .sum()
    };
    (one(a, b), one(b, a))
}

/// Probability that `a` relapses first, for any pair of forecasts of the
/// same kind.
pub fn forecast_pair_probability(a: &Forecast, b: &Forecast) -> Result<f64> {
    if a.horizon() != b.horizon() {
        return Err(Error::Domain("pair probability needs a shared horizon".into()));
    }
    match (a, b) {
        (Forecast::Continuous(x), Forecast::Continuous(y)) => pair_probability(x, y),
        (Forecast::Spikes(x), Forecast::Spikes(y)) => {
            let (qab, qba) = spike_masses(x, y);
            Ok(split_ties(qab, qba))
        }
        _ => Err(Error::Domain("cannot pair a discrete forecast with a continuous one".into())),
    }
}

/// Which patient pairs have a known relapse order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairRule {
    /// Earlier time is a relapse within the horizon, strictly before the
    /// other patient's time.
    #[default]
    Standard,
    /// Standard pairs plus pairs where the partner was censored at exactly
    /// the relapse time.
    AllDeterminable,
}

/// If the pair has a known order, returns true when `a` relapsed first.
pub fn realized_order(a: &PatientRecord, b: &PatientRecord, horizon: f64, rule: PairRule) -> Option<bool> {
    let first = |x: &PatientRecord, y: &PatientRecord| {
        x.relapsed
            && x.time_months <= horizon
            && (x.time_months < y.time_months
                || (rule == PairRule::AllDeterminable && !y.relapsed && x.time_months == y.time_months))
    };
    if first(a, b) {
        Some(true)
    } else if first(b, a) {
        Some(false)
    } else {
        None
    }
}

/// One prediction entry: the patient it concerns and the forecast.
pub type Entry<'a> = (&'a PatientRecord, &'a Forecast);

/// Realized-order probabilities over all comparable pairs of entries.
/// Entries of the same patient are never paired.
pub fn order_outcomes(entries: &[Entry<'_>], horizon: f64, rule: PairRule) -> Result<(Vec<String>, Vec<f64>)> {
    let tables: Vec<Option<NodeTable>> = entries
        .iter()
        .map(|(_, f)| match f {
            Forecast::Continuous(p) if !p.is_exponential() => Some(NodeTable::new(p)),
            _ => None,
        })
        .collect();
    let mut units = Vec::new();
    let mut probs = Vec::new();
    for i in 0..entries.len() {
        for j in i + 1..entries.len() {
            let (pi, fi) = entries[i];
            let (pj, fj) = entries[j];
            if pi.id == pj.id {
                continue;
            }
            let Some(i_first) = realized_order(pi, pj, horizon, rule) else {
                continue;
            };
            let p_i_first = match (&tables[i], &tables[j]) {
                (Some(a), Some(b)) if a.shares_knots(b) => {
                    let (qab, qba) = a.masses(b);
                    split_ties(qab, qba)
                }
                _ => forecast_pair_probability(fi, fj)?,
            };
            let (first, second, p) = if i_first { (pi, pj, p_i_first) } else { (pj, pi, 1.0 - p_i_first) };
            units.push(format!("{}|{}", first.id, second.id));
            probs.push(p);
        }
    }
    Ok((units, probs))
}

/// Order information of a realized-order probability, relative to 1/2.
pub fn order_contribution(p_realized: f64) -> f64 {
    (2.0 * p_realized).ln()
}

/// Fraction of pairs whose realized order got probability above 1/2, ties
/// counting one half.
pub fn concordance_of(probabilities: &[f64]) -> Result<f64> {
    if probabilities.is_empty() {
        return Err(Error::Domain("no comparable pairs".into()));
    }
    let score: f64 = probabilities
        .iter()
        .map(|&p| {
            if (p - 0.5).abs() <= TIE_TOLERANCE {
                0.5
            } else if p > 0.5 {
                1.0
            } else {
                0.0
            }
        })
        .sum();
    Ok(score / probabilities.len() as f64)
}

fn cohort_entries<'a>(preds: &'a BTreeMap<String, Forecast>, cohort: &'a Cohort) -> Result<Vec<Entry<'a>>> {
    cohort
        .patients()
        .iter()
        .map(|p| {
            preds.get(&p.id).map(|f| (p, f)).ok_or_else(|| Error::Domain(format!("no prediction for patient `{}`", p.id)))
        })
        .collect()
}

fn common_horizon(preds: &BTreeMap<String, Forecast>) -> Result<f64> {
    let mut hs = preds.values().map(|f| f.horizon());
    let h = hs.next().ok_or_else(|| Error::Domain("no predictions".into()))?;
    if hs.any(|x| x != h) {
        return Err(Error::Domain("predictions have different horizons".into()));
    }
    Ok(h)
}

pub fn order_asi_with_rule(
    preds: &BTreeMap<String, Forecast>,
    cohort: &Cohort,
    rule: PairRule,
    boot: BootConfig,
) -> Result<InfoReport> {
    let entries = cohort_entries(preds, cohort)?;
    let (units, probs) = order_outcomes(&entries, common_horizon(preds)?, rule)?;
    if probs.is_empty() {
        return Err(Error::Domain("no comparable pairs".into()));
    }
    InfoReport::from_contributions(units, probs.into_iter().map(order_contribution).collect(), boot)
}

pub fn order_asi(preds: &BTreeMap<String, Forecast>, cohort: &Cohort, boot: BootConfig) -> Result<InfoReport> {
    order_asi_with_rule(preds, cohort, PairRule::Standard, boot)
}

pub fn concordance_with_rule(preds: &BTreeMap<String, Forecast>, cohort: &Cohort, rule: PairRule) -> Result<f64> {
    let entries = cohort_entries(preds, cohort)?;
    let (_, probs) = order_outcomes(&entries, common_horizon(preds)?, rule)?;
    concordance_of(&probs)
}

pub fn concordance(preds: &BTreeMap<String, Forecast>, cohort: &Cohort) -> Result<f64> {
    concordance_with_rule(preds, cohort, PairRule::Standard)
}

/// One row of the Table-1-shaped summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Row {
    pub kind: InfoKind,
    pub scenario: String,
    pub method: String,
    #[serde(serialize_with = "ser_opt")]
    pub concordance: Option<f64>,
    pub summary: Summary,
}

fn ser_opt<S: Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match x {
        Some(v) => ser_f64(v, s),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoKind {
    Time,
    Order,
}

impl InfoKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            InfoKind::Time => "time",
            InfoKind::Order => "order",
        }
    }
}

pub fn write_table1<W: Write>(rows: &[Table1Row], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["type", "scenario", "method", "concord", "q025", "mean", "median", "q975"])?;
    for r in rows {
        let concord = r.concordance.map_or_else(|| "n/a".to_string(), format_value);
        w.write_record([
            r.kind.as_str(),
            &r.scenario,
            &r.method,
            &concord,
            &format_value(r.summary.q025),
            &format_value(r.summary.mean),
            &format_value(r.summary.median),
            &format_value(r.summary.q975),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of the Table-2-shaped comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table2Row {
    pub method_a: String,
    pub method_b: String,
    pub scenario: String,
    pub kind: InfoKind,
    pub comparison: ComparisonReport,
}

pub fn write_table2<W: Write>(rows: &[Table2Row], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "methodA",
        "methodB",
        "scenario",
        "type",
        "p_a_gt_b",
        "diff_q025",
        "diff_mean",
        "diff_median",
        "diff_q975",
        "ratio_q025",
        "ratio_mean",
        "ratio_median",
        "ratio_q975",
    ])?;
    for r in rows {
        let (d, q) = (&r.comparison.difference, &r.comparison.ratio);
        let mut rec = vec![
            r.method_a.clone(),
            r.method_b.clone(),
            r.scenario.clone(),
            r.kind.as_str().to_string(),
            format_value(r.comparison.p_a_gt_b),
        ];
        rec.extend([d.q025, d.mean, d.median, d.q975, q.q025, q.mean, q.median, q.q975].map(format_value));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
