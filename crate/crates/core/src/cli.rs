//! Command-line interface.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{load_cohort, Cohort};
use crate::error::{Error, Result};
use crate::metrics::{
    concordance_of, format_value, order_contribution, order_outcomes, time_asi, write_table1, write_table2,
    BootConfig, Forecast, InfoReport, PairRule,
};
use crate::mixture::ChainConfig;
use crate::persist::ModelFile;
use crate::prediction::{log_time_grid, DEFAULT_HORIZON};
use crate::scenarios::{memorizer_demo, run_scenario, EvalConfig, Method, Scenario};
use crate::synth::{generate_mixture_cohort, generate_synthetic_with_truth, MixtureTruth, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_COMPUTATION: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "relapse-lab", version, about = "Relapse-time prediction and information-based evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON file with default values for any flag; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Evaluation horizon in months.
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    /// Bootstrap iterations.
    #[arg(long, global = true)]
    pub iters: Option<usize>,
    #[arg(long, global = true)]
    pub burn_in: Option<usize>,
    /// Kept MCMC samples.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub thin: Option<usize>,
    /// Mixture components.
    #[arg(long, global = true)]
    pub components: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub pair_rule: Option<PairRuleArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairRuleArg {
    Standard,
    AllDeterminable,
}

impl From<PairRuleArg> for PairRule {
    fn from(r: PairRuleArg) -> Self {
        match r {
            PairRuleArg::Standard => PairRule::Standard,
            PairRuleArg::AllDeterminable => PairRule::AllDeterminable,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthKind {
    /// Exponential proportional hazards in the log-covariates.
    Ph,
    /// Log-normal mixture over covariates and time (smooth hazards).
    Mixture,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort.
    Synth {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_enum, default_value = "ph")]
        kind: SynthKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one method and save the model.
    Fit {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict patients with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Information and concordance of a saved model on held-out patients.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a validation scenario over several methods.
    Scenario {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        methods: Option<String>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired comparison of two methods under a scenario.
    Compare {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        scenario: Option<String>,
        /// Exactly two methods, A then B.
        #[arg(long)]
        methods: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Harrell bootstrap on a classifier that memorizes its training set.
    BootstrapDemo {
        #[arg(long)]
        n: Option<usize>,
        /// Score unseen items by seeded coin flips instead of in expectation.
        #[arg(long)]
        sampled: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predictive density and survival curves for plotting.
    Curves {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Values that may come from the `--config` file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub horizon: Option<f64>,
    pub iters: Option<usize>,
    pub burn_in: Option<usize>,
    pub samples: Option<usize>,
    pub thin: Option<usize>,
    pub components: Option<usize>,
    pub pair_rule: Option<PairRuleArg>,
    pub scenario: Option<String>,
    pub methods: Option<String>,
    pub n: Option<usize>,
    /// Generator settings for `synth --kind ph`.
    pub synth: Option<SynthConfig>,
}

struct Settings {
    file: RunConfig,
    seed: u64,
    iters: Option<usize>,
    eval: EvalConfig,
}

fn settings(common: &Common) -> Result<Settings> {
    let file: RunConfig = match &common.config {
        Some(path) => serde_json::from_reader(File::open(path).map_err(|e| with_path(e, path))?)
            .map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))?,
        None => RunConfig::default(),
    };
    let seed = common.seed.or(file.seed).unwrap_or(0);
    let horizon = common.horizon.or(file.horizon).unwrap_or(DEFAULT_HORIZON);
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Config(format!("--horizon must be positive, got {horizon}")));
    }
    let iters = common.iters.or(file.iters);
    let defaults = ChainConfig::default();
    let chain = ChainConfig {
        burn_in: common.burn_in.or(file.burn_in).unwrap_or(defaults.burn_in),
        samples: common.samples.or(file.samples).unwrap_or(defaults.samples),
        thin: common.thin.or(file.thin).unwrap_or(defaults.thin),
        seed,
        ..defaults
    };
    let eval = EvalConfig {
        horizon,
        boot_iterations: iters.unwrap_or(10_000),
        pair_rule: common.pair_rule.or(file.pair_rule).map(PairRule::from).unwrap_or_default(),
        chain,
        components: common.components.or(file.components),
    };
    eval.validate()?;
    Ok(Settings { file, seed, iters, eval })
}

fn with_path(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn read_cohort(path: &Path) -> Result<Cohort> {
    load_cohort(path).map_err(|e| match e {
        Error::Io(io) => with_path(io, path),
        other => other,
    })
}

fn read_model(path: &Path) -> Result<ModelFile> {
    ModelFile::load(path).map_err(|e| match e {
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Error::Config(format!(
            "model file {} not found; create it with `relapse-lab fit --cohort <csv> --method <name> --out {}`",
            path.display(),
            path.display()
        )),
        Error::Io(io) => with_path(io, path),
        other => other,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| with_path(e, path))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn scenario_arg(flag: Option<&str>, file: &RunConfig) -> Result<Scenario> {
    flag.or(file.scenario.as_deref()).unwrap_or("half").parse()
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.common.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Schema { .. } | Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => EXIT_USAGE,
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => EXIT_USAGE,
        _ => EXIT_COMPUTATION,
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let s = settings(&cli.common)?;
    match &cli.command {
        Command::Synth { n, kind, out } => cmd_synth(&s, *n, *kind, out),
        Command::Fit { cohort, method, out } => cmd_fit(&s, cohort, method, out),
        Command::Predict { model, cohort, out } => cmd_predict(model, cohort, out),
        Command::Evaluate { model, cohort, out } => cmd_evaluate(&s, model, cohort, out),
        Command::Scenario { cohort, scenario, methods, out } => {
            let methods = methods.as_deref().or(s.file.methods.as_deref()).unwrap_or("prior,coxph,coxch,bayes");
            cmd_scenario(&s, cohort, scenario_arg(scenario.as_deref(), &s.file)?, &Method::parse_list(methods)?, out)
        }
        Command::Compare { cohort, scenario, methods, out } => {
            let methods = Method::parse_list(methods)?;
            if methods.len() != 2 {
                return Err(Error::Config("compare needs exactly two methods, e.g. --methods bayes,coxph".into()));
            }
            cmd_compare(&s, cohort, scenario_arg(scenario.as_deref(), &s.file)?, &methods, out)
        }
        Command::BootstrapDemo { n, sampled, out } => cmd_bootstrap_demo(&s, *n, *sampled, out.as_deref()),
        Command::Curves { model, cohort, out } => cmd_curves(model, cohort, out),
    }
}

fn cmd_synth(s: &Settings, n: Option<usize>, kind: SynthKind, out: &Path) -> Result<()> {
    let n = n.or(s.file.n);
    let cohort = match kind {
        SynthKind::Ph => {
            let mut cfg = s.file.synth.clone().unwrap_or_default();
            if let Some(n) = n {
                cfg.n = n;
            }
            cfg.seed = s.seed;
            generate_synthetic_with_truth(&cfg, s.seed)?.0
        }
        SynthKind::Mixture => generate_mixture_cohort(&MixtureTruth::smooth_default(), n.unwrap_or(400), s.seed)?,
    };
    let mut w = create(out)?;
    cohort.write_csv(&mut w)?;
    w.flush()?;
    println!("wrote {} patients ({} relapses) to {}", cohort.len(), cohort.events(), out.display());
    Ok(())
}

fn cmd_fit(s: &Settings, cohort: &Path, method: &str, out: &Path) -> Result<()> {
    let method: Method = method.parse()?;
    let train = read_cohort(cohort)?;
    let model = ModelFile::fit(method, &train, &s.eval)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    model.save(out)?;
    println!(
        "fitted {method} on {} patients ({} relapses); prior rate {:.6}/month; model saved to {}",
        train.len(),
        train.events(),
        model.prior.rate,
        out.display()
    );
    Ok(())
}

fn median_time(f: &Forecast) -> Option<f64> {
    let h = f.horizon();
    if f.log_survival(h) >= 0.5f64.ln() {
        return None;
    }
    let (mut lo, mut hi) = (0.0, h);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f.log_survival(mid) > 0.5f64.ln() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

fn predictions(model: &ModelFile, cohort: &Cohort) -> Result<Vec<Forecast>> {
    model.check_schema(cohort)?;
    use rayon::prelude::*;
    cohort.patients().par_iter().map(|p| model.predict(&p.covariates)).collect()
}

fn cmd_predict(model: &Path, cohort: &Path, out: &Path) -> Result<()> {
    let model = read_model(model)?;
    let cohort = read_cohort(cohort)?;
    let forecasts = predictions(&model, &cohort)?;
    let mut w = csv::Writer::from_writer(create(out)?);
    w.write_record(["patient_id", "relapse_by_horizon", "survival_at_horizon", "median_months"])?;
    for (p, f) in cohort.patients().iter().zip(&forecasts) {
        let s = f.log_survival(f.horizon()).exp();
        let median = median_time(f).map_or_else(|| "NA".to_string(), format_value);
        w.write_record([p.id.as_str(), &format_value(1.0 - s), &format_value(s), &median])?;
    }
    w.flush()?;
    println!("predicted {} patients with {} model; written to {}", cohort.len(), model.method, out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvaluationOutput {
    method: Method,
    horizon: f64,
    time: InfoReport,
    order: Option<InfoReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    concordance: Option<f64>,
}

fn cmd_evaluate(s: &Settings, model: &Path, cohort: &Path, out: &Path) -> Result<()> {
    let model = read_model(model)?;
    let test = read_cohort(cohort)?;
    let trained: std::collections::BTreeSet<&str> = model.train_ids.iter().map(String::as_str).collect();
    if let Some(p) = test.patients().iter().find(|p| trained.contains(p.id.as_str())) {
        return Err(Error::Leakage(p.id.clone()));
    }
    let forecasts = predictions(&model, &test)?;
    let prior = model.prior_prediction()?;
    let boot = BootConfig { iterations: s.iters.unwrap_or(10_000), seed: s.seed };
    let preds: BTreeMap<String, Forecast> =
        test.patients().iter().map(|p| p.id.clone()).zip(forecasts.iter().cloned()).collect();
    let time = time_asi(&preds, &test, &prior, boot)?;
    let entries: Vec<_> = test.patients().iter().zip(&forecasts).collect();
    let (units, probs) = order_outcomes(&entries, model.horizon, s.eval.pair_rule)?;
    let (order, concordance) = if probs.is_empty() {
        (None, None)
    } else {
        let contributions = probs.iter().map(|&p| order_contribution(p)).collect();
        (Some(InfoReport::from_contributions(units, contributions, boot)?), Some(concordance_of(&probs)?))
    };
    println!(
        "{}: time ASI {} nepers ({} to {}); order ASI {}; concordance {}",
        model.method,
        format_value(time.summary.mean),
        format_value(time.summary.q025),
        format_value(time.summary.q975),
        order.as_ref().map_or("n/a".into(), |o| format_value(o.summary.mean)),
        concordance.map_or("n/a".into(), format_value)
    );
    write_json(out, &EvaluationOutput { method: model.method, horizon: model.horizon, time, order, concordance })
}

fn cmd_scenario(s: &Settings, cohort: &Path, scenario: Scenario, methods: &[Method], out: &Path) -> Result<()> {
    let cohort = read_cohort(cohort)?;
    let result = run_scenario(&cohort, scenario, methods, s.seed, &s.eval)?;
    fs::create_dir_all(out)?;
    let rows = result.table1();
    let mut w = create(&out.join("table1.csv"))?;
    write_table1(&rows, &mut w)?;
    w.flush()?;
    let mut w = create(&out.join("table2.csv"))?;
    write_table2(&result.comparisons, &mut w)?;
    w.flush()?;
    write_json(&out.join("results.json"), &result)?;
    println!("{scenario} scenario, {} folds, seed {}", result.plan.folds.len(), s.seed);
    println!("{:<6} {:<16} {:>8} {:>10} {:>10} {:>10}", "type", "method", "concord", "q025", "mean", "q975");
    for r in &rows {
        println!(
            "{:<6} {:<16} {:>8} {:>10} {:>10} {:>10}",
            r.kind.as_str(),
            r.method,
            r.concordance.map_or("n/a".into(), |c| format!("{c:.3}")),
            format_value(r.summary.q025),
            format_value(r.summary.mean),
            format_value(r.summary.q975)
        );
    }
    println!("tables written to {}", out.display());
    Ok(())
}

fn cmd_compare(s: &Settings, cohort: &Path, scenario: Scenario, methods: &[Method], out: &Path) -> Result<()> {
    let cohort = read_cohort(cohort)?;
    // run_scenario reports later methods as A; list B first
    let result = run_scenario(&cohort, scenario, &[methods[1], methods[0]], s.seed, &s.eval)?;
    let mut w = create(out)?;
    write_table2(&result.comparisons, &mut w)?;
    w.flush()?;
    for r in &result.comparisons {
        println!(
            "{} {} vs {}: P(A>B) {:.3}, A-B mean {}",
            r.kind.as_str(),
            r.method_a,
            r.method_b,
            r.comparison.p_a_gt_b,
            format_value(r.comparison.difference.mean)
        );
    }
    Ok(())
}

fn cmd_bootstrap_demo(s: &Settings, n: Option<usize>, sampled: bool, out: Option<&Path>) -> Result<()> {
    let n = n.or(s.file.n).unwrap_or(10_000);
    let iters = s.iters.unwrap_or(200);
    let r = memorizer_demo(n, iters, s.seed, sampled)?;
    println!(
        "A = {:.4}, B = {:.4}, C = {:.4}, O = {:.4}, coverage = {:.4}",
        r.report.apparent, r.report.b_mean, r.report.c_mean, r.report.optimism, r.report.mean_coverage
    );
    println!("corrected accuracy {:.4}; true accuracy {:.4}", r.corrected, r.true_performance);
    if let Some(path) = out {
        write_json(path, &r)?;
    }
    Ok(())
}

fn markers_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("curves");
    out.with_file_name(format!("{stem}_markers.csv"))
}

fn cmd_curves(model: &Path, cohort: &Path, out: &Path) -> Result<()> {
    let model = read_model(model)?;
    let cohort = read_cohort(cohort)?;
    let forecasts = predictions(&model, &cohort)?;
    let prior: Forecast = model.prior_prediction()?.into();
    let grid = log_time_grid(model.horizon);
    let mut w = csv::Writer::from_writer(create(out)?);
    w.write_record(["patient_id", "t", "density", "survival"])?;
    let mut emit = |id: &str, f: &Forecast| -> Result<()> {
        let mut times = grid.clone();
        if let Forecast::Spikes(s) = f {
            times.extend(s.spikes.iter().map(|sp| sp.0));
            times.sort_by(f64::total_cmp);
            times.dedup();
        }
        for &t in &times {
            let density = f.log_density(t).exp();
            w.write_record([id, &format_value(t), &format_value(density), &format_value(f.log_survival(t).exp())])?;
        }
        Ok(())
    };
    emit("__prior__", &prior)?;
    for (p, f) in cohort.patients().iter().zip(&forecasts) {
        emit(&p.id, f)?;
    }
    w.flush()?;
    let markers = markers_path(out);
    let mut m = csv::Writer::from_writer(create(&markers)?);
    m.write_record(["patient_id", "t", "event"])?;
    for p in cohort.patients() {
        m.write_record([p.id.as_str(), &format_value(p.time_months), if p.relapsed { "relapse" } else { "censored" }])?;
    }
    m.flush()?;
    println!(
        "curves for {} patients and the prior written to {}; markers to {}",
        cohort.len(),
        out.display(),
        markers.display()
    );
    Ok(())
}
