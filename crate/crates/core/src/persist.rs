//! Versioned JSON model files, so that fitting and prediction can run as
//! separate invocations.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constant_hazard::{ch_predictive, fit_constant_hazard, ConstantHazardModel};
use crate::cox::{blur_spikes, fit_cox, predict_spikes, CoxModel};
use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::metrics::Forecast;
use crate::mixture::{predictive_curve, run_mcmc, ChainConfig, HyperParams, MixtureSample};
use crate::prediction::SurvivalPrediction;
use crate::prior::{fit_exponential_prior, prior_prediction, ExponentialPrior};
use crate::scenarios::{EvalConfig, Method};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelPayload {
    Prior,
    Cox { model: CoxModel },
    ConstantHazard { model: ConstantHazardModel },
    Mixture { hyper: HyperParams, chain: ChainConfig, samples: Vec<MixtureSample> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub method: Method,
    pub horizon: f64,
    pub schema: Vec<String>,
    pub train_ids: Vec<String>,
    pub prior: ExponentialPrior,
    pub payload: ModelPayload,
}

impl ModelFile {
    pub fn fit(method: Method, train: &Cohort, eval: &EvalConfig) -> Result<Self> {
        eval.validate()?;
        let prior = fit_exponential_prior(train)?;
        let payload = match method {
            Method::Prior => ModelPayload::Prior,
            Method::CoxPh | Method::CoxPhUnblurred => ModelPayload::Cox { model: fit_cox(train)? },
            Method::CoxCh => ModelPayload::ConstantHazard { model: fit_constant_hazard(train)? },
            Method::Bayes => {
                let hyper = eval.hyper(train)?;
                let samples = run_mcmc(train, &hyper, &eval.chain)?;
                ModelPayload::Mixture {
                    hyper,
                    chain: eval.chain.clone(),
                    samples: samples.iter().map(MixtureSample::without_latents).collect(),
                }
            }
        };
        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            method,
            horizon: eval.horizon,
            schema: train.schema().to_vec(),
            train_ids: train.patients().iter().map(|p| p.id.clone()).collect(),
            prior,
            payload,
        })
    }

    pub fn prior_prediction(&self) -> Result<SurvivalPrediction> {
        prior_prediction(&self.prior, self.horizon)
    }

    fn check_covariates(&self, covariates: &[f64]) -> Result<()> {
        if covariates.len() != self.schema.len() {
            return Err(Error::Schema { expected: self.schema.len(), got: covariates.len() });
        }
        Ok(())
    }

    pub fn predict(&self, covariates: &[f64]) -> Result<Forecast> {
        self.check_covariates(covariates)?;
        let h = self.horizon;
        Ok(match (&self.payload, self.method) {
            (ModelPayload::Prior, _) => self.prior_prediction()?.into(),
            (ModelPayload::Cox { model }, Method::CoxPhUnblurred) => predict_spikes(model, covariates, h)?.into(),
            (ModelPayload::Cox { model }, _) => blur_spikes(&predict_spikes(model, covariates, h)?, h)?.into(),
            (ModelPayload::ConstantHazard { model }, _) => ch_predictive(model, covariates, h)?.into(),
            (ModelPayload::Mixture { samples, .. }, _) => predictive_curve(samples, covariates, h)?.into(),
        })
    }

    /// Schema of `cohort` must match the training schema column by column.
    pub fn check_schema(&self, cohort: &Cohort) -> Result<()> {
        if cohort.schema() != self.schema.as_slice() {
            return Err(Error::Config(format!(
                "cohort columns [{}] do not match the model's [{}]",
                cohort.schema().join(","),
                self.schema.join(",")
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        let version = value.get("format_version").and_then(|v| v.as_u64());
        if version != Some(u64::from(MODEL_FORMAT_VERSION)) {
            return Err(Error::Config(format!(
                "unsupported model file version {version:?}; expected {MODEL_FORMAT_VERSION}, refit the model"
            )));
        }
        Ok(serde_json::from_value(value)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic, SynthConfig};

    #[test]
    fn model_round_trips_through_json() {
        let cohort = generate_synthetic(&SynthConfig { n: 150, ..SynthConfig::default() }, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for method in [Method::Prior, Method::CoxPh, Method::CoxCh] {
            let model = ModelFile::fit(method, &cohort, &EvalConfig::default()).unwrap();
            let path = dir.path().join(format!("{method}.json"));
            model.save(&path).unwrap();
            let back = ModelFile::load(&path).unwrap();
            assert_eq!(back, model);
            let x = &cohort.patients()[0].covariates;
            assert_eq!(back.predict(x).unwrap(), model.predict(x).unwrap());
        }
    }

    #[test]
    fn wrong_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, r#"{"format_version": 99}"#).unwrap();
        assert!(matches!(ModelFile::load(&path), Err(Error::Config(_))));
    }
}
