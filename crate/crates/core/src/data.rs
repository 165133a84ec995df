//! Cohort data model and CSV interchange.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Covariate columns of the default cohort layout, in file order.
pub const DEFAULT_SCHEMA: [&str; 12] = [
    "psa", "tgfb1", "il6", "sil6r", "vegf", "vcam1", "endoglin", "upa", "pai1", "upar", "gleason",
    "stage",
];

pub fn default_schema() -> Vec<String> {
    DEFAULT_SCHEMA.iter().map(|s| s.to_string()).collect()
}

/// One right-censored observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    pub covariates: Vec<f64>,
    /// Relapse time if `relapsed`, otherwise end of follow-up.
    pub time_months: f64,
    pub relapsed: bool,
}

impl PatientRecord {
    pub fn log_covariates(&self) -> Vec<f64> {
        self.covariates.iter().map(|v| v.ln()).collect()
    }

    fn check(&self, width: usize) -> std::result::Result<(), (String, String)> {
        if self.covariates.len() != width {
            return Err((
                "covariates".into(),
                format!("expected {width} covariates, got {}", self.covariates.len()),
            ));
        }
        if !(self.time_months.is_finite() && self.time_months > 0.0) {
            return Err(("time_months".into(), format!("must be finite and > 0, got {}", self.time_months)));
        }
        for (j, v) in self.covariates.iter().enumerate() {
            if !(v.is_finite() && *v > 0.0) {
                return Err((format!("covariate {j}"), format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    schema: Vec<String>,
    patients: Vec<PatientRecord>,
}

impl Cohort {
    pub fn new(schema: Vec<String>, patients: Vec<PatientRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(patients.len());
        for (row, p) in patients.iter().enumerate() {
            if let Err((column, message)) = p.check(schema.len()) {
                let column = match column.strip_prefix("covariate ") {
                    Some(j) => schema[j.parse::<usize>().unwrap()].clone(),
                    None => column,
                };
                return Err(Error::Parse { row: row + 1, column, message });
            }
            if !seen.insert(p.id.as_str()) {
                return Err(Error::Parse {
                    row: row + 1,
                    column: "id".into(),
                    message: format!("duplicate id `{}`", p.id),
                });
            }
        }
        Ok(Self { schema, patients })
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn width(&self) -> usize {
        self.schema.len()
    }

    pub fn patients(&self) -> &[PatientRecord] {
        &self.patients
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn events(&self) -> usize {
        self.patients.iter().filter(|p| p.relapsed).count()
    }

    pub fn get(&self, id: &str) -> Option<&PatientRecord> {
        self.patients.iter().find(|p| p.id == id)
    }

    /// Sub-cohort of the given ids, in the order given. Unknown ids are skipped.
    pub fn subset<'a, I: IntoIterator<Item = &'a str>>(&self, ids: I) -> Cohort {
        let index: std::collections::HashMap<&str, &PatientRecord> =
            self.patients.iter().map(|p| (p.id.as_str(), p)).collect();
        let patients = ids.into_iter().filter_map(|id| index.get(id).map(|p| (*p).clone())).collect();
        Cohort { schema: self.schema.clone(), patients }
    }

    /// Cohort with records taken by index; repeated indices get suffixed ids so
    /// that ids stay unique.
    pub fn resample(&self, indices: &[usize]) -> Cohort {
        let mut counts = vec![0usize; self.patients.len()];
        let patients = indices
            .iter()
            .map(|&i| {
                let mut p = self.patients[i].clone();
                if counts[i] > 0 {
                    p.id = format!("{}#{}", p.id, counts[i]);
                }
                counts[i] += 1;
                p
            })
            .collect();
        Cohort { schema: self.schema.clone(), patients }
    }

    pub fn check_covariates(&self, covariates: &[f64]) -> Result<()> {
        if covariates.len() != self.width() {
            return Err(Error::Schema { expected: self.width(), got: covariates.len() });
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.to_string()).collect();
        let find = |name: &str| {
            header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
                row: 0,
                column: name.to_string(),
                message: "missing column in header".into(),
            })
        };
        let id_col = find("id")?;
        let time_col = find("time_months")?;
        let event_col = find("relapsed")?;
        let cov_cols: Vec<usize> =
            (0..header.len()).filter(|c| ![id_col, time_col, event_col].contains(c)).collect();
        let schema: Vec<String> = cov_cols.iter().map(|&c| header[c].clone()).collect();

        let mut patients = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let row = i + 1;
            let record = record?;
            let field = |c: usize| record.get(c).unwrap_or("");
            let number = |c: usize| -> Result<f64> {
                field(c).parse::<f64>().map_err(|e| Error::Parse {
                    row,
                    column: header[c].clone(),
                    message: format!("`{}` is not a number ({e})", field(c)),
                })
            };
            let covariates = cov_cols.iter().map(|&c| number(c)).collect::<Result<Vec<_>>>()?;
            let relapsed = match field(event_col) {
                "1" | "true" => true,
                "0" | "false" => false,
                other => {
                    return Err(Error::Parse {
                        row,
                        column: "relapsed".into(),
                        message: format!("expected one of 0, 1, true, false; got `{other}`"),
                    })
                }
            };
            patients.push(PatientRecord {
                id: field(id_col).to_string(),
                covariates,
                time_months: number(time_col)?,
                relapsed,
            });
        }
        Cohort::new(schema, patients)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string()];
        header.extend(self.schema.iter().cloned());
        header.push("time_months".into());
        header.push("relapsed".into());
        wtr.write_record(&header)?;
        for p in &self.patients {
            let mut row = vec![p.id.clone()];
            row.extend(p.covariates.iter().map(|v| v.to_string()));
            row.push(p.time_months.to_string());
            row.push(if p.relapsed { "1" } else { "0" }.to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn load_cohort(path: impl AsRef<Path>) -> Result<Cohort> {
    Cohort::read_csv(std::fs::File::open(path)?)
}

pub fn save_cohort(cohort: &Cohort, path: impl AsRef<Path>) -> Result<()> {
    cohort.write_csv(std::fs::File::create(path)?)
}
