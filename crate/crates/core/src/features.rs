//! Rate-of-change feature construction.
//!
//! Each two-visit patient becomes a 13-dimensional vector: the weeks from
//! injury to the first gait analysis, followed by the per-week change of each
//! gait variable between the two visits.

use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, PatientRecord, GAIT_VARIABLES, N_GAIT};
use crate::error::{Error, Result};
use crate::exec::Execution;

pub const N_FEATURES: usize = N_GAIT + 1;
pub const WEEKS_FEATURE: &str = "weeks_to_first_analysis";

/// Canonical feature names: weeks to first analysis, then `roc_<variable>`.
pub fn feature_names() -> Vec<String> {
    std::iter::once(WEEKS_FEATURE.to_string())
        .chain(GAIT_VARIABLES.iter().map(|v| format!("roc_{v}")))
        .collect()
}

/// Per-week change `(g2 - g1) / (w2 - w1)`. Requires `w2 > w1`.
pub fn rate_of_change(g1: f64, g2: f64, w1: f64, w2: f64) -> Result<f64> {
    if !(w2 > w1) {
        return Err(Error::DegenerateInterval { w1, w2 });
    }
    Ok((g2 - g1) / (w2 - w1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocFeatureVector {
    pub patient_id: String,
    pub w1: f64,
    pub roc: [f64; N_GAIT],
    pub label: bool,
}

impl RocFeatureVector {
    pub fn to_row(&self) -> [f64; N_FEATURES] {
        let mut row = [0.0; N_FEATURES];
        row[0] = self.w1;
        row[1..].copy_from_slice(&self.roc);
        row
    }
}

pub fn build_feature_vector(patient: &PatientRecord) -> Result<RocFeatureVector> {
    let [first, second] = patient.visits.as_slice() else {
        return Err(Error::VisitCount {
            patient_id: patient.patient_id.clone(),
            found: patient.visits.len(),
        });
    };
    let (w1, w2) = (first.weeks_since_injury, second.weeks_since_injury);
    let mut roc = [0.0; N_GAIT];
    for (j, slot) in roc.iter_mut().enumerate() {
        *slot = rate_of_change(first.values[j], second.values[j], w1, w2)?;
    }
    if let Some(j) = roc.iter().position(|r| !r.is_finite()) {
        return Err(Error::NonFinite(format!("roc_{}", GAIT_VARIABLES[j])));
    }
    Ok(RocFeatureVector {
        patient_id: patient.patient_id.clone(),
        w1,
        roc,
        label: patient.complication,
    })
}

/// Rows of feature vectors with aligned labels and patient ids.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub patient_ids: Vec<String>,
    pub columns: Vec<String>,
    pub x: Array2<f64>,
    pub labels: Vec<bool>,
}

impl FeatureMatrix {
    pub fn from_vectors(vectors: &[RocFeatureVector]) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        let mut x = Array2::zeros((vectors.len(), N_FEATURES));
        for (mut dst, v) in x.rows_mut().into_iter().zip(vectors) {
            for (d, s) in dst.iter_mut().zip(v.to_row()) {
                *d = s;
            }
        }
        Ok(Self {
            patient_ids: vectors.iter().map(|v| v.patient_id.clone()).collect(),
            columns: feature_names(),
            x,
            labels: vectors.iter().map(|v| v.label).collect(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    /// Same rows with labels replaced.
    pub fn with_labels(&self, labels: Vec<bool>) -> Result<Self> {
        if labels.len() != self.n_rows() {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: self.n_rows(),
            });
        }
        Ok(Self {
            labels,
            ..self.clone()
        })
    }

    /// CSV with `patient_id`, the 13 canonical feature columns, then `label`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("patient_id");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push_str(",label\n");
        for ((id, row), label) in self.patient_ids.iter().zip(self.x.rows()).zip(&self.labels) {
            out.push_str(id);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{}", *label as u8);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        let expected: Vec<String> = std::iter::once("patient_id".to_string())
            .chain(feature_names())
            .chain(std::iter::once("label".to_string()))
            .collect();
        for (i, name) in expected.iter().enumerate() {
            match headers.get(i) {
                Some(h) if h == name => {}
                Some(h) => return Err(Error::UnknownColumn(h.to_string())),
                None => return Err(Error::MissingColumn(name.clone())),
            }
        }
        if headers.len() > expected.len() {
            return Err(Error::UnknownColumn(headers[expected.len()].to_string()));
        }
        let mut vectors = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let num = |i: usize| -> Result<f64> {
                record[i]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Row {
                        line,
                        message: format!("column `{}`: `{}` is not a finite number", expected[i], &record[i]),
                    })
            };
            let mut roc = [0.0; N_GAIT];
            for (j, slot) in roc.iter_mut().enumerate() {
                *slot = num(j + 2)?;
            }
            let label = match &record[N_FEATURES + 1] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Row {
                        line,
                        message: format!("label must be 0 or 1, got `{other}`"),
                    })
                }
            };
            vectors.push(RocFeatureVector {
                patient_id: record[0].to_string(),
                w1: num(1)?,
                roc,
                label,
            });
        }
        Self::from_vectors(&vectors)
    }
}

pub fn build_feature_matrix(cohort: &Cohort) -> Result<FeatureMatrix> {
    build_feature_matrix_with(cohort, Execution::default())
}

pub fn build_feature_matrix_with(cohort: &Cohort, exec: Execution) -> Result<FeatureMatrix> {
    if cohort.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let vectors = exec.try_map(cohort.len(), |i| {
        let p = &cohort.patients[i];
        build_feature_vector(p).map_err(|e| Error::Patient {
            patient_id: p.patient_id.clone(),
            source: Box::new(e),
        })
    })?;
    FeatureMatrix::from_vectors(&vectors)
}

/// Long-format `(patient_id, w1, variable, roc)` rows behind the funnel plot.
pub fn funnel_csv(features: &FeatureMatrix) -> String {
    let mut out = String::from("patient_id,w1,variable,roc\n");
    for (id, row) in features.patient_ids.iter().zip(features.x.rows()) {
        for (j, var) in GAIT_VARIABLES.iter().enumerate() {
            let _ = writeln!(out, "{id},{},{var},{}", row[0], row[j + 1]);
        }
    }
    out
}
