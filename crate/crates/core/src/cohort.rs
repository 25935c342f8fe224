//! Cohort data model: patients, their one or two gait visits, CSV ingestion,
//! outlier screening and the two-visit subset used for modelling.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of gait variables recorded per visit.
pub const N_GAIT: usize = 12;

/// Gait variable identifiers in canonical (CSV column) order.
pub const GAIT_VARIABLES: [&str; N_GAIT] = [
    "mean_left_leg_lift_acc",
    "left_leg_lift_acc_sem",
    "mean_right_leg_lift_acc",
    "right_leg_lift_acc_sem",
    "mean_left_stance_time",
    "left_stance_time_sem",
    "mean_right_stance_time",
    "right_stance_time_sem",
    "mean_pitch_magnitude",
    "pitch_magnitude_sem",
    "mean_roll_magnitude",
    "roll_magnitude_sem",
];

const ID_COLUMNS: [&str; 8] = [
    "patient_id",
    "visit_index",
    "weeks_since_injury",
    "fracture_type",
    "complication",
    "readmission",
    "underlying_condition",
    "age_group",
];

pub const UNKNOWN_AGE_GROUP: &str = "unknown";

/// One gait analysis session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitVisit {
    pub weeks_since_injury: f64,
    /// Values in [`GAIT_VARIABLES`] order.
    pub values: [f64; N_GAIT],
}

impl GaitVisit {
    pub fn new(weeks_since_injury: f64, values: [f64; N_GAIT]) -> Result<Self> {
        if !weeks_since_injury.is_finite() || weeks_since_injury < 0.0 {
            return Err(Error::Parameter(format!(
                "weeks_since_injury must be finite and non-negative, got {weeks_since_injury}"
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(GAIT_VARIABLES[j].to_string()));
        }
        Ok(Self {
            weeks_since_injury,
            values,
        })
    }

    pub fn get(&self, variable: &str) -> Option<f64> {
        GAIT_VARIABLES
            .iter()
            .position(|v| *v == variable)
            .map(|j| self.values[j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub fracture_type: String,
    pub complication: bool,
    pub readmission: bool,
    pub underlying_condition: bool,
    pub age_group: String,
    /// One or two visits, strictly increasing in weeks since injury.
    pub visits: Vec<GaitVisit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    /// Seconds since the Unix epoch.
    pub ingested_at: u64,
    pub outlier_policy: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cohort {
    pub patients: Vec<PatientRecord>,
    pub provenance: Provenance,
}

impl PartialEq for Cohort {
    /// Provenance carries a timestamp, so equality is over patients only.
    fn eq(&self, other: &Self) -> bool {
        self.patients == other.patients
    }
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    fn with_patients(&self, patients: Vec<PatientRecord>) -> Cohort {
        Cohort {
            patients,
            provenance: self.provenance.clone(),
        }
    }
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn parse_flag(raw: &str, column: &str, line: u64) -> Result<bool> {
    match raw {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Row {
            line,
            message: format!("column `{column}` must be 0 or 1, got `{other}`"),
        }),
    }
}

fn parse_real(raw: &str, column: &str, line: u64) -> Result<f64> {
    let value: f64 = raw.parse().map_err(|_| Error::Row {
        line,
        message: format!("column `{column}`: `{raw}` is not a number"),
    })?;
    if !value.is_finite() {
        return Err(Error::Row {
            line,
            message: format!("column `{column}`: `{raw}` is not finite"),
        });
    }
    Ok(value)
}

struct PendingPatient {
    record: PatientRecord,
    visits: BTreeMap<u8, (u64, GaitVisit)>,
}

/// Parses a visit CSV (see the README for the column schema).
///
/// `source` is recorded in the cohort provenance.
pub fn parse_cohort_csv(text: &str, source: &str) -> Result<Cohort> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());

    let headers = reader.headers()?.clone();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        let known = ID_COLUMNS.contains(&h) || GAIT_VARIABLES.contains(&h);
        if !known {
            return Err(Error::UnknownColumn(h.to_string()));
        }
        if index.insert(h, i).is_some() {
            return Err(Error::Row {
                line: 1,
                message: format!("column `{h}` appears twice"),
            });
        }
    }
    for col in ID_COLUMNS.iter().chain(GAIT_VARIABLES.iter()) {
        if *col != "age_group" && !index.contains_key(col) {
            return Err(Error::MissingColumn(col.to_string()));
        }
    }
    let age_col = index.get("age_group").copied();
    let gait_cols: Vec<usize> = GAIT_VARIABLES.iter().map(|c| index[c]).collect();

    let mut order: Vec<String> = Vec::new();
    let mut pending: HashMap<String, PendingPatient> = HashMap::new();

    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |name: &str| record.get(index[name]).unwrap_or("");

        let patient_id = field("patient_id").to_string();
        if patient_id.is_empty() {
            return Err(Error::Row {
                line,
                message: "empty patient_id".into(),
            });
        }
        let visit_index: u8 = match field("visit_index") {
            "1" => 1,
            "2" => 2,
            other => {
                return Err(Error::Row {
                    line,
                    message: format!("visit_index must be 1 or 2, got `{other}`"),
                })
            }
        };
        let weeks = parse_real(field("weeks_since_injury"), "weeks_since_injury", line)?;
        if weeks < 0.0 {
            return Err(Error::Row {
                line,
                message: format!("weeks_since_injury must be non-negative, got {weeks}"),
            });
        }
        let mut values = [0.0; N_GAIT];
        for (j, &c) in gait_cols.iter().enumerate() {
            values[j] = parse_real(record.get(c).unwrap_or(""), GAIT_VARIABLES[j], line)?;
        }
        let age_group = match age_col.and_then(|c| record.get(c)) {
            None | Some("") => UNKNOWN_AGE_GROUP.to_string(),
            Some(s) => s.to_string(),
        };
        let patient = PatientRecord {
            patient_id: patient_id.clone(),
            fracture_type: field("fracture_type").to_string(),
            complication: parse_flag(field("complication"), "complication", line)?,
            readmission: parse_flag(field("readmission"), "readmission", line)?,
            underlying_condition: parse_flag(
                field("underlying_condition"),
                "underlying_condition",
                line,
            )?,
            age_group,
            visits: Vec::new(),
        };
        let visit = GaitVisit {
            weeks_since_injury: weeks,
            values,
        };

        match pending.get_mut(&patient_id) {
            Some(p) => {
                if p.record != patient {
                    return Err(Error::Row {
                        line,
                        message: format!(
                            "clinical fields for patient `{patient_id}` differ between visits"
                        ),
                    });
                }
                if p.visits.contains_key(&visit_index) {
                    return Err(Error::DuplicateVisit {
                        patient_id,
                        visit_index,
                    });
                }
                p.visits.insert(visit_index, (line, visit));
            }
            None => {
                order.push(patient_id.clone());
                let mut visits = BTreeMap::new();
                visits.insert(visit_index, (line, visit));
                pending.insert(
                    patient_id,
                    PendingPatient {
                        record: patient,
                        visits,
                    },
                );
            }
        }
    }

    let mut patients = Vec::with_capacity(order.len());
    for id in order {
        let p = pending.remove(&id).expect("patient registered in order");
        let mut record = p.record;
        record.visits = p.visits.into_values().map(|(_, v)| v).collect();
        if let [a, b] = record.visits.as_slice() {
            if a.weeks_since_injury >= b.weeks_since_injury {
                return Err(Error::VisitOrder {
                    patient_id: id,
                    message: format!(
                        "visit 1 at week {} is not strictly before visit 2 at week {}",
                        a.weeks_since_injury, b.weeks_since_injury
                    ),
                });
            }
        }
        patients.push(record);
    }
    if patients.is_empty() {
        return Err(Error::EmptyCohort);
    }

    Ok(Cohort {
        patients,
        provenance: Provenance {
            source: source.to_string(),
            ingested_at: now_secs(),
            outlier_policy: "none".into(),
        },
    })
}

pub fn read_cohort_csv(path: &std::path::Path) -> Result<Cohort> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_cohort_csv(&text, &path.display().to_string())
}

/// Serializes a cohort to the visit CSV schema. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_cohort_csv(cohort: &Cohort) -> String {
    let mut out = String::new();
    out.push_str(&ID_COLUMNS.join(","));
    for v in GAIT_VARIABLES {
        out.push(',');
        out.push_str(v);
    }
    out.push('\n');
    for p in &cohort.patients {
        for (k, visit) in p.visits.iter().enumerate() {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{}",
                p.patient_id,
                k + 1,
                visit.weeks_since_injury,
                p.fracture_type,
                p.complication as u8,
                p.readmission as u8,
                p.underlying_condition as u8,
                p.age_group
            );
            for v in visit.values {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum OutlierPolicy {
    None,
    /// Tukey fences `[Q1 - k·IQR, Q3 + k·IQR]` per gait variable.
    Iqr { k: f64 },
}

impl Default for OutlierPolicy {
    fn default() -> Self {
        OutlierPolicy::Iqr { k: 1.5 }
    }
}

impl OutlierPolicy {
    pub fn name(&self) -> String {
        match self {
            OutlierPolicy::None => "none".into(),
            OutlierPolicy::Iqr { k } => format!("iqr({k})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub policy: String,
    /// Closed interval per gait variable; empty under the `none` policy.
    pub bounds: BTreeMap<String, (f64, f64)>,
    pub removed_patient_ids: Vec<String>,
    pub retained: usize,
}

/// Linear-interpolation quantile (Hyndman–Fan type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn screen_outliers(cohort: &Cohort, policy: OutlierPolicy) -> Result<(Cohort, OutlierReport)> {
    if cohort.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let k = match policy {
        OutlierPolicy::None => {
            let mut out = cohort.clone();
            out.provenance.outlier_policy = policy.name();
            let report = OutlierReport {
                policy: policy.name(),
                bounds: BTreeMap::new(),
                removed_patient_ids: Vec::new(),
                retained: cohort.len(),
            };
            return Ok((out, report));
        }
        OutlierPolicy::Iqr { k } => k,
    };
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::Parameter(format!("IQR multiplier must be positive, got {k}")));
    }

    let mut bounds = BTreeMap::new();
    for (j, name) in GAIT_VARIABLES.iter().enumerate() {
        let mut column: Vec<f64> = cohort
            .patients
            .iter()
            .flat_map(|p| p.visits.iter().map(move |v| v.values[j]))
            .collect();
        column.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&column, 0.25);
        let q3 = quantile_sorted(&column, 0.75);
        let iqr = q3 - q1;
        bounds.insert(name.to_string(), (q1 - k * iqr, q3 + k * iqr));
    }

    let (mut retained, removed) = apply_bounds(cohort, &bounds);
    retained.provenance.outlier_policy = policy.name();
    let report = OutlierReport {
        policy: policy.name(),
        bounds,
        retained: retained.len(),
        removed_patient_ids: removed,
    };
    Ok((retained, report))
}

/// Removes every patient with any visit value outside the given closed bounds.
/// Returns the retained cohort and the removed ids.
pub fn apply_bounds(
    cohort: &Cohort,
    bounds: &BTreeMap<String, (f64, f64)>,
) -> (Cohort, Vec<String>) {
    let fences: Vec<Option<(f64, f64)>> = GAIT_VARIABLES
        .iter()
        .map(|v| bounds.get(*v).copied())
        .collect();
    let inside = |p: &PatientRecord| {
        p.visits.iter().all(|visit| {
            visit
                .values
                .iter()
                .zip(&fences)
                .all(|(x, f)| f.is_none_or(|(lo, hi)| *x >= lo && *x <= hi))
        })
    };
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for p in &cohort.patients {
        if inside(p) {
            kept.push(p.clone());
        } else {
            removed.push(p.patient_id.clone());
        }
    }
    (cohort.with_patients(kept), removed)
}

/// Keeps the patients with exactly two visits, in order.
pub fn select_two_visit_subset(cohort: &Cohort) -> Result<Cohort> {
    let patients: Vec<PatientRecord> = cohort
        .patients
        .iter()
        .filter(|p| p.visits.len() == 2)
        .cloned()
        .collect();
    if patients.is_empty() {
        return Err(Error::EmptySubset);
    }
    Ok(cohort.with_patients(patients))
}
