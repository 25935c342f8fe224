//! Seeded synthetic two-visit cohorts with a planted signal.
//!
//! Per patient: the complication label is drawn at `complication_rate`; the
//! first visit falls later for complication patients; each gait variable gets
//! a planted weekly rate whose mean and spread shrink as `exp(-w1 / tau)`,
//! which produces the funnel of rates against weeks since injury. Visit-2
//! values are built as `visit1 + rate · gap`, so the rate-of-change transform
//! recovers the planted rate up to rounding.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, GaitVisit, PatientRecord, Provenance, GAIT_VARIABLES, N_GAIT};
use crate::error::{Error, Result};
use crate::exec::{derive_seed, rng, Execution};

/// Generative profile of one gait variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariableProfile {
    /// Visit-1 values are uniform on `[baseline_low, baseline_high)`.
    pub baseline_low: f64,
    pub baseline_high: f64,
    /// Mean weekly rate for a patient without complication at w1 = 0.
    pub mean_rate: f64,
    /// Rate noise sd at w1 = 0, before the noise floor is added.
    pub rate_sd: f64,
}

const fn profile(baseline_low: f64, baseline_high: f64, mean_rate: f64, rate_sd: f64) -> VariableProfile {
    VariableProfile { baseline_low, baseline_high, mean_rate, rate_sd }
}

/// Default profiles in [`GAIT_VARIABLES`] order.
pub const DEFAULT_PROFILES: [VariableProfile; N_GAIT] = [
    profile(10.0, 30.0, 0.30, 0.25),
    profile(2.0, 10.0, -0.10, 0.10),
    profile(10.0, 30.0, 0.30, 0.25),
    profile(2.0, 10.0, -0.10, 0.10),
    profile(6.0, 14.0, -0.12, 0.10),
    profile(2.0, 10.0, -0.10, 0.10),
    profile(6.0, 14.0, -0.12, 0.10),
    profile(2.0, 10.0, -0.10, 0.10),
    profile(15.0, 35.0, 0.25, 0.20),
    profile(3.0, 11.0, -0.10, 0.10),
    profile(10.0, 26.0, 0.20, 0.20),
    profile(3.0, 11.0, -0.10, 0.10),
];

pub const FRACTURE_TYPES: [&str; 3] = ["femur-proximal", "tibia-malleolar", "other"];
pub const AGE_GROUPS: [&str; 3] = ["18-39", "40-64", "65+"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub n_patients: usize,
    pub complication_rate: f64,
    /// Decay constant in weeks of the funnel envelope; `None` disables decay.
    pub funnel_decay_tau: Option<f64>,
    pub noise_floor: f64,
    /// Scales the planted rates and the first-visit delay of complication
    /// patients; 0 removes all label signal.
    pub signal_strength: f64,
    /// Fraction of the mean improvement rate lost by complication patients.
    pub complication_rate_penalty: f64,
    /// First-visit window for patients without complication.
    pub w1_range: (f64, f64),
    /// First-visit window for complication patients at full signal strength.
    pub w1_range_complication: (f64, f64),
    /// Weeks between the two visits.
    pub gap_range: (f64, f64),
    pub p_underlying_condition: f64,
    pub p_readmission_with_condition: f64,
    pub p_readmission_without_condition: f64,
    pub profiles: [VariableProfile; N_GAIT],
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_patients: 200,
            complication_rate: 0.3,
            funnel_decay_tau: Some(8.0),
            noise_floor: 0.02,
            signal_strength: 1.0,
            complication_rate_penalty: 0.5,
            w1_range: (1.0, 16.0),
            w1_range_complication: (8.0, 26.0),
            gap_range: (2.0, 12.0),
            p_underlying_condition: 0.4,
            p_readmission_with_condition: 0.35,
            p_readmission_without_condition: 0.1,
            profiles: DEFAULT_PROFILES,
            seed: 42,
        }
    }
}

fn probability(p: f64, name: &str) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must lie in [0, 1], got {p}")))
    }
}

fn range(r: (f64, f64), name: &str) -> Result<()> {
    if r.0.is_finite() && r.1.is_finite() && r.0 >= 0.0 && r.0 < r.1 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be a finite non-negative interval, got {r:?}")))
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients < 10 {
            return Err(Error::Parameter(format!("n_patients must be at least 10, got {}", self.n_patients)));
        }
        if !(self.complication_rate > 0.0 && self.complication_rate < 1.0) {
            return Err(Error::Parameter(format!(
                "complication_rate must lie in (0, 1), got {}",
                self.complication_rate
            )));
        }
        if let Some(tau) = self.funnel_decay_tau {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::Parameter(format!("funnel_decay_tau must be positive, got {tau}")));
            }
        }
        for (v, name) in [
            (self.noise_floor, "noise_floor"),
            (self.signal_strength, "signal_strength"),
            (self.complication_rate_penalty, "complication_rate_penalty"),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        range(self.w1_range, "w1_range")?;
        range(self.w1_range_complication, "w1_range_complication")?;
        range(self.gap_range, "gap_range")?;
        if self.gap_range.0 <= 0.0 {
            return Err(Error::Parameter("gap_range must be strictly positive".into()));
        }
        probability(self.p_underlying_condition, "p_underlying_condition")?;
        probability(self.p_readmission_with_condition, "p_readmission_with_condition")?;
        probability(self.p_readmission_without_condition, "p_readmission_without_condition")?;
        for (p, name) in self.profiles.iter().zip(GAIT_VARIABLES) {
            if !(p.baseline_low < p.baseline_high && p.rate_sd >= 0.0 && p.mean_rate.is_finite()) {
                return Err(Error::Parameter(format!("invalid profile for {name}")));
            }
        }
        Ok(())
    }

    /// First-visit window for complication patients: interpolates from the
    /// ordinary window at zero signal to the delayed window at full signal.
    pub fn complication_window(&self) -> (f64, f64) {
        let s = self.signal_strength.min(1.0);
        let lerp = |a: f64, b: f64| a + s * (b - a);
        (
            lerp(self.w1_range.0, self.w1_range_complication.0),
            lerp(self.w1_range.1, self.w1_range_complication.1),
        )
    }

    fn envelope(&self, w1: f64) -> f64 {
        self.funnel_decay_tau.map_or(1.0, |tau| (-w1 / tau).exp())
    }
}

/// Planted quantities of one synthetic patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPatient {
    pub patient_id: String,
    pub complication: bool,
    pub w1: f64,
    pub w2: f64,
    /// Weekly rates in [`GAIT_VARIABLES`] order.
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub params: SynthParams,
    pub variables: Vec<String>,
    pub patients: Vec<PlantedPatient>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub cohort: Cohort,
    pub truth: GroundTruth,
}

fn patient_id(i: usize, n: usize) -> String {
    let width = n.to_string().len().max(4);
    format!("S{:0width$}", i + 1)
}

fn one_patient(params: &SynthParams, i: usize) -> Result<(PatientRecord, PlantedPatient)> {
    let mut r = rng(derive_seed(params.seed, i));
    let complication = r.random_bool(params.complication_rate);
    let (lo, hi) = if complication { params.complication_window() } else { params.w1_range };
    let w1 = r.random_range(lo..hi);
    let gap = r.random_range(params.gap_range.0..params.gap_range.1);
    let w2 = w1 + gap;

    let e = params.envelope(w1);
    let s = params.signal_strength;
    let penalty = if complication { 1.0 - params.complication_rate_penalty } else { 1.0 };
    let mut v1 = [0.0; N_GAIT];
    let mut v2 = [0.0; N_GAIT];
    let mut rates = Vec::with_capacity(N_GAIT);
    for (j, p) in params.profiles.iter().enumerate() {
        let sd = s * p.rate_sd * e + params.noise_floor;
        let noise = Normal::new(0.0, sd).map_err(|err| Error::Parameter(err.to_string()))?;
        let rate = s * p.mean_rate * penalty * e + noise.sample(&mut r);
        v1[j] = r.random_range(p.baseline_low..p.baseline_high);
        v2[j] = v1[j] + rate * gap;
        rates.push(rate);
    }

    let underlying_condition = r.random_bool(params.p_underlying_condition);
    let p_readmit = if underlying_condition {
        params.p_readmission_with_condition
    } else {
        params.p_readmission_without_condition
    };
    let readmission = r.random_bool(p_readmit);
    let fracture_type = FRACTURE_TYPES[r.random_range(0..FRACTURE_TYPES.len())].to_string();
    let age_group = AGE_GROUPS[r.random_range(0..AGE_GROUPS.len())].to_string();

    let id = patient_id(i, params.n_patients);
    let record = PatientRecord {
        patient_id: id.clone(),
        fracture_type,
        complication,
        readmission,
        underlying_condition,
        age_group,
        visits: vec![GaitVisit::new(w1, v1)?, GaitVisit::new(w2, v2)?],
    };
    Ok((record, PlantedPatient { patient_id: id, complication, w1, w2, rates }))
}

pub fn generate(params: &SynthParams) -> Result<SynthOutput> {
    generate_with(params, Execution::default())
}

/// Patient `i` draws from its own generator seeded `seed + i`, so the output
/// does not depend on the execution mode.
pub fn generate_with(params: &SynthParams, exec: Execution) -> Result<SynthOutput> {
    params.validate()?;
    let (patients, planted): (Vec<_>, Vec<_>) =
        exec.try_map(params.n_patients, |i| one_patient(params, i))?.into_iter().unzip();
    let cohort = Cohort {
        patients,
        provenance: Provenance {
            source: format!("synthetic(seed={})", params.seed),
            ingested_at: 0,
            outlier_policy: "none".into(),
        },
    };
    let truth = GroundTruth {
        params: params.clone(),
        variables: GAIT_VARIABLES.iter().map(|v| v.to_string()).collect(),
        patients: planted,
    };
    Ok(SynthOutput { cohort, truth })
}
