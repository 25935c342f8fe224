//! Contingency tables and Pearson chi-squared independence tests between
//! clinical factors and outcomes.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, PatientRecord};
use crate::error::{Error, Result};

/// Significance level used when phrasing verdicts.
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub observed: Vec<Vec<u64>>,
    pub n: u64,
}

impl ContingencyTable {
    /// Builds a table from raw counts; rows and columns must number at least 2.
    pub fn from_counts(
        row_labels: Vec<String>,
        col_labels: Vec<String>,
        observed: Vec<Vec<u64>>,
    ) -> Result<Self> {
        if row_labels.len() < 2 {
            return Err(Error::TooFewLabels { axis: "factor", found: row_labels.len() });
        }
        if col_labels.len() < 2 {
            return Err(Error::TooFewLabels { axis: "outcome", found: col_labels.len() });
        }
        if observed.len() != row_labels.len() {
            return Err(Error::LengthMismatch { left: observed.len(), right: row_labels.len() });
        }
        for row in &observed {
            if row.len() != col_labels.len() {
                return Err(Error::LengthMismatch { left: row.len(), right: col_labels.len() });
            }
        }
        let n = observed.iter().flatten().sum();
        Ok(Self { row_labels, col_labels, observed, n })
    }

    /// Unlabelled table, rows and columns labelled by index.
    pub fn from_rows(observed: Vec<Vec<u64>>) -> Result<Self> {
        let r = observed.len();
        let c = observed.first().map_or(0, Vec::len);
        Self::from_counts(
            (0..r).map(|i| i.to_string()).collect(),
            (0..c).map(|i| i.to_string()).collect(),
            observed,
        )
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.observed.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        (0..self.col_labels.len())
            .map(|j| self.observed.iter().map(|r| r[j]).sum())
            .collect()
    }
}

/// Cross-tabulates paired labels. Row and column labels are sorted
/// lexicographically.
pub fn contingency_table<F, O>(factor: &[F], outcome: &[O]) -> Result<ContingencyTable>
where
    F: AsRef<str>,
    O: AsRef<str>,
{
    if factor.len() != outcome.len() {
        return Err(Error::LengthMismatch { left: factor.len(), right: outcome.len() });
    }
    let rows: Vec<String> = factor
        .iter()
        .map(|s| s.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let cols: Vec<String> = outcome
        .iter()
        .map(|s| s.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if rows.len() < 2 {
        return Err(Error::TooFewLabels { axis: "factor", found: rows.len() });
    }
    if cols.len() < 2 {
        return Err(Error::TooFewLabels { axis: "outcome", found: cols.len() });
    }
    let mut observed = vec![vec![0u64; cols.len()]; rows.len()];
    for (f, o) in factor.iter().zip(outcome) {
        let i = rows.binary_search_by(|r| r.as_str().cmp(f.as_ref())).expect("row label");
        let j = cols.binary_search_by(|c| c.as_str().cmp(o.as_ref())).expect("col label");
        observed[i][j] += 1;
    }
    ContingencyTable::from_counts(rows, cols, observed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquaredResult {
    pub statistic: f64,
    pub dof: u32,
    pub p_value: f64,
    pub expected: Vec<Vec<f64>>,
    /// Some expected cell is below 5; the asymptotic p-value is unreliable.
    pub small_expected: bool,
    pub yates: bool,
}

impl ChiSquaredResult {
    pub fn significant(&self) -> bool {
        self.p_value < ALPHA
    }
}

/// Pearson chi-squared test without continuity correction.
pub fn chi_squared_test(table: &ContingencyTable) -> Result<ChiSquaredResult> {
    chi_squared_test_with(table, false)
}

/// Pearson chi-squared test; `yates` applies the continuity correction on
/// 2×2 tables and is ignored otherwise.
pub fn chi_squared_test_with(table: &ContingencyTable, yates: bool) -> Result<ChiSquaredResult> {
    let rows = table.row_totals();
    let cols = table.col_totals();
    let n = table.n as f64;
    let yates = yates && rows.len() == 2 && cols.len() == 2;

    let mut expected = vec![vec![0.0; cols.len()]; rows.len()];
    let mut statistic = 0.0;
    for (i, &ri) in rows.iter().enumerate() {
        for (j, &cj) in cols.iter().enumerate() {
            let e = ri as f64 * cj as f64 / n;
            if !(e > 0.0) {
                return Err(Error::InvalidTest(format!(
                    "expected count for cell ({}, {}) is zero",
                    table.row_labels[i], table.col_labels[j]
                )));
            }
            expected[i][j] = e;
            let mut d = (table.observed[i][j] as f64 - e).abs();
            if yates {
                d = (d - 0.5).max(0.0);
            }
            statistic += d * d / e;
        }
    }
    let small_expected = expected.iter().flatten().any(|&e| e < 5.0);
    if small_expected {
        log::warn!("chi-squared test has expected cell counts below 5");
    }
    let dof = ((rows.len() - 1) * (cols.len() - 1)) as u32;
    let p_value = regularized_gamma_q(dof as f64 / 2.0, statistic / 2.0)?;
    Ok(ChiSquaredResult { statistic, dof, p_value, expected, small_expected, yates })
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 10_000;

/// Upper regularized incomplete gamma `Q(a, x) = Γ(a, x) / Γ(a)`.
///
/// Uses the power series of `P = 1 - Q` for `x < a + 1` and a modified
/// Lentz continued fraction otherwise.
pub fn regularized_gamma_q(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Parameter(format!("gamma shape must be positive, got {a}")));
    }
    if !(x >= 0.0) {
        return Err(Error::Parameter(format!("gamma argument must be non-negative, got {x}")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma(a);
    let q = if x < a + 1.0 {
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..GAMMA_MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * GAMMA_EPS {
                break;
            }
        }
        1.0 - sum * log_prefactor.exp()
    } else {
        let tiny = f64::MIN_POSITIVE / GAMMA_EPS;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < GAMMA_EPS {
                break;
            }
        }
        log_prefactor.exp() * h
    };
    Ok(q.clamp(0.0, 1.0))
}

/// Boolean clinical flags usable as outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClinicalFlag {
    Complication,
    Readmission,
    UnderlyingCondition,
}

impl ClinicalFlag {
    pub fn of(self, p: &PatientRecord) -> bool {
        match self {
            ClinicalFlag::Complication => p.complication,
            ClinicalFlag::Readmission => p.readmission,
            ClinicalFlag::UnderlyingCondition => p.underlying_condition,
        }
    }
}

/// Categorical columns usable as the grouping factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Flag(ClinicalFlag),
    FractureType,
    AgeGroup,
}

impl Factor {
    pub fn label(self, p: &PatientRecord) -> String {
        match self {
            Factor::Flag(f) => (f.of(p) as u8).to_string(),
            Factor::FractureType => p.fracture_type.clone(),
            Factor::AgeGroup => p.age_group.clone(),
        }
    }
}

impl FromStr for ClinicalFlag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complication" => Ok(ClinicalFlag::Complication),
            "readmission" => Ok(ClinicalFlag::Readmission),
            "underlying_condition" => Ok(ClinicalFlag::UnderlyingCondition),
            other => Err(Error::Parameter(format!(
                "unknown flag `{other}` (expected complication, readmission or underlying_condition)"
            ))),
        }
    }
}

impl FromStr for Factor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fracture_type" => Ok(Factor::FractureType),
            "age_group" => Ok(Factor::AgeGroup),
            other => other.parse().map(Factor::Flag),
        }
    }
}

impl fmt::Display for ClinicalFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClinicalFlag::Complication => "complication",
            ClinicalFlag::Readmission => "readmission",
            ClinicalFlag::UnderlyingCondition => "underlying_condition",
        })
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Factor::Flag(flag) => flag.fmt(f),
            Factor::FractureType => f.write_str("fracture_type"),
            Factor::AgeGroup => f.write_str("age_group"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupProportion {
    pub label: String,
    pub size: usize,
    pub with_outcome: usize,
    /// `None` when the group is empty.
    pub proportion: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionReport {
    pub factor: String,
    pub outcome: String,
    pub groups: Vec<GroupProportion>,
    /// Last group's proportion minus the first's, for two-group factors with
    /// both groups non-empty.
    pub difference: Option<f64>,
    pub undefined_groups: Vec<String>,
}

/// Outcome rate within each factor group. Boolean factors always report both
/// the `0` and `1` groups, so a missing group shows up as undefined.
pub fn group_proportions(cohort: &Cohort, factor: Factor, outcome: ClinicalFlag) -> ProportionReport {
    let mut labels: BTreeSet<String> = cohort.patients.iter().map(|p| factor.label(p)).collect();
    if let Factor::Flag(_) = factor {
        labels.insert("0".into());
        labels.insert("1".into());
    }
    let groups: Vec<GroupProportion> = labels
        .into_iter()
        .map(|label| {
            let members: Vec<&PatientRecord> =
                cohort.patients.iter().filter(|p| factor.label(p) == label).collect();
            let with_outcome = members.iter().filter(|p| outcome.of(p)).count();
            let size = members.len();
            GroupProportion {
                proportion: (size > 0).then(|| with_outcome as f64 / size as f64),
                label,
                size,
                with_outcome,
            }
        })
        .collect();
    let difference = match groups.as_slice() {
        [a, b] => b.proportion.zip(a.proportion).map(|(pb, pa)| pb - pa),
        _ => None,
    };
    let undefined_groups = groups
        .iter()
        .filter(|g| g.proportion.is_none())
        .map(|g| g.label.clone())
        .collect();
    ProportionReport {
        factor: factor.to_string(),
        outcome: outcome.to_string(),
        groups,
        difference,
        undefined_groups,
    }
}

/// Everything the `assoc` command reports for one factor/outcome pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationReport {
    pub factor: String,
    pub outcome: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub observed: Vec<Vec<u64>>,
    pub expected: Vec<Vec<f64>>,
    pub statistic: f64,
    pub dof: u32,
    pub p_value: f64,
    pub significant: bool,
    pub small_expected: bool,
    pub proportions: ProportionReport,
}

pub fn associate(cohort: &Cohort, factor: Factor, outcome: ClinicalFlag) -> Result<AssociationReport> {
    let f: Vec<String> = cohort.patients.iter().map(|p| factor.label(p)).collect();
    let o: Vec<String> = cohort.patients.iter().map(|p| (outcome.of(p) as u8).to_string()).collect();
    let table = contingency_table(&f, &o)?;
    let test = chi_squared_test(&table)?;
    Ok(AssociationReport {
        factor: factor.to_string(),
        outcome: outcome.to_string(),
        significant: test.significant(),
        row_labels: table.row_labels,
        col_labels: table.col_labels,
        observed: table.observed,
        expected: test.expected,
        statistic: test.statistic,
        dof: test.dof,
        p_value: test.p_value,
        small_expected: test.small_expected,
        proportions: group_proportions(cohort, factor, outcome),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(rows: &[&[u64]]) -> ContingencyTable {
        ContingencyTable::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn counts_by_inspection() {
        let t = contingency_table(&["T", "T", "F", "F"], &["1", "0", "1", "0"]).unwrap();
        assert_eq!(t.row_labels, ["F", "T"]);
        assert_eq!(t.col_labels, ["0", "1"]);
        assert_eq!(t.observed, vec![vec![1, 1], vec![1, 1]]);
        assert_eq!(t.n, 4);
    }

    #[test]
    fn table_contract_errors() {
        assert!(matches!(
            contingency_table(&["a", "a"], &["0", "1"]),
            Err(Error::TooFewLabels { axis: "factor", found: 1 })
        ));
        assert!(matches!(
            contingency_table(&["a", "b"], &["0"]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn forty_pair_hand_tally() {
        // 12 (yes,1), 8 (yes,0), 5 (no,1), 15 (no,0)
        let mut f = Vec::new();
        let mut o = Vec::new();
        for (fl, ol, k) in [("yes", "1", 12), ("yes", "0", 8), ("no", "1", 5), ("no", "0", 15)] {
            for _ in 0..k {
                f.push(fl);
                o.push(ol);
            }
        }
        let t = contingency_table(&f, &o).unwrap();
        assert_eq!(t.row_labels, ["no", "yes"]);
        assert_eq!(t.observed, vec![vec![15, 5], vec![8, 12]]);
        assert_eq!(t.n, 40);
    }

    #[test]
    fn independence_gives_zero() {
        let r = chi_squared_test(&table(&[&[10, 10], &[10, 10]])).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.dof, 1);
    }

    #[test]
    fn two_by_two_and_two_by_three() {
        let r = chi_squared_test(&table(&[&[20, 5], &[5, 20]])).unwrap();
        assert!((r.statistic - 18.0).abs() < 1e-12);
        assert!((r.p_value - 2.209_049_699_858_544e-5).abs() < 1e-12);
        // every expected cell is 20: X² = 4 · 10² / 20 = 20, p = exp(-10) for dof 2
        let r = chi_squared_test(&table(&[&[10, 20, 30], &[30, 20, 10]])).unwrap();
        assert!((r.statistic - 20.0).abs() < 1e-12);
        assert_eq!(r.dof, 2);
        assert!((r.p_value - (-10.0f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn zero_expected_cell_is_invalid() {
        assert!(matches!(
            chi_squared_test(&table(&[&[0, 0], &[3, 4]])),
            Err(Error::InvalidTest(_))
        ));
    }

    #[test]
    fn yates_reduces_statistic() {
        let t = table(&[&[20, 5], &[5, 20]]);
        let r = chi_squared_test_with(&t, true).unwrap();
        // (|7.5| - 0.5)^2 / 12.5 * 4
        assert!((r.statistic - 15.68).abs() < 1e-12);
        assert!(r.yates);
    }

    #[test]
    fn small_expected_is_flagged() {
        let r = chi_squared_test(&table(&[&[1, 2], &[3, 1]])).unwrap();
        assert!(r.small_expected);
    }

    #[test]
    fn gamma_q_identities() {
        for a in [0.5, 1.0, 3.7, 50.0] {
            assert_eq!(regularized_gamma_q(a, 0.0).unwrap(), 1.0);
        }
        assert!((regularized_gamma_q(1.0, 2.0).unwrap() - 0.135_335_283_236_612_7).abs() < 1e-12);
        assert!((regularized_gamma_q(0.5, 9.0).unwrap() - 2.209_049_699_858_544e-5).abs() < 1e-12);
        assert!(regularized_gamma_q(2.0, 500.0).unwrap() < 1e-200);
        assert!(regularized_gamma_q(0.0, 1.0).is_err());
        assert!(regularized_gamma_q(1.0, -1.0).is_err());
    }

    #[test]
    fn ln_gamma_integers() {
        let mut fact = 1.0f64;
        for k in 1..20 {
            assert!((ln_gamma(k as f64) - fact.ln()).abs() < 1e-12, "k = {k}");
            fact *= k as f64;
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn proportions_and_undefined_group() {
        use crate::cohort::{PatientRecord, Provenance};
        let mk = |cond: bool, comp: bool| PatientRecord {
            patient_id: String::new(),
            fracture_type: "other".into(),
            complication: comp,
            readmission: false,
            underlying_condition: cond,
            age_group: "unknown".into(),
            visits: vec![],
        };
        let prov = Provenance { source: String::new(), ingested_at: 0, outlier_policy: "none".into() };
        let cohort = Cohort {
            patients: vec![mk(true, true), mk(true, true), mk(true, false), mk(true, false), mk(false, false)],
            provenance: prov.clone(),
        };
        let r = group_proportions(&cohort, Factor::Flag(ClinicalFlag::UnderlyingCondition), ClinicalFlag::Complication);
        assert_eq!(r.groups[1].label, "1");
        assert_eq!(r.groups[1].proportion, Some(0.5));
        assert_eq!(r.groups[0].proportion, Some(0.0));
        assert_eq!(r.difference, Some(0.5));

        let single = Cohort { patients: vec![mk(true, true), mk(true, false)], provenance: prov };
        let r = group_proportions(&single, Factor::Flag(ClinicalFlag::UnderlyingCondition), ClinicalFlag::Complication);
        assert_eq!(r.undefined_groups, ["0"]);
        assert_eq!(r.difference, None);
    }

    #[test]
    fn proportions_mirroring_reported_split() {
        use crate::cohort::{PatientRecord, Provenance};
        // 25 of 114 with condition (21.93%), 11 of 71 without (15.49%)
        let mut patients = Vec::new();
        for (cond, n, comp) in [(true, 114, 25), (false, 71, 11)] {
            for i in 0..n {
                patients.push(PatientRecord {
                    patient_id: String::new(),
                    fracture_type: "other".into(),
                    complication: i < comp,
                    readmission: false,
                    underlying_condition: cond,
                    age_group: "unknown".into(),
                    visits: vec![],
                });
            }
        }
        let cohort = Cohort {
            patients,
            provenance: Provenance { source: String::new(), ingested_at: 0, outlier_policy: "none".into() },
        };
        let r = group_proportions(&cohort, "underlying_condition".parse().unwrap(), ClinicalFlag::Complication);
        assert!((r.groups[1].proportion.unwrap() * 100.0 - 21.93).abs() < 5e-3);
        assert!((r.groups[0].proportion.unwrap() * 100.0 - 15.49).abs() < 5e-3);
    }

    proptest! {
        #[test]
        fn permutation_and_scaling(
            cells in prop::collection::vec(1u64..40, 6),
            k in 2u64..6,
        ) {
            let rows = vec![cells[0..3].to_vec(), cells[3..6].to_vec()];
            let base = chi_squared_test(&ContingencyTable::from_rows(rows.clone()).unwrap()).unwrap();

            let swapped: Vec<Vec<u64>> = vec![
                vec![rows[1][2], rows[1][0], rows[1][1]],
                vec![rows[0][2], rows[0][0], rows[0][1]],
            ];
            let perm = chi_squared_test(&ContingencyTable::from_rows(swapped).unwrap()).unwrap();
            prop_assert!((perm.statistic - base.statistic).abs() <= 1e-9 * (1.0 + base.statistic));
            prop_assert!((perm.p_value - base.p_value).abs() <= 1e-9);
            prop_assert_eq!(perm.dof, base.dof);

            let scaled_rows: Vec<Vec<u64>> = rows.iter().map(|r| r.iter().map(|c| c * k).collect()).collect();
            let scaled = chi_squared_test(&ContingencyTable::from_rows(scaled_rows).unwrap()).unwrap();
            prop_assert!((scaled.statistic - k as f64 * base.statistic).abs() <= 1e-9 * (1.0 + scaled.statistic));
            prop_assert!(scaled.p_value <= base.p_value + 1e-12);
        }

        #[test]
        fn proportional_rows_are_independent(base in prop::collection::vec(1u64..30, 3), m in 1u64..7) {
            let rows = vec![base.clone(), base.iter().map(|c| c * m).collect()];
            let r = chi_squared_test(&ContingencyTable::from_rows(rows).unwrap()).unwrap();
            prop_assert!(r.statistic < 1e-12);
            prop_assert!((r.p_value - 1.0).abs() < 1e-12);
        }

        #[test]
        fn q_decreasing_in_x(a in 0.5f64..50.0, x in 0f64..199.0, dx in 0.01f64..1.0) {
            let q0 = regularized_gamma_q(a, x).unwrap();
            let q1 = regularized_gamma_q(a, x + dx).unwrap();
            prop_assert!(q1 <= q0);
            prop_assert!((0.0..=1.0).contains(&q1));
        }
    }
}
