//! Standardization, SMOTE oversampling and seeded train/test and k-fold
//! partitioning.
//!
//! Every operation is a pure function of its inputs and seed. Standardizers
//! are fitted on training rows only and then applied, unchanged, to held-out
//! rows.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::rng;

/// Column-wise `(x - mean) / scale` with population standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    /// Strictly positive; zero-variance columns get 1.
    pub scales: Vec<f64>,
    pub fitted_on: usize,
}

pub fn fit_standardizer(x: ArrayView2<f64>) -> Result<Standardizer> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "standardizer needs at least 2 rows, got {n}"
        )));
    }
    let mut means = Vec::with_capacity(x.ncols());
    let mut scales = Vec::with_capacity(x.ncols());
    for col in x.axis_iter(Axis(1)) {
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        means.push(mean);
        scales.push(if sd > 0.0 && sd.is_finite() { sd } else { 1.0 });
    }
    Ok(Standardizer { means, scales, fitted_on: n })
}

impl Standardizer {
    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(x.ncols())?;
        let mut out = x.to_owned();
        for (mut col, (m, s)) in out.axis_iter_mut(Axis(1)).zip(self.means.iter().zip(&self.scales)) {
            col.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }

    pub fn inverse_transform(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(z.ncols())?;
        let mut out = z.to_owned();
        for (mut col, (m, s)) in out.axis_iter_mut(Axis(1)).zip(self.means.iter().zip(&self.scales)) {
            col.mapv_inplace(|v| v * s + m);
        }
        Ok(out)
    }

    fn check(&self, cols: usize) -> Result<()> {
        if cols != self.means.len() {
            return Err(Error::DimensionMismatch { expected: self.means.len(), found: cols });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitScheme {
    StratifiedFraction,
    BalancedHoldout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub scheme: SplitScheme,
    pub seed: u64,
    /// Sorted ascending.
    pub train_indices: Vec<usize>,
    /// Sorted ascending.
    pub test_indices: Vec<usize>,
}

fn class_indices(labels: &[bool]) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        out[l as usize].push(i);
    }
    out
}

/// Assembles a plan by drawing `take[c]` members of each class for the test side.
fn draw_per_class(labels: &[bool], take: [usize; 2], seed: u64, scheme: SplitScheme) -> SplitPlan {
    let mut r = rng(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut members) in class_indices(labels).into_iter().enumerate() {
        members.shuffle(&mut r);
        let (t, rest) = members.split_at(take[class]);
        test.extend_from_slice(t);
        train.extend_from_slice(rest);
    }
    train.sort_unstable();
    test.sort_unstable();
    SplitPlan { scheme, seed, train_indices: train, test_indices: test }
}

/// Per class, `round_half_even(count · test_fraction)` members go to test,
/// clamped to leave at least one member on each side.
pub fn stratified_split(labels: &[bool], test_fraction: f64, seed: u64) -> Result<SplitPlan> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let classes = class_indices(labels);
    let mut take = [0usize; 2];
    for (c, members) in classes.iter().enumerate() {
        let count = members.len();
        if count == 0 {
            return Err(Error::SingleClass);
        }
        if count < 2 {
            return Err(Error::ClassTooSmall { class: Error::class_name(c == 1), have: count, need: 2 });
        }
        let raw = (count as f64 * test_fraction).round_ties_even() as usize;
        take[c] = raw.clamp(1, count - 1);
    }
    Ok(draw_per_class(labels, take, seed, SplitScheme::StratifiedFraction))
}

/// Exactly `per_class` members of each class form the test set.
pub fn balanced_holdout(labels: &[bool], per_class: usize, seed: u64) -> Result<SplitPlan> {
    if per_class == 0 {
        return Err(Error::Parameter("per_class must be positive".into()));
    }
    let classes = class_indices(labels);
    for (c, members) in classes.iter().enumerate() {
        if members.len() < per_class + 1 {
            return Err(Error::ClassTooSmall {
                class: Error::class_name(c == 1),
                have: members.len(),
                need: per_class + 1,
            });
        }
    }
    Ok(draw_per_class(labels, [per_class; 2], seed, SplitScheme::BalancedHoldout))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    /// Validation indices of each fold, sorted ascending.
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Indices outside fold `f`, ascending.
    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }
}

/// Shuffles each class and deals its members round-robin over the folds.
/// The negative class starts where the positive class stopped, so fold sizes
/// also differ by at most one.
pub fn stratified_kfold(labels: &[bool], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Parameter(format!("k must be at least 2, got {k}")));
    }
    let [neg, pos] = class_indices(labels);
    for (c, members) in [(false, &neg), (true, &pos)] {
        if members.len() < k {
            return Err(Error::ClassTooSmall { class: Error::class_name(c), have: members.len(), need: k });
        }
    }
    let mut r = rng(seed);
    let mut folds = vec![Vec::new(); k];
    let mut slot = 0;
    for mut members in [pos, neg] {
        members.shuffle(&mut r);
        for i in members {
            folds[slot % k].push(i);
            slot += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan { seed, folds })
}

pub const DEFAULT_SMOTE_K: usize = 5;

/// Result of [`smote_oversample`]: original rows first, then synthetic ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Oversampled {
    pub x: Array2<f64>,
    pub y: Vec<bool>,
    /// For each synthetic row: (base row, neighbour row, interpolation t),
    /// indices into the input matrix.
    pub provenance: Vec<(usize, usize, f64)>,
}

/// Euclidean k nearest neighbours of `row` among `candidates` (excluding
/// itself), ties broken by lower index.
fn nearest(x: ArrayView2<f64>, row: usize, candidates: &[usize], k: usize) -> Vec<usize> {
    let base = x.row(row);
    let mut d: Vec<(f64, usize)> = candidates
        .iter()
        .filter(|&&c| c != row)
        .map(|&c| {
            let dist = base.iter().zip(x.row(c)).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            (dist, c)
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.truncate(k);
    d.into_iter().map(|(_, c)| c).collect()
}

/// Brings the minority class up to the majority count by interpolating
/// between a uniformly chosen minority row and one of its
/// `min(k, n_min - 1)` nearest minority neighbours.
pub fn smote_oversample(x: ArrayView2<f64>, y: &[bool], k: usize, seed: u64) -> Result<Oversampled> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch { left: x.nrows(), right: y.len() });
    }
    if k == 0 {
        return Err(Error::Parameter("SMOTE needs k >= 1".into()));
    }
    let [neg, pos] = class_indices(y);
    if neg.is_empty() || pos.is_empty() {
        return Err(Error::SingleClass);
    }
    let need = pos.len().abs_diff(neg.len());
    if need == 0 {
        return Ok(Oversampled { x: x.to_owned(), y: y.to_vec(), provenance: Vec::new() });
    }
    let (minority, minority_label) = if pos.len() < neg.len() { (pos, true) } else { (neg, false) };

    let k_eff = k.min(minority.len() - 1);
    if k_eff == 0 {
        log::warn!("SMOTE minority class has a single member; duplicating it");
    }
    let neighbours: Vec<Vec<usize>> = minority.iter().map(|&i| nearest(x, i, &minority, k_eff)).collect();

    let mut r = rng(seed);
    let cols = x.ncols();
    let mut data = Vec::with_capacity((x.nrows() + need) * cols);
    data.extend(x.rows().into_iter().flat_map(|row| row.to_vec()));
    let mut provenance = Vec::with_capacity(need);
    for _ in 0..need {
        let m = r.random_range(0..minority.len());
        let base = minority[m];
        let (nb, t) = if neighbours[m].is_empty() {
            (base, 0.0)
        } else {
            let nb = neighbours[m][r.random_range(0..neighbours[m].len())];
            (nb, r.random::<f64>())
        };
        let a = x.row(base);
        let b = x.row(nb);
        data.extend(a.iter().zip(b.iter()).map(|(ai, bi)| ai + t * (bi - ai)));
        provenance.push((base, nb, t));
    }
    let mut labels = y.to_vec();
    labels.extend(std::iter::repeat_n(minority_label, need));
    let out = Array2::from_shape_vec((x.nrows() + need, cols), data).expect("shape");
    Ok(Oversampled { x: out, y: labels, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn two_point_standardizer() {
        let s = fit_standardizer(array![[1.0], [3.0]].view()).unwrap();
        assert_eq!(s.means, [2.0]);
        assert_eq!(s.scales, [1.0]);
    }

    #[test]
    fn constant_column_scale_one() {
        let x = array![[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]];
        let s = fit_standardizer(x.view()).unwrap();
        assert_eq!(s.means[0], 5.0);
        assert_eq!(s.scales[0], 1.0);
        let z = s.transform(x.view()).unwrap();
        assert!(z.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn standardizer_errors() {
        assert!(matches!(
            fit_standardizer(array![[1.0, 2.0]].view()),
            Err(Error::InsufficientData(_))
        ));
        let s = fit_standardizer(array![[1.0], [2.0]].view()).unwrap();
        assert!(matches!(
            s.transform(array![[1.0, 2.0]].view()),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn random_matrix_moments_and_round_trip() {
        let mut r = rng(3);
        let x = Array2::from_shape_fn((50, 13), |(_, j)| r.random::<f64>() * (j as f64 + 1.0) - 3.0);
        let s = fit_standardizer(x.view()).unwrap();
        let z = s.transform(x.view()).unwrap();
        for col in z.axis_iter(Axis(1)) {
            let mean = col.sum() / 50.0;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 50.0).sqrt();
            assert!(mean.abs() <= 1e-12);
            assert!((sd - 1.0).abs() <= 1e-12);
        }
        let back = s.inverse_transform(z.view()).unwrap();
        for (a, b) in back.iter().zip(x.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
        let shifted = x.mapv(|v| v + 100.0);
        let before = s.clone();
        let _ = s.transform(shifted.view()).unwrap();
        assert_eq!(s, before);
    }

    fn labels(pos: usize, neg: usize) -> Vec<bool> {
        let mut v = vec![true; pos];
        v.extend(vec![false; neg]);
        v
    }

    #[test]
    fn stratified_split_rounding() {
        // 10 positives · 0.25 = 2.5 -> 2 (ties to even); 30 negatives · 0.25 = 7.5 -> 8
        let y = labels(10, 30);
        let plan = stratified_split(&y, 0.25, 1).unwrap();
        let pos = plan.test_indices.iter().filter(|&&i| y[i]).count();
        let neg = plan.test_indices.len() - pos;
        assert_eq!((pos, neg), (2, 8));
        assert_eq!(plan, stratified_split(&y, 0.25, 1).unwrap());
        let small = stratified_split(&labels(4, 4), 0.25, 9).unwrap();
        assert_eq!(small.test_indices.len(), 2);
    }

    #[test]
    fn stratified_split_errors() {
        assert!(matches!(stratified_split(&labels(0, 5), 0.25, 1), Err(Error::SingleClass)));
        assert!(matches!(stratified_split(&labels(1, 5), 0.25, 1), Err(Error::ClassTooSmall { .. })));
        assert!(stratified_split(&labels(5, 5), 1.0, 1).is_err());
    }

    #[test]
    fn balanced_holdout_counts() {
        let y = labels(30, 60);
        let plan = balanced_holdout(&y, 12, 42).unwrap();
        assert_eq!(plan.test_indices.len(), 24);
        assert_eq!(plan.train_indices.len(), 66);
        assert_eq!(plan.test_indices.iter().filter(|&&i| y[i]).count(), 12);
        match balanced_holdout(&labels(12, 60), 12, 42) {
            Err(Error::ClassTooSmall { class, have: 12, need: 13 }) => assert_eq!(class, "positive"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn balanced_holdout_seeds_differ() {
        let y = labels(30, 60);
        let differing = (0..100u64)
            .filter(|&s| {
                balanced_holdout(&y, 12, s).unwrap().test_indices
                    != balanced_holdout(&y, 12, s + 1000).unwrap().test_indices
            })
            .count();
        assert!(differing >= 95, "{differing}");
    }

    #[test]
    fn kfold_divisible_and_pigeonhole() {
        let y = labels(10, 10);
        let plan = stratified_kfold(&y, 5, 0).unwrap();
        for f in &plan.folds {
            assert_eq!(f.iter().filter(|&&i| y[i]).count(), 2);
            assert_eq!(f.len(), 4);
        }
        let y = labels(11, 20);
        let plan = stratified_kfold(&y, 5, 0).unwrap();
        let mut counts: Vec<usize> = plan.folds.iter().map(|f| f.iter().filter(|&&i| y[i]).count()).collect();
        counts.sort_unstable();
        assert_eq!(counts, [2, 2, 2, 2, 3]);
        assert!(matches!(stratified_kfold(&labels(4, 10), 5, 0), Err(Error::ClassTooSmall { .. })));
    }

    #[test]
    fn smote_identity_when_balanced() {
        let x = array![[0.0, 1.0], [2.0, 3.0]];
        let out = smote_oversample(x.view(), &[true, false], 5, 1).unwrap();
        assert_eq!(out.x, x);
        assert!(out.provenance.is_empty());
    }

    #[test]
    fn smote_segment_geometry() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [5.0, 0.0], [6.0, 0.0], [7.0, 0.0], [8.0, 0.0]];
        let y = [true, true, false, false, false, false];
        let out = smote_oversample(x.view(), &y, 1, 11).unwrap();
        assert_eq!(out.x.nrows(), 8);
        assert_eq!(out.y.iter().filter(|&&l| l).count(), 4);
        for row in out.x.rows().into_iter().skip(6) {
            assert_eq!(row[0], row[1]);
            assert!((0.0..=1.0).contains(&row[0]));
        }
        assert_eq!(out.x.slice(ndarray::s![..6, ..]), x);
    }

    #[test]
    fn smote_single_minority_duplicates() {
        let x = array![[0.5, 0.5], [1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let out = smote_oversample(x.view(), &[true, false, false, false], 5, 3).unwrap();
        for row in out.x.rows().into_iter().skip(4) {
            assert_eq!(row.to_vec(), vec![0.5, 0.5]);
        }
        assert!(matches!(
            smote_oversample(x.view(), &[true; 4], 5, 3),
            Err(Error::SingleClass)
        ));
    }

    proptest! {
        #[test]
        fn kfold_partition_and_stratification(pos in 5usize..40, neg in 5usize..60, k in 2usize..6, seed in any::<u64>()) {
            let mut y = labels(pos, neg);
            y.shuffle(&mut rng(seed));
            let plan = stratified_kfold(&y, k, seed).unwrap();
            let mut all: Vec<usize> = plan.folds.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..y.len()).collect::<Vec<_>>());
            let global = pos as f64 / y.len() as f64;
            let counts: Vec<usize> = plan.folds.iter().map(|f| f.iter().filter(|&&i| y[i]).count()).collect();
            prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
            for (f, &c) in plan.folds.iter().zip(&counts) {
                let frac = c as f64 / f.len() as f64;
                prop_assert!((frac - global).abs() <= 1.0 / f.len() as f64 + 1e-12);
            }
            prop_assert_eq!(plan.clone(), stratified_kfold(&y, k, seed).unwrap());
        }

        #[test]
        fn splits_are_partitions(pos in 2usize..30, neg in 2usize..30, frac in 0.05f64..0.95, seed in any::<u64>()) {
            let y = labels(pos, neg);
            let plan = stratified_split(&y, frac, seed).unwrap();
            let mut all = plan.train_indices.clone();
            all.extend(&plan.test_indices);
            all.sort_unstable();
            prop_assert_eq!(all, (0..y.len()).collect::<Vec<_>>());
        }
    }
}
