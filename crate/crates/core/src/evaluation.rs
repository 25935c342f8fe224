//! Metrics, cross-validated grid search, bootstrap confidence intervals,
//! feature importance, and the hold-out train/evaluate pipeline.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cohort::quantile_sorted;
use crate::error::{Error, Result};
use crate::exec::{derive_seed, rng, Execution};
use crate::features::FeatureMatrix;
use crate::learners::{labels_from_scores, train, Family, Hyperparams, ModelSpec, Parameters, TrainedModel};
use crate::resampling::{
    balanced_holdout, fit_standardizer, smote_oversample, stratified_kfold, stratified_split, SplitPlan,
    Standardizer, DEFAULT_SMOTE_K,
};

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_PERMUTATIONS: usize = 20;
pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Redraws allowed for a single-class bootstrap resample before it is skipped.
pub const MAX_REDRAWS: usize = 10;

fn check_both_classes(labels: &[bool]) -> Result<()> {
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Rows scoring `>= threshold` are called positive; the first point uses +inf.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve with one point per distinct score, thresholds descending.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores".into()));
    }
    check_both_classes(labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { threshold: s, fpr: fp as f64 / n_neg, tpr: tp as f64 / n_pos });
    }
    Ok(points)
}

pub fn trapezoid_area(points: &[RocPoint]) -> f64 {
    points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum()
}

/// Area under the ROC curve; equals the probability that a random positive
/// outscores a random negative, ties counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    Ok(trapezoid_area(&roc_curve(scores, labels)?))
}

pub fn accuracy(predicted: &[bool], labels: &[bool]) -> Result<f64> {
    if predicted.len() != labels.len() {
        return Err(Error::LengthMismatch { left: predicted.len(), right: labels.len() });
    }
    if labels.is_empty() {
        return Err(Error::InsufficientData("accuracy of an empty set".into()));
    }
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCI {
    pub point: f64,
    pub mean_over_resamples: f64,
    /// 2.5th and 97.5th percentiles (type 7) of the retained resamples.
    pub ci_low: f64,
    pub ci_high: f64,
    /// Retained resamples.
    pub resamples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub auc: MetricCI,
    pub accuracy: MetricCI,
    pub requested: usize,
    pub skipped: usize,
}

fn summarize(point: f64, mut values: Vec<f64>, seed: u64) -> MetricCI {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.sort_by(f64::total_cmp);
    MetricCI {
        point,
        mean_over_resamples: mean,
        ci_low: quantile_sorted(&values, 0.025),
        ci_high: quantile_sorted(&values, 0.975),
        resamples: values.len(),
        seed,
    }
}

/// Percentile bootstrap of AUC and accuracy over the test set. Resample `i`
/// draws from its own generator seeded `seed + i`.
pub fn bootstrap_metrics(
    scores: &[f64],
    predicted: &[bool],
    labels: &[bool],
    resamples: usize,
    seed: u64,
    exec: Execution,
) -> Result<BootstrapResult> {
    if resamples == 0 {
        return Err(Error::Parameter("resamples must be at least 1".into()));
    }
    if predicted.len() != labels.len() {
        return Err(Error::LengthMismatch { left: predicted.len(), right: labels.len() });
    }
    let point_auc = auc(scores, labels)?;
    let point_acc = accuracy(predicted, labels)?;
    let n = labels.len();

    let draws: Vec<Option<(f64, f64)>> = exec.map(resamples, |i| {
        let mut r = rng(derive_seed(seed, i));
        for _ in 0..=MAX_REDRAWS {
            let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
            let l: Vec<bool> = idx.iter().map(|&j| labels[j]).collect();
            if check_both_classes(&l).is_err() {
                continue;
            }
            let s: Vec<f64> = idx.iter().map(|&j| scores[j]).collect();
            let p: Vec<bool> = idx.iter().map(|&j| predicted[j]).collect();
            let a = auc(&s, &l).expect("both classes present");
            let acc = accuracy(&p, &l).expect("equal lengths");
            return Some((a, acc));
        }
        None
    });
    let kept: Vec<(f64, f64)> = draws.iter().flatten().copied().collect();
    let skipped = resamples - kept.len();
    if kept.is_empty() {
        return Err(Error::InsufficientData(format!("all {resamples} bootstrap resamples were single-class")));
    }
    if skipped > 0 {
        log::warn!("{skipped} bootstrap resamples skipped after {MAX_REDRAWS} single-class redraws");
    }
    Ok(BootstrapResult {
        auc: summarize(point_auc, kept.iter().map(|k| k.0).collect(), seed),
        accuracy: summarize(point_acc, kept.iter().map(|k| k.1).collect(), seed),
        requested: resamples,
        skipped,
    })
}

/// Default hyperparameter grid for a family; each includes the family default.
pub fn default_grid(family: Family) -> Vec<Hyperparams> {
    let mut grid = Vec::new();
    match family {
        Family::Logistic => {
            for lambda in [0.01, 0.1, 1.0, 10.0] {
                grid.push(Hyperparams::Logistic { lambda });
            }
        }
        Family::SvmPoly => {
            let Hyperparams::SvmPoly { gamma, coef0, .. } = Hyperparams::default_for(family) else { unreachable!() };
            for c in [0.1, 1.0, 10.0] {
                for degree in [2, 3] {
                    grid.push(Hyperparams::SvmPoly { degree, c, gamma, coef0 });
                }
            }
        }
        Family::Tree => {
            for max_depth in [1, 2, 3, 4] {
                grid.push(Hyperparams::Tree { max_depth, min_samples_split: 2 });
            }
        }
        Family::Forest => {
            for trees in [3, 5, 10] {
                for max_depth in [2, 3] {
                    grid.push(Hyperparams::Forest {
                        trees,
                        max_depth,
                        min_samples_split: 2,
                        bootstrap: true,
                        max_features: None,
                    });
                }
            }
        }
        Family::GbtLevelwise | Family::GbtLeafwise => {
            for trees in [3, 5, 10, 25] {
                for max_depth in [2, 3] {
                    for learning_rate in [0.1, 0.3] {
                        grid.push(if family == Family::GbtLevelwise {
                            Hyperparams::GbtLevelwise { trees, max_depth, learning_rate, lambda: 1.0, gamma: 0.0 }
                        } else {
                            Hyperparams::GbtLeafwise {
                                trees,
                                max_depth,
                                learning_rate,
                                lambda: 1.0,
                                gamma: 0.0,
                                max_leaves: 3,
                            }
                        });
                    }
                }
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub params: Hyperparams,
    pub fold_aucs: Vec<f64>,
    pub mean_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvTable {
    pub k: usize,
    pub seed: u64,
    pub smote: bool,
    pub rows: Vec<CvRow>,
    pub winner: usize,
}

/// What one (grid point, fold) task touched, for leakage audits.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldTrace {
    pub grid_index: usize,
    pub fold: usize,
    pub validation_indices: Vec<usize>,
    pub standardizer_rows: Vec<usize>,
    /// Rows handed to SMOTE; empty when oversampling is off.
    pub smote_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchOutcome {
    pub table: CvTable,
    pub best: ModelSpec,
    pub traces: Vec<FoldTrace>,
}

/// Standardizes with statistics of `rows`, optionally oversamples, and trains.
fn fit_on_rows(
    x: ArrayView2<f64>,
    y: &[bool],
    rows: &[usize],
    spec: &ModelSpec,
    smote: bool,
    smote_seed: u64,
) -> Result<(Standardizer, TrainedModel)> {
    let xt = x.select(Axis(0), rows);
    let yt: Vec<bool> = rows.iter().map(|&i| y[i]).collect();
    let scaler = fit_standardizer(xt.view())?;
    let zt = scaler.transform(xt.view())?;
    let model = if smote {
        let over = smote_oversample(zt.view(), &yt, DEFAULT_SMOTE_K, smote_seed)?;
        train(over.x.view(), &over.y, spec)?
    } else {
        train(zt.view(), &yt, spec)?
    };
    Ok((scaler, model))
}

fn score_rows(
    x: ArrayView2<f64>,
    rows: &[usize],
    scaler: &Standardizer,
    model: &TrainedModel,
) -> Result<Vec<f64>> {
    let z = scaler.transform(x.select(Axis(0), rows).view())?;
    model.predict_score(z.view())
}

fn better(a: &CvRow, b: &CvRow) -> bool {
    if a.mean_auc != b.mean_auc {
        return a.mean_auc > b.mean_auc;
    }
    let (ka, kb) = (a.params.complexity_key(), b.params.complexity_key());
    ka.iter().zip(&kb).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()) == Some(std::cmp::Ordering::Less)
}

/// k-fold stratified grid search. Every (grid point, fold) task fits its own
/// standardizer on the fold's training rows, oversamples those rows only when
/// `smote` is set, and scores the untouched validation rows. Fold `f` uses
/// seed `seed + f` for both SMOTE and the learner, independent of the grid
/// point's position, so reordering the grid cannot change the winner. Ties on
/// mean AUC go to the smaller [`Hyperparams::complexity_key`].
pub fn grid_search(
    grid: &[Hyperparams],
    x: ArrayView2<f64>,
    y: &[bool],
    k: usize,
    seed: u64,
    smote: bool,
    exec: Execution,
) -> Result<GridSearchOutcome> {
    if grid.is_empty() {
        return Err(Error::Parameter("empty hyperparameter grid".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch { left: x.nrows(), right: y.len() });
    }
    for p in grid {
        p.validate()?;
    }
    let plan = stratified_kfold(y, k, seed)?;
    let results = exec.try_map(grid.len() * k, |task| {
        let (g, f) = (task / k, task % k);
        let train_rows = plan.train_indices(f);
        let val = &plan.folds[f];
        let fold_seed = derive_seed(seed, f);
        let spec = ModelSpec::new(grid[g].clone(), fold_seed);
        let wrap = |e: Error| Error::Training { grid_index: g, fold: f, source: Box::new(e) };
        let (scaler, model) = fit_on_rows(x, y, &train_rows, &spec, smote, fold_seed).map_err(wrap)?;
        let scores = score_rows(x, val, &scaler, &model).map_err(wrap)?;
        let val_labels: Vec<bool> = val.iter().map(|&i| y[i]).collect();
        let a = auc(&scores, &val_labels).map_err(wrap)?;
        let trace = FoldTrace {
            grid_index: g,
            fold: f,
            validation_indices: val.clone(),
            smote_rows: if smote { train_rows.clone() } else { Vec::new() },
            standardizer_rows: train_rows,
        };
        Ok::<_, Error>((a, trace))
    })?;

    let mut rows = Vec::with_capacity(grid.len());
    let mut traces = Vec::with_capacity(results.len());
    for (g, params) in grid.iter().enumerate() {
        let fold_aucs: Vec<f64> = results[g * k..(g + 1) * k].iter().map(|r| r.0).collect();
        let mean_auc = fold_aucs.iter().sum::<f64>() / k as f64;
        rows.push(CvRow { params: params.clone(), fold_aucs, mean_auc });
    }
    traces.extend(results.into_iter().map(|r| r.1));
    let mut winner = 0;
    for g in 1..rows.len() {
        if better(&rows[g], &rows[winner]) {
            winner = g;
        }
    }
    let best = ModelSpec::new(rows[winner].params.clone(), seed);
    Ok(GridSearchOutcome { table: CvTable { k, seed, smote, rows, winner }, best, traces })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMethod {
    Coefficient,
    Permutation,
    Gain,
}

impl ImportanceMethod {
    pub fn name(self) -> &'static str {
        match self {
            ImportanceMethod::Coefficient => "coefficient",
            ImportanceMethod::Permutation => "permutation",
            ImportanceMethod::Gain => "gain",
        }
    }

    /// The natural method for a family.
    pub fn for_family(family: Family) -> Self {
        match family {
            Family::Logistic => ImportanceMethod::Coefficient,
            Family::SvmPoly => ImportanceMethod::Permutation,
            _ => ImportanceMethod::Gain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub method: ImportanceMethod,
    /// Sorted by importance, descending; ties keep column order.
    pub entries: Vec<ImportanceEntry>,
    /// Raw importances were all zero, so nothing was normalized.
    pub all_zero: bool,
}

impl ImportanceReport {
    fn from_raw(method: ImportanceMethod, names: &[String], raw: Vec<f64>) -> Self {
        let total: f64 = raw.iter().sum();
        let all_zero = total <= 0.0;
        let mut entries: Vec<ImportanceEntry> = names
            .iter()
            .zip(raw)
            .map(|(n, v)| ImportanceEntry {
                feature: n.clone(),
                importance: if all_zero { 0.0 } else { v / total },
            })
            .collect();
        entries.sort_by(|a, b| b.importance.total_cmp(&a.importance));
        ImportanceReport { method, entries, all_zero }
    }

    pub fn top(&self) -> Option<&str> {
        if self.all_zero {
            return None;
        }
        self.entries.first().map(|e| e.feature.as_str())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,importance,method\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.feature, e.importance, self.method.name()));
        }
        out
    }
}

/// Mean AUC drop when column `j` is shuffled, clipped at zero. Shuffle `r`
/// of column `j` uses seed `seed + j·permutations + r`.
pub fn permutation_importance_raw(
    model: &TrainedModel,
    x: ArrayView2<f64>,
    y: &[bool],
    permutations: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<f64>> {
    if permutations == 0 {
        return Err(Error::Parameter("permutations must be at least 1".into()));
    }
    let base = auc(&model.predict_score(x)?, y)?;
    exec.try_map(x.ncols(), |j| {
        let mut drop = 0.0;
        for r in 0..permutations {
            let mut col: Vec<f64> = x.column(j).to_vec();
            col.shuffle(&mut rng(derive_seed(seed, j * permutations + r)));
            let mut xp: Array2<f64> = x.to_owned();
            xp.column_mut(j).iter_mut().zip(&col).for_each(|(d, s)| *d = *s);
            drop += base - auc(&model.predict_score(xp.view())?, y)?;
        }
        Ok((drop / permutations as f64).max(0.0))
    })
}

/// Importance with the family's natural method: |coefficient| for logistic
/// regression, permutation AUC drop for the SVM, total split gain for tree
/// models. `x` and `y` are only used by the permutation method.
pub fn feature_importance(
    model: &TrainedModel,
    names: &[String],
    x: ArrayView2<f64>,
    y: &[bool],
    permutations: usize,
    seed: u64,
    exec: Execution,
) -> Result<ImportanceReport> {
    importance_with(ImportanceMethod::for_family(model.family()), model, names, x, y, permutations, seed, exec)
}

#[allow(clippy::too_many_arguments)]
pub fn importance_with(
    method: ImportanceMethod,
    model: &TrainedModel,
    names: &[String],
    x: ArrayView2<f64>,
    y: &[bool],
    permutations: usize,
    seed: u64,
    exec: Execution,
) -> Result<ImportanceReport> {
    if names.len() != model.n_features {
        return Err(Error::DimensionMismatch { expected: model.n_features, found: names.len() });
    }
    let raw = match (method, &model.parameters) {
        (ImportanceMethod::Coefficient, Parameters::Linear { weights, .. }) => {
            weights.iter().map(|w| w.abs()).collect()
        }
        (ImportanceMethod::Gain, Parameters::Averaged { trees } | Parameters::Boosted { trees, .. }) => {
            let mut acc = vec![0.0; model.n_features];
            for t in trees {
                t.accumulate_gain(&mut acc);
            }
            acc
        }
        (ImportanceMethod::Permutation, _) => permutation_importance_raw(model, x, y, permutations, seed, exec)?,
        (m, _) => {
            return Err(Error::Parameter(format!(
                "{} importance is not defined for {} models",
                m.name(),
                model.family()
            )))
        }
    };
    Ok(ImportanceReport::from_raw(method, names, raw))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Scenario {
    Stratified { test_fraction: f64 },
    BalancedHoldout { per_class: usize },
}

impl Scenario {
    pub fn split(&self, labels: &[bool], seed: u64) -> Result<SplitPlan> {
        match *self {
            Scenario::Stratified { test_fraction } => stratified_split(labels, test_fraction, seed),
            Scenario::BalancedHoldout { per_class } => balanced_holdout(labels, per_class, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub family: Family,
    pub scenario: Scenario,
    pub smote: bool,
    pub folds: usize,
    /// `None` uses [`default_grid`].
    pub grid: Option<Vec<Hyperparams>>,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(family: Family, scenario: Scenario, seed: u64) -> Self {
        Self { family, scenario, smote: false, folds: DEFAULT_FOLDS, grid: None, seed }
    }
}

/// Everything `evaluate` needs to score the held-out rows: the split, the
/// standardizer fitted on the training rows, and the refitted winner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingBundle {
    pub config: PipelineConfig,
    pub feature_names: Vec<String>,
    pub patient_ids: Vec<String>,
    pub split: SplitPlan,
    pub cv_table: CvTable,
    pub standardizer: Standardizer,
    pub model: TrainedModel,
}

/// Splits, grid-searches on the training rows, and refits the winner on all
/// of them. The split, the folds and the final model all use `config.seed`.
pub fn fit_pipeline(features: &FeatureMatrix, config: &PipelineConfig, exec: Execution) -> Result<TrainingBundle> {
    let split = config.scenario.split(&features.labels, config.seed)?;
    let xt = features.x.select(Axis(0), &split.train_indices);
    let yt: Vec<bool> = split.train_indices.iter().map(|&i| features.labels[i]).collect();
    let grid = config.grid.clone().unwrap_or_else(|| default_grid(config.family));
    if let Some(p) = grid.iter().find(|p| p.family() != config.family) {
        return Err(Error::Parameter(format!("grid point of family {} in a {} search", p.family(), config.family)));
    }
    let search = grid_search(&grid, xt.view(), &yt, config.folds, config.seed, config.smote, exec)?;
    let all: Vec<usize> = (0..yt.len()).collect();
    let (standardizer, model) = fit_on_rows(xt.view(), &yt, &all, &search.best, config.smote, config.seed)?;
    Ok(TrainingBundle {
        config: config.clone(),
        feature_names: features.columns.clone(),
        patient_ids: features.patient_ids.clone(),
        split,
        cv_table: search.table,
        standardizer,
        model,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub auc: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub split: u64,
    pub cv: u64,
    pub model: u64,
    pub bootstrap: u64,
    pub importance: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub scenario: Scenario,
    pub smote: bool,
    pub model: ModelSpec,
    pub n_test: usize,
    pub point: PointMetrics,
    pub auc_ci: MetricCI,
    pub accuracy_ci: MetricCI,
    pub cv_table: CvTable,
    pub importance: ImportanceReport,
    pub seeds: Seeds,
    pub skipped_resamples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvaluationReport,
    pub roc: Vec<RocPoint>,
    pub test_scores: Vec<f64>,
}

pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
    }
    out
}

/// Held-out test rows of `features` under the bundle's split, standardized.
pub fn test_rows(bundle: &TrainingBundle, features: &FeatureMatrix) -> Result<(Array2<f64>, Vec<bool>)> {
    if features.patient_ids != bundle.patient_ids {
        return Err(Error::Parameter("feature matrix does not match the one the model was trained on".into()));
    }
    let test = &bundle.split.test_indices;
    let z = bundle.standardizer.transform(features.x.select(Axis(0), test).view())?;
    Ok((z, test.iter().map(|&i| features.labels[i]).collect()))
}

/// Scores the bundle's test rows, bootstraps the metrics, and computes the
/// model's natural feature importance on the test rows.
pub fn evaluate_bundle(
    bundle: &TrainingBundle,
    features: &FeatureMatrix,
    resamples: usize,
    permutations: usize,
    seed: u64,
    exec: Execution,
) -> Result<Evaluation> {
    let (z, labels) = test_rows(bundle, features)?;
    let scores = bundle.model.predict_score(z.view())?;
    let predicted = labels_from_scores(&scores, bundle.model.family(), DEFAULT_THRESHOLD);
    let roc = roc_curve(&scores, &labels)?;
    let boot = bootstrap_metrics(&scores, &predicted, &labels, resamples, seed, exec)?;
    let importance =
        feature_importance(&bundle.model, &bundle.feature_names, z.view(), &labels, permutations, seed, exec)?;
    let report = EvaluationReport {
        scenario: bundle.config.scenario,
        smote: bundle.config.smote,
        model: bundle.model.spec.clone(),
        n_test: labels.len(),
        point: PointMetrics { auc: boot.auc.point, accuracy: boot.accuracy.point },
        auc_ci: boot.auc,
        accuracy_ci: boot.accuracy,
        cv_table: bundle.cv_table.clone(),
        importance,
        seeds: Seeds {
            split: bundle.split.seed,
            cv: bundle.cv_table.seed,
            model: bundle.model.spec.seed,
            bootstrap: seed,
            importance: seed,
        },
        skipped_resamples: boot.skipped,
    };
    Ok(Evaluation { report, roc, test_scores: scores })
}
