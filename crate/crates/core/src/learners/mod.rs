//! Binary classifiers with a shared train/score contract.
//!
//! | family          | model                                              | score            |
//! |-----------------|----------------------------------------------------|------------------|
//! | `logistic`      | L2-penalized logistic regression                   | probability      |
//! | `svm_poly`      | soft-margin SVM, kernel `(γ u·v + coef0)^degree`   | decision value   |
//! | `tree`          | Gini decision tree                                 | leaf positive rate |
//! | `forest`        | bagged Gini trees with per-split feature sampling  | mean leaf rate   |
//! | `gbt_levelwise` | second-order boosted trees grown tier by tier      | probability      |
//! | `gbt_leafwise`  | same, always splitting the best leaf first         | probability      |
//!
//! Trained models serialize to versioned JSON and score bit-identically after
//! a round trip.

pub mod logistic;
pub mod svm;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{derive_seed, rng};
use crate::features::N_FEATURES;
use tree::{grow, Gini, GrowParams, Growth, SecondOrder, Tree};

pub use logistic::sigmoid;
pub use svm::PolyKernel;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Logistic,
    SvmPoly,
    Tree,
    Forest,
    GbtLevelwise,
    GbtLeafwise,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Logistic,
        Family::SvmPoly,
        Family::Tree,
        Family::Forest,
        Family::GbtLevelwise,
        Family::GbtLeafwise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Logistic => "logistic",
            Family::SvmPoly => "svm_poly",
            Family::Tree => "tree",
            Family::Forest => "forest",
            Family::GbtLevelwise => "gbt_levelwise",
            Family::GbtLeafwise => "gbt_leafwise",
        }
    }

    /// Whether scores are probabilities (as opposed to SVM decision values).
    pub fn scores_probabilities(self) -> bool {
        self != Family::SvmPoly
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown model family `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Hyperparams {
    Logistic {
        lambda: f64,
    },
    SvmPoly {
        degree: u32,
        c: f64,
        gamma: f64,
        coef0: f64,
    },
    Tree {
        max_depth: usize,
        min_samples_split: usize,
    },
    Forest {
        trees: usize,
        max_depth: usize,
        min_samples_split: usize,
        bootstrap: bool,
        /// Features drawn per split; `None` means `ceil(sqrt(p))`.
        max_features: Option<usize>,
    },
    GbtLevelwise {
        trees: usize,
        max_depth: usize,
        learning_rate: f64,
        lambda: f64,
        gamma: f64,
    },
    GbtLeafwise {
        trees: usize,
        max_depth: usize,
        learning_rate: f64,
        lambda: f64,
        gamma: f64,
        max_leaves: usize,
    },
}

impl Hyperparams {
    pub fn family(&self) -> Family {
        match self {
            Hyperparams::Logistic { .. } => Family::Logistic,
            Hyperparams::SvmPoly { .. } => Family::SvmPoly,
            Hyperparams::Tree { .. } => Family::Tree,
            Hyperparams::Forest { .. } => Family::Forest,
            Hyperparams::GbtLevelwise { .. } => Family::GbtLevelwise,
            Hyperparams::GbtLeafwise { .. } => Family::GbtLeafwise,
        }
    }

    /// Defaults: the tuned configurations reported for each family where
    /// known, conventional values elsewhere.
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::Logistic => Hyperparams::Logistic { lambda: 0.1 },
            Family::SvmPoly => Hyperparams::SvmPoly {
                degree: 3,
                c: 1.0,
                gamma: 1.0 / N_FEATURES as f64,
                coef0: 1.0,
            },
            Family::Tree => Hyperparams::Tree { max_depth: 2, min_samples_split: 2 },
            Family::Forest => Hyperparams::Forest {
                trees: 3,
                max_depth: 2,
                min_samples_split: 2,
                bootstrap: true,
                max_features: None,
            },
            Family::GbtLevelwise => Hyperparams::GbtLevelwise {
                trees: 5,
                max_depth: 2,
                learning_rate: 0.3,
                lambda: 1.0,
                gamma: 0.0,
            },
            Family::GbtLeafwise => Hyperparams::GbtLeafwise {
                trees: 3,
                max_depth: 2,
                learning_rate: 0.3,
                lambda: 1.0,
                gamma: 0.0,
                max_leaves: 3,
            },
        }
    }

    /// Parsimony key used to break grid-search ties: smaller sorts first.
    /// Order: tree count, depth, then the penalty / margin parameter, then the
    /// remaining parameters.
    pub fn complexity_key(&self) -> Vec<f64> {
        match *self {
            Hyperparams::Logistic { lambda } => vec![0.0, 0.0, lambda],
            Hyperparams::SvmPoly { degree, c, gamma, coef0 } => vec![0.0, degree as f64, c, gamma, coef0],
            Hyperparams::Tree { max_depth, min_samples_split } => {
                vec![1.0, max_depth as f64, 0.0, min_samples_split as f64]
            }
            Hyperparams::Forest { trees, max_depth, min_samples_split, bootstrap, max_features } => vec![
                trees as f64,
                max_depth as f64,
                0.0,
                min_samples_split as f64,
                bootstrap as u8 as f64,
                max_features.map_or(-1.0, |m| m as f64),
            ],
            Hyperparams::GbtLevelwise { trees, max_depth, learning_rate, lambda, gamma } => {
                vec![trees as f64, max_depth as f64, lambda, learning_rate, gamma]
            }
            Hyperparams::GbtLeafwise { trees, max_depth, learning_rate, lambda, gamma, max_leaves } => vec![
                trees as f64,
                max_depth as f64,
                lambda,
                learning_rate,
                gamma,
                max_leaves as f64,
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Parameter(what.to_string()));
        match *self {
            Hyperparams::Logistic { lambda } if !(lambda >= 0.0 && lambda.is_finite()) => {
                bad("logistic lambda must be finite and non-negative")
            }
            Hyperparams::SvmPoly { c, .. } if !(c > 0.0 && c.is_finite()) => bad("SVM C must be positive"),
            Hyperparams::SvmPoly { degree: 0, .. } => bad("SVM degree must be at least 1"),
            Hyperparams::SvmPoly { gamma, .. } if !(gamma > 0.0) => bad("SVM gamma must be positive"),
            Hyperparams::Forest { trees: 0, .. } => bad("forest needs at least one tree"),
            Hyperparams::Forest { max_features: Some(0), .. } => bad("max_features must be positive"),
            Hyperparams::GbtLevelwise { learning_rate, .. } | Hyperparams::GbtLeafwise { learning_rate, .. }
                if !(learning_rate > 0.0 && learning_rate.is_finite()) =>
            {
                bad("learning rate must be positive")
            }
            Hyperparams::GbtLevelwise { lambda, gamma, .. } | Hyperparams::GbtLeafwise { lambda, gamma, .. }
                if !(lambda >= 0.0 && gamma >= 0.0) =>
            {
                bad("boosting lambda and gamma must be non-negative")
            }
            Hyperparams::GbtLevelwise { trees: 0, .. } | Hyperparams::GbtLeafwise { trees: 0, .. } => {
                bad("boosting needs at least one round")
            }
            Hyperparams::GbtLeafwise { max_leaves: 0, .. } => bad("max_leaves must be positive"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub params: Hyperparams,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(params: Hyperparams, seed: u64) -> Self {
        Self { params, seed }
    }

    pub fn default_for(family: Family, seed: u64) -> Self {
        Self::new(Hyperparams::default_for(family), seed)
    }

    pub fn family(&self) -> Family {
        self.params.family()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Parameters {
    Linear {
        weights: Vec<f64>,
        bias: f64,
    },
    Kernel {
        kernel: PolyKernel,
        support_vectors: Vec<Vec<f64>>,
        /// `α_i · y_i` per support vector.
        coefficients: Vec<f64>,
        rho: f64,
    },
    /// Mean of the trees' leaf values.
    Averaged { trees: Vec<Tree> },
    /// `sigmoid(base_score + learning_rate · Σ leaf)`.
    Boosted {
        base_score: f64,
        learning_rate: f64,
        trees: Vec<Tree>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub iterations: usize,
    pub converged: bool,
    /// Final training objective: penalized mean log loss (logistic), dual
    /// objective (SVM), mean log loss (boosting), Brier score of the
    /// training rows (trees and forests).
    pub objective: f64,
    pub kkt_violation: Option<f64>,
    pub n_train: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub n_features: usize,
    pub parameters: Parameters,
    pub metadata: TrainingMetadata,
}

fn check_inputs(x: ArrayView2<f64>, y: &[bool], need_both: bool) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch { left: x.nrows(), right: y.len() });
    }
    if x.nrows() == 0 {
        return Err(Error::InsufficientData("no training rows".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training matrix".into()));
    }
    if need_both {
        let pos = y.iter().filter(|&&l| l).count();
        if pos == 0 || pos == y.len() {
            return Err(Error::SingleClass);
        }
    }
    Ok(())
}

/// Trains the model described by `spec`.
pub fn train(x: ArrayView2<f64>, y: &[bool], spec: &ModelSpec) -> Result<TrainedModel> {
    spec.params.validate()?;
    match spec.params {
        Hyperparams::Logistic { .. } => train_logistic(x, y, spec),
        Hyperparams::SvmPoly { .. } => train_svm(x, y, spec),
        Hyperparams::Tree { .. } => train_tree(x, y, spec),
        Hyperparams::Forest { .. } => train_random_forest(x, y, spec),
        Hyperparams::GbtLevelwise { .. } | Hyperparams::GbtLeafwise { .. } => train_gbt(x, y, spec),
    }
}

fn wrong_family(spec: &ModelSpec, want: &str) -> Error {
    Error::Parameter(format!("expected {want} hyperparameters, got {}", spec.family()))
}

pub fn train_logistic(x: ArrayView2<f64>, y: &[bool], spec: &ModelSpec) -> Result<TrainedModel> {
    let Hyperparams::Logistic { lambda } = spec.params else {
        return Err(wrong_family(spec, "logistic"));
    };
    spec.params.validate()?;
    check_inputs(x, y, true)?;
    let fit = logistic::fit(x, y, lambda);
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        n_features: x.ncols(),
        parameters: Parameters::Linear { weights: fit.weights, bias: fit.bias },
        metadata: TrainingMetadata {
            iterations: fit.iterations,
            converged: fit.converged,
            objective: fit.objective,
            kkt_violation: None,
            n_train: x.nrows(),
        },
    })
}

pub fn train_svm(x: ArrayView2<f64>, y: &[bool], spec: &ModelSpec) -> Result<TrainedModel> {
    let Hyperparams::SvmPoly { degree, c, gamma, coef0 } = spec.params else {
        return Err(wrong_family(spec, "svm_poly"));
    };
    spec.params.validate()?;
    check_inputs(x, y, true)?;
    let kernel = PolyKernel { degree, gamma, coef0 };
    let gram = kernel.gram(x);
    let signs: Vec<f64> = y.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let max_iter = svm::PASS_LIMIT * x.nrows().max(1);
    let sol = svm::solve_dual(&gram, &signs, c, svm::DEFAULT_TOL, max_iter);

    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(x.row(i).to_vec());
            coefficients.push(a * signs[i]);
        }
    }
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        n_features: x.ncols(),
        parameters: Parameters::Kernel { kernel, support_vectors, coefficients, rho: sol.rho },
        metadata: TrainingMetadata {
            iterations: sol.iterations,
            converged: sol.converged,
            objective: sol.objective,
            kkt_violation: Some(sol.kkt_violation),
            n_train: x.nrows(),
        },
    })
}

fn training_brier(trees: &[Tree], x: ArrayView2<f64>, y: &[bool]) -> f64 {
    let n = x.nrows() as f64;
    x.rows()
        .into_iter()
        .zip(y)
        .map(|(row, &l)| {
            let r = row.to_vec();
            let s = trees.iter().map(|t| t.predict_row(&r)).sum::<f64>() / trees.len() as f64;
            (s - l as u8 as f64).powi(2)
        })
        .sum::<f64>()
        / n
}

pub fn train_tree(x: ArrayView2<f64>, y: &[bool], spec: &ModelSpec) -> Result<TrainedModel> {
    let Hyperparams::Tree { max_depth, min_samples_split } = spec.params else {
        return Err(wrong_family(spec, "tree"));
    };
    check_inputs(x, y, false)?;
    let params = GrowParams {
        max_depth,
        min_samples_split,
        max_leaves: None,
        growth: Growth::LevelWise,
        max_features: None,
    };
    let tree = grow(x, (0..x.nrows()).collect(), &Gini { labels: y }, &params, None);
    let trees = vec![tree];
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        n_features: x.ncols(),
        metadata: TrainingMetadata {
            iterations: 1,
            converged: true,
            objective: training_brier(&trees, x, y),
            kkt_violation: None,
            n_train: x.nrows(),
        },
        parameters: Parameters::Averaged { trees },
    })
}

pub fn train_random_forest(x: ArrayView2<f64>, y: &[bool], spec: &ModelSpec) -> Result<TrainedModel> {
    let Hyperparams::Forest { trees, max_depth, min_samples_split, bootstrap, max_features } = spec.params
    else {
        return Err(wrong_family(spec, "forest"));
    };
    spec.params.validate()?;
    check_inputs(x, y, false)?;
    let n = x.nrows();
    let p = x.ncols();
    let per_split = max_features.unwrap_or_else(|| (p as f64).sqrt().ceil() as usize).min(p);
    let params = GrowParams {
        max_depth,
        min_samples_split,
        max_leaves: None,
        growth: Growth::LevelWise,
        max_features: Some(per_split),
    };
    let crit = Gini { labels: y };
    let mut ensemble = Vec::with_capacity(trees);
    for t in 0..trees {
        let mut r = rng(derive_seed(spec.seed, t));
        let rows: Vec<usize> = if bootstrap {
            use rand::Rng as _;
            let mut rows: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
            rows.sort_unstable();
            rows
        } else {
            (0..n).collect()
        };
        ensemble.push(grow(x, rows, &crit, &params, Some(&mut r)));
    }
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        n_features: p,
        metadata: TrainingMetadata {
            iterations: trees,
            converged: true,
            objective: training_brier(&ensemble, x, y),
            kkt_violation: None,
            n_train: n,
        },
        parameters: Parameters::Averaged { trees: ensemble },
    })
}

/// Gradients and hessians of the logistic loss at the given margins.
pub fn logistic_grad_hess(margins: &[f64], y: &[bool]) -> (Vec<f64>, Vec<f64>) {
    margins
        .iter()
        .zip(y)
        .map(|(&m, &l)| {
            let p = sigmoid(m);
            (p - l as u8 as f64, p * (1.0 - p))
        })
        .unzip()
}

pub fn train_gbt(x: ArrayView2<f64>, y: &[bool], spec: &ModelSpec) -> Result<TrainedModel> {
    let (trees, max_depth, learning_rate, lambda, gamma, growth, max_leaves) = match spec.params {
        Hyperparams::GbtLevelwise { trees, max_depth, learning_rate, lambda, gamma } => {
            (trees, max_depth, learning_rate, lambda, gamma, Growth::LevelWise, None)
        }
        Hyperparams::GbtLeafwise { trees, max_depth, learning_rate, lambda, gamma, max_leaves } => {
            (trees, max_depth, learning_rate, lambda, gamma, Growth::LeafWise, Some(max_leaves))
        }
        _ => return Err(wrong_family(spec, "boosted-tree")),
    };
    spec.params.validate()?;
    check_inputs(x, y, true)?;
    let n = x.nrows();
    let mean = y.iter().filter(|&&l| l).count() as f64 / n as f64;
    let base_score = (mean / (1.0 - mean)).ln();
    let params = GrowParams { max_depth, min_samples_split: 2, max_leaves, growth, max_features: None };
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();

    let mut margins = vec![base_score; n];
    let mut ensemble = Vec::with_capacity(trees);
    for _ in 0..trees {
        let (grad, hess) = logistic_grad_hess(&margins, y);
        let crit = SecondOrder { grad: &grad, hess: &hess, lambda, gamma };
        let tree = grow(x, (0..n).collect(), &crit, &params, None);
        for (m, row) in margins.iter_mut().zip(&rows) {
            *m += learning_rate * tree.predict_row(row);
        }
        ensemble.push(tree);
    }
    let objective = margins
        .iter()
        .zip(y)
        .map(|(&m, &l)| {
            let p = sigmoid(m).clamp(1e-15, 1.0 - 1e-15);
            if l {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / n as f64;
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        n_features: x.ncols(),
        parameters: Parameters::Boosted { base_score, learning_rate, trees: ensemble },
        metadata: TrainingMetadata {
            iterations: trees,
            converged: true,
            objective,
            kkt_violation: None,
            n_train: n,
        },
    })
}

impl TrainedModel {
    pub fn family(&self) -> Family {
        self.spec.family()
    }

    pub fn trees(&self) -> &[Tree] {
        match &self.parameters {
            Parameters::Averaged { trees } | Parameters::Boosted { trees, .. } => trees,
            _ => &[],
        }
    }

    fn score_row(&self, row: &[f64]) -> f64 {
        match &self.parameters {
            Parameters::Linear { weights, bias } => {
                sigmoid(bias + row.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>())
            }
            Parameters::Kernel { kernel, support_vectors, coefficients, rho } => {
                support_vectors
                    .iter()
                    .zip(coefficients)
                    .map(|(sv, c)| c * kernel.eval(sv, row))
                    .sum::<f64>()
                    - rho
            }
            Parameters::Averaged { trees } => {
                trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / trees.len() as f64
            }
            Parameters::Boosted { base_score, learning_rate, trees } => {
                let leaves: f64 = trees.iter().map(|t| t.predict_row(row)).sum();
                sigmoid(base_score + learning_rate * leaves)
            }
        }
    }

    /// Ranking score per row: a probability, or the SVM decision value.
    pub fn predict_score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, found: x.ncols() });
        }
        Ok(x.rows().into_iter().map(|r| self.score_row(&r.to_vec())).collect())
    }

    /// Probability families use `score >= threshold`; the SVM uses the sign
    /// of its decision value and ignores `threshold`.
    pub fn predict_label(&self, x: ArrayView2<f64>, threshold: f64) -> Result<Vec<bool>> {
        let scores = self.predict_score(x)?;
        Ok(labels_from_scores(&scores, self.family(), threshold))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TrainedModel = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Parameter(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }
}

pub fn labels_from_scores(scores: &[f64], family: Family, threshold: f64) -> Vec<bool> {
    let cut = if family.scores_probabilities() { threshold } else { 0.0 };
    scores.iter().map(|&s| s >= cut).collect()
}
