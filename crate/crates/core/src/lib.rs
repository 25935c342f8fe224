//! Rate-of-change gait features and a small, fully seeded tabular ML pipeline
//! for predicting post-fracture complications from two gait analyses.
//!
//! The crate is organised along the workflow:
//!
//! - [`cohort`]: visit CSV ingestion, outlier screening, two-visit subset
//! - [`features`]: per-patient rate-of-change feature vectors
//! - [`stats`]: contingency tables and Pearson chi-squared tests
//! - [`resampling`]: standardization, SMOTE, stratified splits and folds
//! - [`learners`]: logistic regression, polynomial SVM, trees, forests, boosted trees
//! - [`evaluation`]: AUC, ROC curves, bootstrap CIs, grid search, importance
//! - [`synth`]: seeded synthetic cohorts with planted structure
//! - [`cli`]: the `gaitroc` command-line tool
//!
//! All randomness flows from explicit `u64` seeds through [`exec::Rng`].

pub mod cli;
pub mod cohort;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod features;
pub mod learners;
pub mod resampling;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use exec::Execution;
