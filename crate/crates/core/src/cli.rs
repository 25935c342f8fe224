//! Command-line front end: one subcommand per workflow stage, connected by
//! files.
//!
//! Exit status is 0 on success, 1 on usage errors and 2 on data or contract
//! errors. Every successful run writes its data files through temporary files
//! renamed into place, followed by a `RunManifest` JSON next to the primary
//! output.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::cohort::{read_cohort_csv, screen_outliers, select_two_visit_subset, write_cohort_csv, OutlierPolicy};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate_bundle, importance_with, roc_csv, test_rows, EvaluationReport, ImportanceMethod,
    PipelineConfig, Scenario, TrainingBundle, DEFAULT_FOLDS, DEFAULT_PERMUTATIONS, DEFAULT_RESAMPLES,
};
use crate::exec::Execution;
use crate::features::{build_feature_matrix, funnel_csv, FeatureMatrix};
use crate::learners::{Family, Hyperparams};
use crate::stats::{associate, ClinicalFlag, Factor};
use crate::synth::{generate, SynthParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser, Serialize)]
#[command(name = "gaitroc", version, about = "Gait rate-of-change features and complication models")]
pub struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Primary output path (a directory for `report`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Only log errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
pub enum Command {
    /// Validate a visit CSV, screen outliers and keep two-visit patients.
    Ingest(IngestArgs),
    /// Build the rate-of-change feature matrix.
    Features(FeaturesArgs),
    /// Chi-squared association between a factor and a clinical outcome.
    Assoc(AssocArgs),
    /// Split, grid-search and fit a model; writes a training bundle.
    Train(TrainArgs),
    /// Score the held-out rows of a training bundle with bootstrap CIs.
    Evaluate(EvaluateArgs),
    /// Feature importance of a trained bundle on its held-out rows.
    Importance(ImportanceArgs),
    /// Generate a synthetic cohort and its ground-truth side file.
    Synth(SynthArgs),
    /// Write funnel, ROC-curve and importance CSVs for plotting.
    Report(ReportArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Features(_) => "features",
            Command::Assoc(_) => "assoc",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Importance(_) => "importance",
            Command::Synth(_) => "synth",
            Command::Report(_) => "report",
        }
    }

    fn default_out(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "cohort.clean.csv",
            Command::Features(_) => "features.csv",
            Command::Assoc(_) => "assoc.json",
            Command::Train(_) => "model.json",
            Command::Evaluate(_) => "evaluation.json",
            Command::Importance(_) => "importance.csv",
            Command::Synth(_) => "cohort.csv",
            Command::Report(_) => "plots",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyArg {
    None,
    Iqr,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long, value_enum, default_value_t = PolicyArg::Iqr)]
    pub outlier_policy: PolicyArg,
    /// Fence multiplier for the IQR policy.
    #[arg(long, default_value_t = 1.5)]
    pub iqr_k: f64,
    /// Keep patients with a single visit.
    #[arg(long)]
    pub keep_single_visit: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub cohort: PathBuf,
}

fn parse_factor(s: &str) -> std::result::Result<Factor, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_flag(s: &str) -> std::result::Result<ClinicalFlag, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args, Serialize)]
pub struct AssocArgs {
    #[arg(long)]
    pub cohort: PathBuf,
    /// complication, readmission, underlying_condition, fracture_type or age_group.
    #[arg(long, value_parser = parse_factor)]
    pub factor: Factor,
    /// complication, readmission or underlying_condition.
    #[arg(long, value_parser = parse_flag)]
    pub outcome: ClinicalFlag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioArg {
    Stratified,
    BalancedHoldout,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// logistic, svm_poly, tree, forest, gbt_levelwise or gbt_leafwise.
    #[arg(long, value_parser = parse_family)]
    pub family: Family,
    #[arg(long, value_enum, default_value_t = ScenarioArg::Stratified)]
    pub scenario: ScenarioArg,
    #[arg(long, default_value_t = 0.25)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 12)]
    pub per_class: usize,
    /// Oversample the minority class of every training part with SMOTE.
    #[arg(long)]
    pub smote: bool,
    /// JSON array of hyperparameter points; defaults to the family's grid.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    pub folds: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Training bundle written by `train`.
    #[arg(long, default_value = "model.json")]
    pub model: PathBuf,
    /// Feature matrix the bundle was trained on.
    #[arg(long, default_value = "features.csv")]
    pub features: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    pub permutations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Coefficient,
    Permutation,
    Gain,
}

impl From<MethodArg> for ImportanceMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Coefficient => ImportanceMethod::Coefficient,
            MethodArg::Permutation => ImportanceMethod::Permutation,
            MethodArg::Gain => ImportanceMethod::Gain,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ImportanceArgs {
    #[arg(long, default_value = "model.json")]
    pub model: PathBuf,
    #[arg(long, default_value = "features.csv")]
    pub features: PathBuf,
    /// Defaults to the family's natural method.
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    pub permutations: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub patients: usize,
    #[arg(long, default_value_t = 0.3)]
    pub complication_rate: f64,
    /// Funnel decay constant in weeks.
    #[arg(long, default_value_t = 8.0)]
    pub tau: f64,
    /// Disable the funnel decay (infinite tau).
    #[arg(long)]
    pub no_decay: bool,
    #[arg(long, default_value_t = 0.02)]
    pub noise_floor: f64,
    #[arg(long, default_value_t = 1.0)]
    pub signal_strength: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long, default_value = "features.csv")]
    pub features: PathBuf,
    #[arg(long, default_value = "evaluation.json")]
    pub evaluation: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub argv: Vec<String>,
    pub flags: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub tool_version: String,
    /// Seconds since the Unix epoch at start.
    pub started_at: u64,
    pub duration_seconds: f64,
}

/// Data files of one run, committed together.
#[derive(Default)]
struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
    inputs: Vec<PathBuf>,
}

impl Outputs {
    fn add(&mut self, path: PathBuf, content: impl Into<Vec<u8>>) {
        self.files.push((path, content.into()));
    }

    fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// Writes every file to a temporary sibling, then renames them all.
    fn commit(&self) -> Result<()> {
        let mut staged = Vec::with_capacity(self.files.len());
        for (path, content) in &self.files {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
                _ => PathBuf::from("."),
            };
            let io = |source| Error::Io { path: path.clone(), source };
            fs::create_dir_all(&dir).map_err(io)?;
            let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
            tmp.write_all(content).map_err(io)?;
            tmp.flush().map_err(io)?;
            staged.push((tmp, path));
        }
        for (tmp, path) in staged {
            tmp.persist(path).map_err(|e| Error::Io { path: path.clone(), source: e.error })?;
        }
        Ok(())
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn manifest_path(command: &Command, out: &Path) -> PathBuf {
    match command {
        Command::Report(_) => out.join("manifest.json"),
        _ => with_suffix(out, ".manifest.json"),
    }
}

fn read_text(path: &Path, producer: &str) -> Result<String> {
    fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact { path: path.to_path_buf(), producer: producer.to_string() }
        } else {
            Error::Io { path: path.to_path_buf(), source }
        }
    })
}

fn read_features(path: &Path) -> Result<FeatureMatrix> {
    FeatureMatrix::from_csv(&read_text(path, "gaitroc features")?)
}

fn read_bundle(path: &Path) -> Result<TrainingBundle> {
    Ok(serde_json::from_str(&read_text(path, "gaitroc train")?)?)
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn execute(cli: &Cli, out: &Path, outputs: &mut Outputs) -> Result<()> {
    let exec = Execution::default();
    match &cli.command {
        Command::Ingest(a) => {
            outputs.input(&a.cohort);
            if !a.cohort.exists() {
                return Err(Error::MissingArtifact { path: a.cohort.clone(), producer: "gaitroc synth".into() });
            }
            let cohort = read_cohort_csv(&a.cohort)?;
            let policy = match a.outlier_policy {
                PolicyArg::None => OutlierPolicy::None,
                PolicyArg::Iqr => OutlierPolicy::Iqr { k: a.iqr_k },
            };
            let (screened, report) = screen_outliers(&cohort, policy)?;
            let kept = if a.keep_single_visit { screened } else { select_two_visit_subset(&screened)? };
            log::info!("ingest: {} of {} patients kept", kept.len(), cohort.len());
            outputs.add(out.to_path_buf(), write_cohort_csv(&kept));
            outputs.add(with_suffix(out, ".outliers.json"), json(&report)?);
        }
        Command::Features(a) => {
            outputs.input(&a.cohort);
            if !a.cohort.exists() {
                return Err(Error::MissingArtifact { path: a.cohort.clone(), producer: "gaitroc ingest".into() });
            }
            let cohort = read_cohort_csv(&a.cohort)?;
            let fm = build_feature_matrix(&cohort)?;
            outputs.add(out.to_path_buf(), fm.to_csv());
        }
        Command::Assoc(a) => {
            outputs.input(&a.cohort);
            if !a.cohort.exists() {
                return Err(Error::MissingArtifact { path: a.cohort.clone(), producer: "gaitroc ingest".into() });
            }
            let cohort = read_cohort_csv(&a.cohort)?;
            outputs.add(out.to_path_buf(), json(&associate(&cohort, a.factor, a.outcome)?)?);
        }
        Command::Train(a) => {
            outputs.input(&a.features);
            let fm = read_features(&a.features)?;
            let scenario = match a.scenario {
                ScenarioArg::Stratified => Scenario::Stratified { test_fraction: a.test_fraction },
                ScenarioArg::BalancedHoldout => Scenario::BalancedHoldout { per_class: a.per_class },
            };
            let grid = match &a.grid {
                Some(p) => {
                    outputs.input(p);
                    let g: Vec<Hyperparams> = serde_json::from_str(&read_text(p, "a hand-written grid file")?)?;
                    Some(g)
                }
                None => None,
            };
            let config = PipelineConfig {
                family: a.family,
                scenario,
                smote: a.smote,
                folds: a.folds,
                grid,
                seed: cli.seed,
            };
            let bundle = crate::evaluation::fit_pipeline(&fm, &config, exec)?;
            log::info!(
                "train: winner {:?} with mean CV AUC {:.4}",
                bundle.model.spec.params,
                bundle.cv_table.rows[bundle.cv_table.winner].mean_auc
            );
            outputs.add(out.to_path_buf(), json(&bundle)?);
        }
        Command::Evaluate(a) => {
            outputs.input(&a.model);
            outputs.input(&a.features);
            let bundle = read_bundle(&a.model)?;
            let fm = read_features(&a.features)?;
            let ev = evaluate_bundle(&bundle, &fm, a.bootstrap, a.permutations, cli.seed, exec)?;
            log::info!(
                "evaluate: AUC {:.4} [{:.4}, {:.4}]",
                ev.report.point.auc,
                ev.report.auc_ci.ci_low,
                ev.report.auc_ci.ci_high
            );
            outputs.add(out.to_path_buf(), json(&ev.report)?);
            outputs.add(with_suffix(out, ".roc.csv"), roc_csv(&ev.roc));
        }
        Command::Importance(a) => {
            outputs.input(&a.model);
            outputs.input(&a.features);
            let bundle = read_bundle(&a.model)?;
            let fm = read_features(&a.features)?;
            let (z, labels) = test_rows(&bundle, &fm)?;
            let method = a
                .method
                .map(ImportanceMethod::from)
                .unwrap_or_else(|| ImportanceMethod::for_family(bundle.model.family()));
            let report = importance_with(
                method,
                &bundle.model,
                &bundle.feature_names,
                z.view(),
                &labels,
                a.permutations,
                cli.seed,
                exec,
            )?;
            outputs.add(out.to_path_buf(), report.to_csv());
        }
        Command::Synth(a) => {
            let params = SynthParams {
                n_patients: a.patients,
                complication_rate: a.complication_rate,
                funnel_decay_tau: if a.no_decay { None } else { Some(a.tau) },
                noise_floor: a.noise_floor,
                signal_strength: a.signal_strength,
                seed: cli.seed,
                ..SynthParams::default()
            };
            let synth = generate(&params)?;
            outputs.add(out.to_path_buf(), write_cohort_csv(&synth.cohort));
            outputs.add(with_suffix(out, ".truth.json"), json(&synth.truth)?);
        }
        Command::Report(a) => {
            outputs.input(&a.features);
            outputs.input(&a.evaluation);
            let fm = read_features(&a.features)?;
            let report: EvaluationReport =
                serde_json::from_str(&read_text(&a.evaluation, "gaitroc evaluate")?)?;
            let roc_path = with_suffix(&a.evaluation, ".roc.csv");
            outputs.input(&roc_path);
            let roc = read_text(&roc_path, "gaitroc evaluate")?;
            outputs.add(out.join("funnel.csv"), funnel_csv(&fm));
            outputs.add(out.join("roc_curve.csv"), roc);
            outputs.add(out.join("importance.csv"), report.importance.to_csv());
        }
    }
    Ok(())
}

fn init_logging(quiet: bool) {
    let level = if quiet { log::LevelFilter::Error } else { log::LevelFilter::Info };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Runs the tool and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(cli.quiet);
    let started = Instant::now();
    let started_at = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(cli.command.default_out()));

    let mut outputs = Outputs::default();
    let result = execute(&cli, &out, &mut outputs).and_then(|()| {
        outputs.commit()?;
        let manifest = RunManifest {
            subcommand: cli.command.name().to_string(),
            argv: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
            flags: serde_json::to_value(&cli)?,
            seed: cli.seed,
            inputs: outputs.inputs.clone(),
            outputs: outputs.files.iter().map(|(p, _)| p.clone()).collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at,
            duration_seconds: started.elapsed().as_secs_f64(),
        };
        let mut m = Outputs::default();
        m.add(manifest_path(&cli.command, &out), json(&manifest)?);
        m.commit()
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}
