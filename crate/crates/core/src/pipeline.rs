//! Config-driven experiment runner: load → balanced splits → SLR → AALR →
//! classical baselines → kernel alignment → QSVC grid search → test scores,
//! with a JSON report and CSV sidecars written to the output directory.
//!
//! Every stochastic stage draws from the global `seed`: the split shuffle,
//! the SPSA perturbations and any random θ initialisation each use their own
//! stream derived from it. Seed fields inside the `[qka]` tables are
//! overwritten. Synthetic data keeps the seed of its blob spec, since it
//! identifies the dataset rather than the run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aalr::{AalrError, AalrScaler, Interval, DEFAULT_EPSILON};
use crate::datagen::{self, BlobSpec, DataError, Dataset};
use crate::fingerprint;
use crate::ksvm::{self, Gamma, GridSearch, SvmConfig, SvmError};
use crate::linalg::Matrix;
use crate::metrics::{self, ClassificationReport, MetricsError};
use crate::parallel::Parallelism;
use crate::persist::{ModelDump, QsvcModel};
use crate::qka::{self, AlignOptions, LossKind, QkaError, SpsaConfig, ThetaInit};
use crate::qkernel::{KernelMatrix, QkernelError, QuantumKernel};
use crate::qsim::{AnsatzConfig, Entanglement, FeatureMapConfig, StateOrdering, MAX_QUBITS};
use crate::slr::{SlrError, SlrModel};

const SPLIT_STREAM: u64 = 0;
const SPSA_STREAM: u64 = 0x5350_5341;
const INIT_STREAM: u64 = 0x494e_4954;

pub const FAILED_MARKER: &str = "FAILED";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// Header row with a `label` column; every other column is a feature.
    Csv { path: PathBuf },
    Blobs(BlobSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    /// Upper bound; classes with fewer leftover samples contribute what they have.
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes { train: 10, val: 3, test: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AalrSection {
    pub interval: Interval,
    pub epsilon: f64,
}

impl Default for AalrSection {
    fn default() -> Self {
        AalrSection { interval: Interval::default(), epsilon: DEFAULT_EPSILON }
    }
}

/// Representation the quantum stage encodes, one qubit per coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LatentTier {
    Pca,
    #[default]
    Lda,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QkaSection {
    pub tier: LatentTier,
    pub feature_map_reps: usize,
    pub ansatz_reps: usize,
    pub entanglement: Entanglement,
    pub ordering: StateOrdering,
    pub loss: LossKind,
    /// Box constraint inside the SVC alignment loss.
    pub c_reg: f64,
    pub init: ThetaInit,
    pub spsa: SpsaConfig,
}

impl Default for QkaSection {
    fn default() -> Self {
        QkaSection {
            tier: LatentTier::Lda,
            feature_map_reps: 1,
            ansatz_reps: 1,
            entanglement: Entanglement::Full,
            ordering: StateOrdering::AnsatzFirst,
            loss: LossKind::Svc,
            c_reg: 1.0,
            init: ThetaInit::Zeros,
            spsa: SpsaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineSection {
    pub enabled: bool,
    pub c_reg: f64,
    pub gamma: Gamma,
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection { enabled: true, c_reg: 1.0, gamma: Gamma::Scale }
    }
}

/// Last stage a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StageThrough {
    Slr,
    Aalr,
    Qka,
    #[default]
    Full,
}

impl std::str::FromStr for StageThrough {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "slr" => Ok(StageThrough::Slr),
            "aalr" => Ok(StageThrough::Aalr),
            "qka" => Ok(StageThrough::Qka),
            "full" => Ok(StageThrough::Full),
            other => Err(format!("unknown stage {other:?}; expected slr, aalr, qka or full")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSource,
    pub splits: SplitSizes,
    pub d_pca: usize,
    pub d_out: usize,
    pub aalr: AalrSection,
    pub qka: QkaSection,
    pub c_grid: Vec<f64>,
    pub baselines: BaselineSection,
    pub stage_through: StageThrough,
    pub output_dir: PathBuf,
    pub parallelism: Parallelism,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            data: DataSource::Blobs(BlobSpec {
                n_classes: 12,
                dim: 1280,
                samples_per_class: 43,
                ..BlobSpec::default()
            }),
            splits: SplitSizes::default(),
            d_pca: 64,
            d_out: 11,
            aalr: AalrSection::default(),
            qka: QkaSection::default(),
            c_grid: vec![0.1, 1.0, 10.0],
            baselines: BaselineSection::default(),
            stage_through: StageThrough::Full,
            output_dir: PathBuf::from("qlatent-out"),
            parallelism: Parallelism::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Config,
    Data,
    Numerical,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Numerical => 4,
            ErrorCategory::Io => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[error("{stage} stage failed ({category:?}): {message}")]
pub struct PipelineError {
    pub stage: String,
    pub category: ErrorCategory,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: &str, category: ErrorCategory, message: impl Into<String>) -> Self {
        PipelineError { stage: stage.into(), category, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        self.category.exit_code()
    }
}

trait Categorize {
    fn category(&self) -> ErrorCategory;
}

impl Categorize for DataError {
    fn category(&self) -> ErrorCategory {
        match self {
            DataError::Spec(_) => ErrorCategory::Config,
            _ => ErrorCategory::Data,
        }
    }
}

impl Categorize for SlrError {
    fn category(&self) -> ErrorCategory {
        match self {
            SlrError::PcaDimension { .. } | SlrError::LdaDimension { .. } => ErrorCategory::Config,
            SlrError::Linalg(_) => ErrorCategory::Numerical,
            _ => ErrorCategory::Data,
        }
    }
}

impl Categorize for AalrError {
    fn category(&self) -> ErrorCategory {
        match self {
            AalrError::Interval { .. } | AalrError::Epsilon(_) => ErrorCategory::Config,
            _ => ErrorCategory::Data,
        }
    }
}

impl Categorize for SvmError {
    fn category(&self) -> ErrorCategory {
        match self {
            SvmError::InvalidC(_) | SvmError::InvalidTol(_) | SvmError::EmptyGrid => ErrorCategory::Config,
            _ => ErrorCategory::Data,
        }
    }
}

impl Categorize for QkernelError {
    fn category(&self) -> ErrorCategory {
        match self {
            QkernelError::Io(_) => ErrorCategory::Io,
            _ => ErrorCategory::Numerical,
        }
    }
}

impl Categorize for QkaError {
    fn category(&self) -> ErrorCategory {
        match self {
            QkaError::Config(_) => ErrorCategory::Config,
            QkaError::Svm(e) => e.category(),
            QkaError::Io(_) => ErrorCategory::Io,
            _ => ErrorCategory::Numerical,
        }
    }
}

impl Categorize for MetricsError {
    fn category(&self) -> ErrorCategory {
        ErrorCategory::Data
    }
}

impl Categorize for std::io::Error {
    fn category(&self) -> ErrorCategory {
        ErrorCategory::Io
    }
}

trait StageContext<T> {
    fn stage(self, stage: &str) -> Result<T, PipelineError>;
}

impl<T, E: Categorize + std::fmt::Display> StageContext<T> for Result<T, E> {
    fn stage(self, stage: &str) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError::new(stage, e.category(), e.to_string()))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, PipelineError> {
        toml::from_str(s).map_err(|e| PipelineError::new("config", ErrorCategory::Config, e.to_string()))
    }

    /// Parses a TOML file. A relative CSV path is taken relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        Self::load_with_overrides(path, &[])
    }

    /// Like [`load`](Self::load), then applies `dotted.key=value` overrides
    /// before deserialising. Values are parsed as TOML and fall back to a
    /// bare string, so `qka.spsa.maxiter=5` and `data.path=x.csv` both work.
    pub fn load_with_overrides(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let cfg_err = |m: String| PipelineError::new("config", ErrorCategory::Config, m);
        let text = fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| cfg_err(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o).map_err(cfg_err)?;
        }
        let mut cfg: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| cfg_err(e.to_string()))?;
        if let DataSource::Csv { path: csv } = &mut cfg.data {
            if csv.is_relative() {
                if let Some(dir) = path.parent() {
                    *csv = dir.join(&*csv);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is serialisable")
    }

    /// Width of the quantum register: the dimension of the encoded tier.
    pub fn n_qubits(&self) -> usize {
        match self.qka.tier {
            LatentTier::Pca => self.d_pca,
            LatentTier::Lda => self.d_out,
        }
    }

    pub fn quantum_kernel(&self) -> QuantumKernel {
        let n = self.n_qubits();
        QuantumKernel {
            feature_map: FeatureMapConfig::new(n, self.qka.feature_map_reps, self.qka.entanglement),
            ansatz: AnsatzConfig::new(n, self.qka.ansatz_reps, self.qka.entanglement),
            ordering: self.qka.ordering,
            parallelism: self.parallelism,
        }
    }

    fn align_options(&self) -> AlignOptions {
        let init = match self.qka.init {
            ThetaInit::Zeros => ThetaInit::Zeros,
            ThetaInit::Uniform { half_width, .. } => ThetaInit::Uniform { half_width, seed: self.seed ^ INIT_STREAM },
        };
        AlignOptions {
            spsa: SpsaConfig { seed: self.seed ^ SPSA_STREAM, ..self.qka.spsa.clone() },
            loss: self.qka.loss,
            c_reg: self.qka.c_reg,
            init,
        }
    }

    /// Checks everything that does not depend on the loaded data.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: String| Err(PipelineError::new("config", ErrorCategory::Config, m));
        if let DataSource::Blobs(spec) = &self.data {
            spec.validate().stage("config")?;
            if self.d_out + 1 > spec.n_classes {
                return fail(format!("d_out = {} needs at least {} classes", self.d_out, self.d_out + 1));
            }
        }
        if self.d_pca == 0 || self.d_out == 0 {
            return fail("d_pca and d_out must be positive".into());
        }
        if self.d_out > self.d_pca {
            return fail(format!("d_out = {} exceeds d_pca = {}", self.d_out, self.d_pca));
        }
        if self.splits.train == 0 {
            return fail("train split must be non-empty".into());
        }
        let Interval { low, high } = self.aalr.interval;
        if !(low.is_finite() && high.is_finite() && low < high) {
            return fail(format!("AALR interval [{low}, {high}] is empty"));
        }
        if !(self.aalr.epsilon > 0.0) {
            return fail("AALR epsilon must be positive".into());
        }
        if self.stage_through >= StageThrough::Qka {
            let n = self.n_qubits();
            if n > MAX_QUBITS {
                return fail(format!("{n} qubits exceeds the simulator limit of {MAX_QUBITS}"));
            }
            let k = self.quantum_kernel();
            k.feature_map.validate().map_err(|e| PipelineError::new("config", ErrorCategory::Config, e.to_string()))?;
            k.ansatz.validate().map_err(|e| PipelineError::new("config", ErrorCategory::Config, e.to_string()))?;
            self.qka.spsa.validate().stage("config")?;
            if !(self.qka.c_reg > 0.0 && self.qka.c_reg.is_finite()) {
                return fail("qka.c_reg must be positive".into());
            }
            if let ThetaInit::Uniform { half_width, .. } = self.qka.init {
                if !(half_width >= 0.0 && half_width.is_finite()) {
                    return fail("uniform init half_width must be non-negative".into());
                }
            }
        }
        if self.stage_through == StageThrough::Full {
            if self.c_grid.is_empty() || self.c_grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
                return fail("c_grid must be a non-empty list of positive values".into());
            }
            if self.splits.val == 0 {
                return fail("grid search needs a non-empty validation split".into());
            }
        }
        if self.baselines.enabled && !(self.baselines.c_reg > 0.0 && self.baselines.c_reg.is_finite()) {
            return fail("baselines.c_reg must be positive".into());
        }
        Ok(())
    }
}

/// Sets `key.path = value` inside `table`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), String> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| format!("override {spec:?} is not key=value"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("bad override key {key:?}"));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = parts.split_last().expect("non-empty key");
    let mut node = table;
    for p in parents {
        let entry = node.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| format!("{p:?} in {key:?} is not a table"))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load: Option<f64>,
    pub split: Option<f64>,
    pub slr: Option<f64>,
    pub aalr: Option<f64>,
    pub baselines: Option<f64>,
    pub qka: Option<f64>,
    pub qsvc: Option<f64>,
    pub metrics: Option<f64>,
    pub total: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub class_names: Vec<String>,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TierSilhouette {
    pub raw: Option<f64>,
    pub pca: Option<f64>,
    pub lda: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteReport {
    pub train: TierSilhouette,
    pub test: TierSilhouette,
}

/// Fitted-model fingerprints straight after fitting and after every split
/// has been transformed; equal values show the transforms left them alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LeakageAudit {
    pub slr_after_fit: Option<String>,
    pub slr_after_transform: Option<String>,
    pub scaler_after_fit: Option<String>,
    pub scaler_after_transform: Option<String>,
    pub clean: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub tier: LatentTier,
    pub kernel: String,
    pub c: f64,
    pub converged: bool,
    pub val: Option<ClassificationReport>,
    pub test: Option<ClassificationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QkaSummary {
    pub tier: LatentTier,
    pub n_qubits: usize,
    pub n_params: usize,
    pub loss: LossKind,
    pub iterations: usize,
    pub accepted: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub kernel_builds: usize,
    pub unconverged_svc: usize,
    pub initial_theta: Vec<f64>,
    pub theta: Vec<f64>,
    pub theta_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QsvcResult {
    pub train_kernel_shape: (usize, usize),
    pub grid: GridSearch,
    pub chosen_c: f64,
    pub converged: bool,
    pub val: Option<ClassificationReport>,
    pub test: Option<ClassificationReport>,
}

/// Output file names, relative to the run directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub report: Option<String>,
    pub model: Option<String>,
    pub projection_pca_train: Option<String>,
    pub projection_pca_test: Option<String>,
    pub projection_lda_train: Option<String>,
    pub projection_lda_test: Option<String>,
    pub spsa_trace_jsonl: Option<String>,
    pub spsa_trace_csv: Option<String>,
    pub kernel_train: Option<String>,
    pub kernel_val: Option<String>,
    pub kernel_test: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// Keys never disappear: a stage that did not run leaves `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub status: RunStatus,
    pub failure: Option<PipelineError>,
    pub stage_through: StageThrough,
    pub config: ExperimentConfig,
    pub data: Option<DataSummary>,
    pub leakage: LeakageAudit,
    pub silhouette: SilhouetteReport,
    pub baselines: Option<Vec<BaselineResult>>,
    pub qka: Option<QkaSummary>,
    pub qsvc: Option<QsvcResult>,
    pub artifacts: Artifacts,
    pub timings: Timings,
}

impl RunReport {
    fn new(config: &ExperimentConfig) -> Self {
        RunReport {
            status: RunStatus::Ok,
            failure: None,
            stage_through: config.stage_through,
            config: config.clone(),
            data: None,
            leakage: LeakageAudit::default(),
            silhouette: SilhouetteReport::default(),
            baselines: None,
            qka: None,
            qsvc: None,
            artifacts: Artifacts::default(),
            timings: Timings::default(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serialisable")
    }

    /// The report with timings cleared, for run-to-run comparison.
    pub fn without_timings(&self) -> RunReport {
        RunReport { timings: Timings::default(), ..self.clone() }
    }
}

#[derive(Debug, Error)]
#[error("projection needs at least 2 latent columns, got {0}")]
pub struct ProjectionError(pub usize);

/// `x,y,label` CSV of the first two latent coordinates.
pub fn emit_projection(latents: &Matrix, labels: &[usize]) -> Result<String, ProjectionError> {
    if latents.cols() < 2 {
        return Err(ProjectionError(latents.cols()));
    }
    let mut out = String::from("x,y,label\n");
    for (row, label) in latents.row_iter().zip(labels) {
        writeln!(out, "{},{},{}", row[0], row[1], label).expect("writing to a String");
    }
    Ok(out)
}

fn hex(v: u64) -> String {
    format!("{v:016x}")
}

fn seconds(t: Instant) -> Option<f64> {
    Some(t.elapsed().as_secs_f64())
}

fn silhouette_or_none(x: &Matrix, labels: &[usize], par: Parallelism) -> Option<f64> {
    metrics::silhouette_with(x, labels, par).ok()
}

fn report_or_none(truth: &[usize], pred: &[usize], n_classes: usize) -> Result<Option<ClassificationReport>, PipelineError> {
    if truth.is_empty() {
        return Ok(None);
    }
    metrics::classification_report(truth, pred, n_classes).map(Some).stage("metrics")
}

struct Outputs<'a> {
    dir: &'a Path,
    artifacts: &'a mut Artifacts,
}

impl Outputs<'_> {
    fn write(&mut self, name: &str, contents: &str) -> Result<String, PipelineError> {
        fs::write(self.dir.join(name), contents).stage("output")?;
        Ok(name.to_string())
    }
}

/// Runs the configured pipeline, writing artifacts under `config.output_dir`.
/// On failure the partial report is still written, with status `failed`,
/// next to an empty `FAILED` marker file.
pub fn run(config: &ExperimentConfig) -> Result<RunReport, PipelineError> {
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir).stage("output")?;
    let marker = dir.join(FAILED_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).stage("output")?;
    }
    let mut report = RunReport::new(config);
    let total = Instant::now();
    let outcome = execute(config, &mut report);
    report.timings.total = seconds(total);
    report.artifacts.report = Some(REPORT_FILE.into());
    if let Err(e) = &outcome {
        report.status = RunStatus::Failed;
        report.failure = Some(e.clone());
        fs::write(&marker, b"").stage("output")?;
    }
    fs::write(dir.join(REPORT_FILE), report.to_json()).stage("output")?;
    outcome.map(|_| report)
}

fn execute(config: &ExperimentConfig, report: &mut RunReport) -> Result<(), PipelineError> {
    config.validate()?;
    let par = config.parallelism;
    let mut out = Outputs { dir: &config.output_dir, artifacts: &mut report.artifacts };

    let t = Instant::now();
    let data = match &config.data {
        DataSource::Csv { path } => datagen::load_csv(path).stage("load")?,
        DataSource::Blobs(spec) => datagen::make_blobs(spec),
    };
    report.timings.load = seconds(t);
    let n_classes = data.n_classes();
    if config.d_out + 1 > n_classes {
        return Err(PipelineError::new(
            "load",
            ErrorCategory::Config,
            format!("d_out = {} needs at least {} classes, data has {n_classes}", config.d_out, config.d_out + 1),
        ));
    }

    let t = Instant::now();
    let seed = config.seed ^ SPLIT_STREAM;
    let s = config.splits;
    let mut splits = datagen::balanced_splits(&data, &[s.train, s.val, s.test], seed).into_iter();
    let (train, _) = splits.next().expect("three splits");
    let (val, _) = splits.next().expect("three splits");
    let (test, _) = splits.next().expect("three splits");
    report.timings.split = seconds(t);
    report.data = Some(DataSummary {
        n_samples: data.len(),
        n_features: data.dim(),
        n_classes,
        class_names: data.class_names.clone(),
        train: train.len(),
        val: val.len(),
        test: test.len(),
    });

    // Supervised restructuring, fitted on train only.
    let t = Instant::now();
    let slr = SlrModel::fit(&train, config.d_pca, config.d_out).stage("slr")?;
    let slr_fit = slr.fingerprint();
    let pca = |d: &Dataset| slr.transform_pca(&d.features).stage("slr");
    let lda = |d: &Dataset| slr.transform(&d.features).stage("slr");
    let (pca_train, pca_val, pca_test) = (pca(&train)?, pca(&val)?, pca(&test)?);
    let (lda_train, lda_val, lda_test) = (lda(&train)?, lda(&val)?, lda(&test)?);
    report.timings.slr = seconds(t);
    report.leakage.slr_after_fit = Some(hex(slr_fit));
    report.leakage.slr_after_transform = Some(hex(slr.fingerprint()));
    report.leakage.clean = Some(slr_fit == slr.fingerprint());

    let t = Instant::now();
    report.silhouette.train = TierSilhouette {
        raw: silhouette_or_none(&train.features, &train.labels, par),
        pca: silhouette_or_none(&pca_train, &train.labels, par),
        lda: silhouette_or_none(&lda_train, &train.labels, par),
    };
    report.silhouette.test = TierSilhouette {
        raw: silhouette_or_none(&test.features, &test.labels, par),
        pca: silhouette_or_none(&pca_test, &test.labels, par),
        lda: silhouette_or_none(&lda_test, &test.labels, par),
    };
    report.timings.metrics = seconds(t);

    let projections = [
        (&pca_train, &train.labels, "projection_pca_train.csv"),
        (&pca_test, &test.labels, "projection_pca_test.csv"),
        (&lda_train, &train.labels, "projection_lda_train.csv"),
        (&lda_test, &test.labels, "projection_lda_test.csv"),
    ];
    let mut names = Vec::new();
    for (latents, labels, name) in projections {
        names.push(match emit_projection(latents, labels) {
            Ok(csv) => Some(out.write(name, &csv)?),
            Err(_) => None,
        });
    }
    let mut names = names.into_iter();
    out.artifacts.projection_pca_train = names.next().flatten();
    out.artifacts.projection_pca_test = names.next().flatten();
    out.artifacts.projection_lda_train = names.next().flatten();
    out.artifacts.projection_lda_test = names.next().flatten();

    if config.stage_through == StageThrough::Slr {
        out.artifacts.model = Some(out.write("model.json", &ModelDump::new(slr, None, None).to_json())?);
        return Ok(());
    }

    // Angle-aware rescaling of the quantum tier, fitted on train only.
    let t = Instant::now();
    let (tier_train, tier_val, tier_test) = match config.qka.tier {
        LatentTier::Pca => (&pca_train, &pca_val, &pca_test),
        LatentTier::Lda => (&lda_train, &lda_val, &lda_test),
    };
    let scaler = AalrScaler::fit_with(tier_train, config.aalr.interval, config.aalr.epsilon).stage("aalr")?;
    let scaler_fit = scaler.fingerprint();
    let q_train = scaler.transform(tier_train).stage("aalr")?;
    let q_val = scaler.transform(tier_val).stage("aalr")?;
    let q_test = scaler.transform(tier_test).stage("aalr")?;
    report.timings.aalr = seconds(t);
    report.leakage.scaler_after_fit = Some(hex(scaler_fit));
    report.leakage.scaler_after_transform = Some(hex(scaler.fingerprint()));
    report.leakage.clean = Some(report.leakage.clean == Some(true) && scaler_fit == scaler.fingerprint());

    if config.baselines.enabled {
        let t = Instant::now();
        let mut results = Vec::new();
        let tiers = [
            (LatentTier::Pca, &pca_train, &pca_val, &pca_test),
            (LatentTier::Lda, &lda_train, &lda_val, &lda_test),
        ];
        for (tier, xtr, xva, xte) in tiers {
            let c = config.baselines.c_reg;
            let kernels = [
                ("linear", SvmConfig::linear(c)),
                ("rbf", SvmConfig::rbf(c, config.baselines.gamma)),
            ];
            for (name, cfg) in kernels {
                let cfg = SvmConfig { parallelism: par, ..cfg };
                let model = ksvm::fit_multiclass(xtr, &train.labels, n_classes, &cfg).stage("baselines")?;
                let pv = model.predict(xva).stage("baselines")?;
                let pt = model.predict(xte).stage("baselines")?;
                results.push(BaselineResult {
                    tier,
                    kernel: name.into(),
                    c,
                    converged: model.converged(),
                    val: report_or_none(&val.labels, &pv, n_classes)?,
                    test: report_or_none(&test.labels, &pt, n_classes)?,
                });
            }
        }
        report.baselines = Some(results);
        report.timings.baselines = seconds(t);
    }

    if config.stage_through == StageThrough::Aalr {
        out.artifacts.model = Some(out.write("model.json", &ModelDump::new(slr, Some(scaler), None).to_json())?);
        return Ok(());
    }

    // Kernel alignment on the training latents.
    let t = Instant::now();
    let kernel = config.quantum_kernel();
    let opts = config.align_options();
    let alignment = match qka::align(&q_train, &train.labels, n_classes, &kernel, &opts) {
        Ok(a) => a,
        Err(QkaError::NonFinite { iteration, value, state }) => {
            let mut jsonl = Vec::new();
            let _ = state.write_trace(&opts.init.draw(kernel.param_count()), &mut jsonl);
            out.artifacts.spsa_trace_jsonl = Some(out.write("spsa_trace.jsonl", &String::from_utf8_lossy(&jsonl))?);
            return Err(PipelineError::new(
                "qka",
                ErrorCategory::Numerical,
                format!("objective returned {value} at iteration {iteration}"),
            ));
        }
        Err(e) => return Err(e).stage("qka"),
    };
    let theta = alignment.state.theta.clone();
    let mut jsonl = Vec::new();
    alignment.state.write_trace(&alignment.initial_theta, &mut jsonl).stage("qka")?;
    out.artifacts.spsa_trace_jsonl = Some(out.write("spsa_trace.jsonl", &String::from_utf8_lossy(&jsonl))?);
    let mut csv = String::from("iteration,loss,accepted,current_loss\n");
    for r in &alignment.state.trace {
        let current = r.current_loss.map(|v| v.to_string()).unwrap_or_default();
        writeln!(csv, "{},{},{},{}", r.iteration, r.loss, r.accepted, current).expect("writing to a String");
    }
    out.artifacts.spsa_trace_csv = Some(out.write("spsa_trace.csv", &csv)?);
    report.qka = Some(QkaSummary {
        tier: config.qka.tier,
        n_qubits: kernel.n_qubits(),
        n_params: kernel.param_count(),
        loss: opts.loss,
        iterations: alignment.state.trace.len(),
        accepted: alignment.state.accepted_count(),
        initial_loss: alignment.state.initial_loss,
        final_loss: alignment.final_loss,
        kernel_builds: alignment.kernel_builds,
        unconverged_svc: alignment.unconverged_svc,
        initial_theta: alignment.initial_theta.clone(),
        theta: theta.clone(),
        theta_fingerprint: hex(fingerprint::of_f64s(&theta)),
    });
    report.timings.qka = seconds(t);

    if config.stage_through == StageThrough::Qka {
        out.artifacts.model = Some(out.write("model.json", &ModelDump::new(slr, Some(scaler), None).to_json())?);
        return Ok(());
    }

    // QSVC on the aligned kernel, C chosen by validation macro-F1.
    let t = Instant::now();
    let k_train = kernel.train_kernel(&q_train, &theta).stage("qsvc")?;
    let k_val = kernel.eval_kernel(&q_val, &q_train, &theta).stage("qsvc")?;
    let k_test = kernel.eval_kernel(&q_test, &q_train, &theta).stage("qsvc")?;
    let mut save_kernel = |km: &KernelMatrix, name: &str| -> Result<Option<String>, PipelineError> {
        let mut buf = Vec::new();
        km.write_csv(&mut buf).stage("output")?;
        Ok(Some(out.write(name, &String::from_utf8_lossy(&buf))?))
    };
    let kernel_train = save_kernel(&k_train, "kernel_train.csv")?;
    let kernel_val = save_kernel(&k_val, "kernel_val.csv")?;
    let kernel_test = save_kernel(&k_test, "kernel_test.csv")?;
    out.artifacts.kernel_train = kernel_train;
    out.artifacts.kernel_val = kernel_val;
    out.artifacts.kernel_test = kernel_test;
    let base = SvmConfig { parallelism: par, ..SvmConfig::precomputed(1.0) };
    let grid = ksvm::grid_search_c(
        &k_train.values,
        &train.labels,
        &k_val.values,
        &val.labels,
        n_classes,
        &config.c_grid,
        &base,
    )
    .stage("qsvc")?;
    let chosen = SvmConfig { c_reg: grid.best_c, ..base };
    let svm = ksvm::fit_multiclass(&k_train.values, &train.labels, n_classes, &chosen).stage("qsvc")?;
    let pv = svm.predict(&k_val.values).stage("qsvc")?;
    let pt = svm.predict(&k_test.values).stage("qsvc")?;
    report.qsvc = Some(QsvcResult {
        train_kernel_shape: k_train.values.shape(),
        chosen_c: grid.best_c,
        converged: svm.converged(),
        grid,
        val: report_or_none(&val.labels, &pv, n_classes)?,
        test: report_or_none(&test.labels, &pt, n_classes)?,
    });
    report.timings.qsvc = seconds(t);

    let dump = ModelDump::new(slr, Some(scaler), Some(QsvcModel { kernel, theta, train_latents: q_train, svm }));
    out.artifacts.model = Some(out.write("model.json", &dump.to_json())?);
    Ok(())
}
