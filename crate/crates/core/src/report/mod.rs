//! Batch driver behind the `regiostat` binary.
//!
//! Each `cmd_*` function reads its inputs, writes result files into the
//! output directory together with a `manifest.json` (SHA-256 of every input
//! and output, seeds, settings, tool version) and returns that manifest. A
//! failed command writes `error.json` instead and returns the same record.
//! [`cmd_pipeline`] runs every stage in order into numbered subdirectories.

mod stages;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::growth::CobbDouglasMode;

pub use stages::Inputs;

pub const DEFAULT_PERMUTATIONS: usize = 9999;
pub const DEFAULT_BOOTSTRAP: usize = 5000;
pub const DEFAULT_SEED: u64 = 42;
/// Environment variables `REGIOSTAT_SEED`, `REGIOSTAT_PERMUTATIONS`, ...
/// override the matching flags.
pub const ENV_PREFIX: &str = "REGIOSTAT_";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ERROR_FILE: &str = "error.json";
pub const PIPELINE_FILE: &str = "pipeline.json";

/// Indicators feeding the growth stage: `Y = output / per`, `A = technology`,
/// `K = knowledge`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthSpec {
    pub output: String,
    pub per: Option<String>,
    pub technology: String,
    pub knowledge: String,
}

impl Default for GrowthSpec {
    fn default() -> Self {
        Self {
            output: "PIB".into(),
            per: Some("POB".into()),
            technology: "TIC".into(),
            knowledge: "IUPP".into(),
        }
    }
}

fn pairs(list: &[(&str, &str)]) -> Vec<(String, String)> {
    list.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    /// Long-format panel (`.csv`, or `.tsv` for tab-delimited).
    pub panel: Option<PathBuf>,
    /// GeoJSON FeatureCollection; queen contiguity is derived from it.
    pub geometry: Option<PathBuf>,
    /// GAL neighbor file, used when no geometry is given.
    pub gal: Option<PathBuf>,
    /// JSON path model; the built-in regional model when absent.
    pub model: Option<PathBuf>,
    /// Feature property holding the region code.
    pub id_property: String,
    pub seed: u64,
    pub permutations: usize,
    /// Overrides the model file's `bootstrap`; 5000 when neither is set.
    pub bootstrap: Option<usize>,
    /// Significance levels for LISA classes. The largest is also the
    /// normality test level.
    pub alpha: Vec<f64>,
    pub out: PathBuf,
    pub mode: CobbDouglasMode,
    /// Overrides the model file's `omission_distance`; 7 when neither is set.
    pub omission_distance: Option<usize>,
    pub percentile_cut: f64,
    /// Fit the path model on this year's cross-section instead of pooling
    /// every region-year row.
    pub pls_year: Option<i32>,
    /// (predictor, response) pairs regressed per microregion and mapped by
    /// bivariate LISA.
    pub pairs: Vec<(String, String)>,
    /// Pairs regressed over all regions together.
    pub whole_pairs: Vec<(String, String)>,
    pub growth: GrowthSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            panel: None,
            geometry: None,
            gal: None,
            model: None,
            id_property: "code".into(),
            seed: DEFAULT_SEED,
            permutations: DEFAULT_PERMUTATIONS,
            bootstrap: None,
            alpha: crate::autocorr::DEFAULT_THRESHOLDS.to_vec(),
            out: PathBuf::from("regiostat-out"),
            mode: CobbDouglasMode::Canonical,
            omission_distance: None,
            percentile_cut: 75.0,
            pls_year: None,
            pairs: pairs(&[
                ("IUPP", "TIC"),
                ("IUPP", "CBO"),
                ("DCNT", "CBO"),
                ("FUNDEB", "TIC"),
                ("TIC", "PIB"),
                ("CBO", "PIB"),
            ]),
            whole_pairs: pairs(&[("TIC", "POB"), ("CBO", "POB")]),
            growth: GrowthSpec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), CommandError> {
        let bad = |message: String, id: &str| {
            Err(CommandError::input("cli_report", "config", message, vec![id.to_string()]))
        };
        if self.permutations < crate::autocorr::MIN_PERMUTATIONS {
            return bad(format!("permutations must be at least 99, got {}", self.permutations), "permutations");
        }
        if let Some(b) = self.bootstrap {
            if b < crate::pls::bootstrap::MIN_RESAMPLES {
                return bad(format!("bootstrap must be at least 500 resamples, got {b}"), "bootstrap");
            }
        }
        if self.alpha.is_empty() || self.alpha.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return bad("alpha levels must be non-empty and inside (0, 1)".into(), "alpha");
        }
        if !(0.0..=100.0).contains(&self.percentile_cut) {
            return bad(format!("percentile cut {} outside [0, 100]", self.percentile_cut), "percentile_cut");
        }
        Ok(())
    }

    /// Level used for the normality decisions.
    pub fn test_alpha(&self) -> f64 {
        self.alpha.iter().copied().fold(f64::NAN, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Missing, unreadable or unusable input. Exit code 1.
    Input,
    /// Failure writing results. Exit code 2.
    Internal,
}

/// Machine-readable failure record written to `error.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: ErrorKind,
    pub module: String,
    pub operation: String,
    pub message: String,
    /// `key=value` pairs naming the offending file, region, indicator, ...
    pub identifiers: Vec<String>,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}::{}: {}", record.module, record.operation, record.message)]
pub struct CommandError {
    pub record: ErrorRecord,
}

impl CommandError {
    fn new(kind: ErrorKind, module: &str, operation: &str, message: String, identifiers: Vec<String>) -> Self {
        let exit_code = match kind {
            ErrorKind::Input => 1,
            ErrorKind::Internal => 2,
        };
        Self {
            record: ErrorRecord {
                kind,
                module: module.into(),
                operation: operation.into(),
                message,
                identifiers,
                exit_code,
            },
        }
    }

    pub fn input(module: &str, operation: &str, message: String, identifiers: Vec<String>) -> Self {
        Self::new(ErrorKind::Input, module, operation, message, identifiers)
    }

    pub fn internal(module: &str, operation: &str, message: String, identifiers: Vec<String>) -> Self {
        Self::new(ErrorKind::Internal, module, operation, message, identifiers)
    }

    pub fn exit_code(&self) -> i32 {
        self.record.exit_code
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Settings that influence results, as recorded in every manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub permutations: usize,
    pub bootstrap: Option<usize>,
    pub alpha: Vec<f64>,
    pub mode: CobbDouglasMode,
    pub omission_distance: Option<usize>,
    pub percentile_cut: f64,
    pub pls_year: Option<i32>,
    pub id_property: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Derived seeds actually used, by stage and slice.
    pub seeds: BTreeMap<String, u64>,
    pub settings: RunSettings,
    /// Input paths as given.
    pub inputs: Vec<FileDigest>,
    /// Output paths relative to the manifest's directory.
    pub outputs: Vec<FileDigest>,
}

/// Files produced by one command before they are written.
#[derive(Debug, Default)]
pub(crate) struct StageOutput {
    pub files: Vec<(String, Vec<u8>)>,
    pub inputs: Vec<PathBuf>,
    pub seeds: BTreeMap<String, u64>,
}

impl StageOutput {
    fn merge(&mut self, other: StageOutput) {
        self.files.extend(other.files);
        for p in other.inputs {
            if !self.inputs.contains(&p) {
                self.inputs.push(p);
            }
        }
        self.seeds.extend(other.seeds);
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest_file(path: &Path) -> std::io::Result<FileDigest> {
    let bytes = fs::read(path)?;
    Ok(FileDigest {
        path: path.to_string_lossy().into_owned(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> CommandError {
    CommandError::internal(
        "cli_report",
        "write_output",
        e.to_string(),
        vec![format!("path={}", path.display())],
    )
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CommandError> {
    fs::write(path, bytes).map_err(|e| write_err(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, CommandError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CommandError::internal("cli_report", "serialize", e.to_string(), vec![]))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn emit(dir: &Path, command: &str, cfg: &PipelineConfig, output: StageOutput) -> Result<RunManifest, CommandError> {
    fs::create_dir_all(dir).map_err(|e| write_err(dir, e))?;
    let mut outputs = Vec::with_capacity(output.files.len());
    for (name, bytes) in &output.files {
        write_file(&dir.join(name), bytes)?;
        outputs.push(FileDigest {
            path: name.clone(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
    }
    let inputs = output
        .inputs
        .iter()
        .map(|p| {
            digest_file(p).map_err(|e| {
                CommandError::input("cli_report", "read_input", e.to_string(), vec![format!("path={}", p.display())])
            })
        })
        .collect::<Result<_, _>>()?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        seed: cfg.seed,
        seeds: output.seeds,
        settings: RunSettings {
            permutations: cfg.permutations,
            bootstrap: cfg.bootstrap,
            alpha: cfg.alpha.clone(),
            mode: cfg.mode,
            omission_distance: cfg.omission_distance,
            percentile_cut: cfg.percentile_cut,
            pls_year: cfg.pls_year,
            id_property: cfg.id_property.clone(),
        },
        inputs,
        outputs,
    };
    write_file(&dir.join(MANIFEST_FILE), &to_json(&manifest)?)?;
    Ok(manifest)
}

fn record_error(dir: &Path, err: &CommandError) {
    // best effort: the error is returned to the caller either way
    if fs::create_dir_all(dir).is_ok() {
        if let Ok(bytes) = to_json(&err.record) {
            let _ = fs::write(dir.join(ERROR_FILE), bytes);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Describe,
    Standardize,
    Normality,
    Weights,
    Moran,
    Lisa,
    Plssem,
    Regress,
    Growth,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Describe => "describe",
            Command::Standardize => "standardize",
            Command::Normality => "normality",
            Command::Weights => "weights",
            Command::Moran => "moran",
            Command::Lisa => "lisa",
            Command::Plssem => "plssem",
            Command::Regress => "regress",
            Command::Growth => "growth",
        }
    }
}

fn compute(cmd: Command, cfg: &PipelineConfig, inputs: &mut Inputs) -> Result<StageOutput, CommandError> {
    match cmd {
        Command::Describe => stages::describe(cfg, inputs),
        Command::Standardize => stages::standardize(cfg, inputs),
        Command::Normality => stages::normality(cfg, inputs),
        Command::Weights => stages::weights(cfg, inputs),
        Command::Moran => stages::moran(cfg, inputs),
        Command::Lisa => stages::lisa(cfg, inputs),
        Command::Plssem => stages::plssem(cfg, inputs),
        Command::Regress => stages::regress(cfg, inputs),
        Command::Growth => stages::growth(cfg, inputs),
    }
}

/// Run one command into `cfg.out`.
pub fn run_command(cmd: Command, cfg: &PipelineConfig) -> Result<RunManifest, CommandError> {
    let result = cfg
        .validate()
        .and_then(|()| compute(cmd, cfg, &mut Inputs::default()))
        .and_then(|out| emit(&cfg.out, cmd.name(), cfg, out));
    if let Err(e) = &result {
        record_error(&cfg.out, e);
    }
    result
}

/// Descriptive statistics per indicator-year, percentile classes and
/// microregion tables.
pub fn cmd_describe(cfg: &PipelineConfig) -> Result<RunManifest, CommandError> {
    run_command(Command::Describe, cfg)
}

/// z-scores per indicator-year cross-section, written in the input layout.
pub fn cmd_standardize(cfg: &PipelineConfig) -> Result<RunManifest, CommandError> {
    run_command(Command::Standardize, cfg)
}

/// Shapiro-Wilk and Ryan-Joiner per indicator-year.
pub fn cmd_normality(cfg: &PipelineConfig) -> Result<RunManifest, CommandError> {
    run_command(Command::Normality, cfg)
}

/// Contiguity weights, connectivity report and a GAL copy.
pub fn cmd_weights(cfg: &PipelineConfig) -> Result<RunManifest, CommandError> {
    run_command(Command::Weights, cfg)
}

/// Global Moran's I with permutation p-values per indicator-year.
pub fn cmd_moran(cfg: &PipelineConfig) -> Result<RunManifest, CommandError> {
    run_command(Command::Moran, cfg)
}

/// Univariate LISA per indicator (first and last observed year) and
/// bivariate LISA per configured pair.
pub fn cmd_lisa(cfg: &PipelineConfig) -> Result<RunManifest, CommandError> {
    run_command(Command::Lisa, cfg)
}

/// PLS path model on pooled region-year rows with its evaluation battery.
pub fn cmd_plssem(cfg: &PipelineConfig) -> Result<RunManifest, CommandError> {
    run_command(Command::Plssem, cfg)
}

/// Simple OLS per microregion and over all regions.
pub fn cmd_regress(cfg: &PipelineConfig) -> Result<RunManifest, CommandError> {
    run_command(Command::Regress, cfg)
}

/// Cobb-Douglas fit and evaluation.
pub fn cmd_growth(cfg: &PipelineConfig) -> Result<RunManifest, CommandError> {
    run_command(Command::Growth, cfg)
}

pub const PIPELINE_STAGES: [(&str, &[Command]); 8] = [
    ("01_describe", &[Command::Describe]),
    ("02_standardize", &[Command::Standardize]),
    ("03_normality", &[Command::Normality]),
    ("04_weights", &[Command::Weights]),
    ("05_moran", &[Command::Moran, Command::Lisa]),
    ("06_plssem", &[Command::Plssem]),
    ("07_regress", &[Command::Regress]),
    ("08_growth", &[Command::Growth]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
    /// Digest of the stage's manifest.
    pub manifest_sha256: Option<String>,
    pub error: Option<ErrorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub completed: bool,
    pub stages: Vec<StageRecord>,
}

/// All stages in order, each into its own subdirectory of `cfg.out`. The
/// first failing stage stops the run; outputs of earlier stages stay in
/// place and `pipeline.json` records where it stopped.
pub fn cmd_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport, CommandError> {
    let mut report = PipelineReport {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        completed: false,
        stages: PIPELINE_STAGES
            .iter()
            .map(|(stage, _)| StageRecord {
                stage: stage.to_string(),
                status: StageStatus::NotRun,
                manifest_sha256: None,
                error: None,
            })
            .collect(),
    };
    let finish = |report: &PipelineReport| -> Result<(), CommandError> {
        fs::create_dir_all(&cfg.out).map_err(|e| write_err(&cfg.out, e))?;
        write_file(&cfg.out.join(PIPELINE_FILE), &to_json(report)?)
    };
    if let Err(e) = cfg.validate() {
        record_error(&cfg.out, &e);
        return Err(e);
    }
    let mut inputs = Inputs::default();
    for (s, (stage, commands)) in PIPELINE_STAGES.iter().enumerate() {
        let dir = cfg.out.join(stage);
        let result = commands
            .iter()
            .try_fold(StageOutput::default(), |mut acc, &cmd| {
                acc.merge(compute(cmd, cfg, &mut inputs)?);
                Ok(acc)
            })
            .and_then(|out| emit(&dir, stage, cfg, out));
        match result {
            Ok(_) => {
                let bytes = fs::read(dir.join(MANIFEST_FILE)).map_err(|e| write_err(&dir, e))?;
                report.stages[s].status = StageStatus::Ok;
                report.stages[s].manifest_sha256 = Some(sha256_hex(&bytes));
            }
            Err(e) => {
                record_error(&dir, &e);
                report.stages[s].status = StageStatus::Failed;
                report.stages[s].error = Some(e.record.clone());
                finish(&report)?;
                return Err(e);
            }
        }
    }
    report.completed = true;
    finish(&report)?;
    Ok(report)
}

/// Re-hash everything a manifest lists. Returns one message per output or
/// input whose digest no longer matches (empty when the bundle is intact).
pub fn validate_manifest(dir: &Path) -> Result<Vec<String>, CommandError> {
    let path = dir.join(MANIFEST_FILE);
    let read_err = |e: String| CommandError::input("cli_report", "validate_manifest", e, vec![format!("path={}", path.display())]);
    let bytes = fs::read(&path).map_err(|e| read_err(e.to_string()))?;
    let manifest: RunManifest = serde_json::from_slice(&bytes).map_err(|e| read_err(e.to_string()))?;
    let mut problems = Vec::new();
    let mut check = |label: &str, expected: &FileDigest, actual: &Path| match fs::read(actual) {
        Ok(b) if sha256_hex(&b) == expected.sha256 => {}
        Ok(_) => problems.push(format!("{label} {} changed", expected.path)),
        Err(e) => problems.push(format!("{label} {}: {e}", expected.path)),
    };
    for o in &manifest.outputs {
        check("output", o, &dir.join(&o.path));
    }
    for i in &manifest.inputs {
        check("input", i, Path::new(&i.path));
    }
    Ok(problems)
}

/// [`validate_manifest`] over every completed stage of a pipeline bundle,
/// including the stage manifests' own digests.
pub fn validate_bundle(dir: &Path) -> Result<Vec<String>, CommandError> {
    let path = dir.join(PIPELINE_FILE);
    let read_err = |e: String| CommandError::input("cli_report", "validate_bundle", e, vec![format!("path={}", path.display())]);
    let bytes = fs::read(&path).map_err(|e| read_err(e.to_string()))?;
    let report: PipelineReport = serde_json::from_slice(&bytes).map_err(|e| read_err(e.to_string()))?;
    let mut problems = Vec::new();
    for stage in report.stages.iter().filter(|s| s.status == StageStatus::Ok) {
        let stage_dir = dir.join(&stage.stage);
        match fs::read(stage_dir.join(MANIFEST_FILE)) {
            Ok(b) if Some(sha256_hex(&b)) == stage.manifest_sha256 => {}
            Ok(_) => problems.push(format!("{} manifest changed", stage.stage)),
            Err(e) => problems.push(format!("{} manifest: {e}", stage.stage)),
        }
        problems.extend(validate_manifest(&stage_dir)?.into_iter().map(|p| format!("{}: {p}", stage.stage)));
    }
    Ok(problems)
}
