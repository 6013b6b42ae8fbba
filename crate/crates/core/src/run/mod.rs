//! Declarative runs: config files, resumable execution with append-only
//! artifacts, and reports over finished run directories.
//!
//! A run directory holds `manifest.json` (atomically rewritten),
//! `transcripts.jsonl`, `parsed.jsonl`, `predictions.jsonl` and, once
//! complete, `scores.json`. Every JSONL record carries the run id and the
//! config digest.

mod exec;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use exec::{
    plan_prompts, resume, resume_with, run_eval, run_eval_with, PlannedPrompt, RunOptions,
    RunOutcome,
};
pub use report::{
    annotate, load_run, report, rescore, LoadedRun, ReportMode, ReportOptions, ReportOutput,
};

use crate::analysis::AnalysisError;
use crate::backend::Transcript;
use crate::backend::{BackendConfig, BackendError};
use crate::catalog::{Answer, CatalogError, DatasetFormat};
use crate::parse::ParsedResponse;
use crate::prompt::{DecodingOverrides, PromptError, StrategyId};
use crate::scoring::{ParseFailureMode, Prediction, ScoreReport, ScoringError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("instance {instance_id}: {source}")]
    Instance {
        instance_id: String,
        #[source]
        source: Box<RunError>,
    },
    #[error("no manifest in {0}")]
    ManifestMissing(PathBuf),
    #[error("{what} changed since the run started (was {expected}, now {found})")]
    DigestMismatch {
        what: String,
        expected: String,
        found: String,
    },
    #[error("{0} is locked by another process")]
    Locked(PathBuf),
    #[error("run in {0} is not complete")]
    IncompleteRun(PathBuf),
    #[error("coverage gap: {0}")]
    CoverageGap(String),
    #[error("annotation rejected: {0}")]
    Annotation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = RunError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> RunError {
    let path = path.into();
    move |source| RunError::Io { path, source }
}

pub(crate) fn json_err(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> RunError {
    let path = path.into();
    move |source| RunError::Json { path, source }
}

fn default_eval_n() -> usize {
    600
}

fn default_split() -> String {
    "validation".into()
}

fn default_format() -> DatasetFormat {
    DatasetFormat::Jsonl
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: DatasetFormat,
    #[serde(default = "default_split")]
    pub split: String,
}

/// Everything that defines one evaluation run.
///
/// `output_dir` and `cache_dir` say where results go, not what they are, so
/// they stay out of the manifest and the config digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub task_id: String,
    pub strategy: StrategyId,
    /// Demonstrations per prompt; defaults to 0 or 5 by strategy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
    #[serde(default = "default_eval_n")]
    pub eval_n: usize,
    #[serde(default)]
    pub seed: u64,
    /// Seed for exemplar selection; defaults to `seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplar_seed: Option<u64>,
    #[serde(default)]
    pub parse_failure_mode: ParseFailureMode,
    #[serde(default)]
    pub overrides: DecodingOverrides,
    pub backend: BackendConfig,
    pub dataset: DataSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<DataSource>,
    /// JSONL of `{instance_id, worked_answer}` for few-shot demonstrations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplar_answers: Option<PathBuf>,
    /// Task spec file; the built-in catalog entry when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_file: Option<PathBuf>,
    /// Directory of template overrides laid out as `<task>/<strategy>.txt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
    /// Pin timestamps and latencies for byte-reproducible artifacts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen_clock: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing)]
    pub cache_dir: Option<PathBuf>,
}

fn absolutize(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        let joined = base.join(&*p);
        *p = std::path::absolute(&joined).unwrap_or(joined);
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    /// Load a config file; relative paths are taken relative to it.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut config = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        absolutize(base, &mut self.dataset.path);
        if let Some(t) = &mut self.train {
            absolutize(base, &mut t.path);
        }
        for p in [
            &mut self.exemplar_answers,
            &mut self.task_file,
            &mut self.templates_dir,
            &mut self.output_dir,
            &mut self.cache_dir,
            &mut self.backend.fixtures,
        ]
        .into_iter()
        .flatten()
        {
            absolutize(base, p);
        }
    }

    pub fn effective_shots(&self) -> usize {
        self.shots.unwrap_or(self.strategy.default_shots())
    }

    pub fn exemplar_seed(&self) -> u64 {
        self.exemplar_seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.run_id.trim().is_empty() {
            return bad("run_id is empty".into());
        }
        if self.eval_n == 0 {
            return bad("eval_n must be at least 1".into());
        }
        let shots = self.effective_shots();
        if self.strategy.is_few_shot() {
            if shots == 0 {
                return bad(format!(
                    "{} is a few-shot strategy and needs shots >= 1",
                    self.strategy
                ));
            }
            if self.train.is_none() || self.exemplar_answers.is_none() {
                return bad(format!(
                    "{} needs `train` and `exemplar_answers` for its demonstrations",
                    self.strategy
                ));
            }
        } else if shots != 0 {
            return bad(format!(
                "{} is a zero-shot strategy; shots = {shots} is not allowed",
                self.strategy
            ));
        }
        self.backend.validate()?;
        Ok(())
    }

    /// Digest of the config as frozen into the manifest.
    pub fn digest(&self) -> String {
        crate::digest_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceState {
    Pending,
    Done,
}

/// Digests of every input that shapes the artifacts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigests {
    pub config: String,
    /// Digest of the built-in catalog.
    pub catalog: String,
    pub task_spec: String,
    /// Template digest per strategy name.
    pub templates: BTreeMap<String, String>,
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplar_answers: Option<String>,
}

/// Committed byte length of each append-only artifact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactOffsets {
    pub transcripts: u64,
    pub parsed: u64,
    pub predictions: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunFailure {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: RunConfig,
    pub digests: InputDigests,
    /// The evaluation subset is drawn from `seed` alone, so runs that share
    /// a seed and dataset score the same instances whatever the model.
    pub subset_shared_across_models: bool,
    pub exemplar_ids: Vec<String>,
    pub started_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
    pub status: RunStatus,
    /// Instances in subset order.
    pub progress: IndexMap<String, InstanceState>,
    pub artifacts: ArtifactOffsets,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<RunFailure>,
}

pub const MANIFEST: &str = "manifest.json";
pub const TRANSCRIPTS: &str = "transcripts.jsonl";
pub const PARSED: &str = "parsed.jsonl";
pub const PREDICTIONS: &str = "predictions.jsonl";
pub const SCORES: &str = "scores.json";
pub const ANNOTATIONS: &str = "annotations.jsonl";

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(RunError::ManifestMissing(dir.to_path_buf()))
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        serde_json::from_slice(&bytes).map_err(json_err(&path))
    }

    /// Write to a temporary file and rename over the old manifest.
    pub fn store(&self, dir: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        write_atomic(&dir.join(MANIFEST), &bytes)
    }

    pub fn completed(&self) -> usize {
        self.progress
            .values()
            .filter(|s| **s == InstanceState::Done)
            .count()
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// A persisted record with its run attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record<T> {
    pub run_id: String,
    pub config_digest: String,
    #[serde(flatten)]
    pub body: T,
}

/// Transcripts already name their run, so only the digest is added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub config_digest: String,
    #[serde(flatten)]
    pub body: Transcript,
}

pub type ParsedRecord = Record<ParsedResponse>;
pub type ScoreRecord = Record<ScoreReport>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrediction {
    #[serde(flatten)]
    pub prediction: Prediction,
    pub gold: Answer,
    pub correct: bool,
}

pub type PredictionRecord = Record<ScoredPrediction>;

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(json_err(path)))
        .collect()
}

/// Digest over the artifact files of a run directory, for comparing runs.
pub fn artifact_digest(dir: &Path) -> Result<String> {
    let mut all = Vec::new();
    for name in [MANIFEST, TRANSCRIPTS, PARSED, PREDICTIONS, SCORES] {
        let path = dir.join(name);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&path)(e)),
        };
        all.extend_from_slice(name.as_bytes());
        all.extend_from_slice(crate::digest_hex(&bytes).as_bytes());
    }
    Ok(crate::digest_hex(&all))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
run_id = "r1"
task_id = "wic"
strategy = "MP"
seed = 7

[backend]
kind = "scripted"
model_name = "m"
fixtures = "fx.jsonl"

[dataset]
path = "data/wic.jsonl"
"#;

    #[test]
    fn defaults_and_paths() {
        let mut c = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.eval_n, 600);
        assert_eq!(c.effective_shots(), 0);
        assert_eq!(c.exemplar_seed(), 7);
        assert_eq!(c.parse_failure_mode, ParseFailureMode::CountWrong);
        assert_eq!(c.dataset.split, "validation");
        c.validate().unwrap();
        c.resolve_paths(Path::new("/base"));
        assert_eq!(c.dataset.path, Path::new("/base/data/wic.jsonl"));
        assert_eq!(
            c.backend.fixtures.as_deref(),
            Some(Path::new("/base/fx.jsonl"))
        );
    }

    #[test]
    fn shot_consistency() {
        let mut c = RunConfig::from_toml_str(MINIMAL).unwrap();
        c.shots = Some(3);
        assert!(matches!(c.validate(), Err(RunError::Config(m)) if m.contains("zero-shot")));

        c.shots = None;
        c.strategy = StrategyId::MMp;
        assert!(c.validate().is_err(), "few-shot without exemplars");
        c.train = Some(c.dataset.clone());
        c.exemplar_answers = Some("ex.jsonl".into());
        c.validate().unwrap();
        assert_eq!(c.effective_shots(), 5);
        c.shots = Some(0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn output_location_is_not_part_of_the_digest() {
        let a = RunConfig::from_toml_str(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output_dir = Some("/elsewhere".into());
        b.cache_dir = Some("/cache".into());
        assert_eq!(a.digest(), b.digest());
        let mut c = a.clone();
        c.seed = 8;
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn rejects_unknown_fields() {
        let text = format!("{MINIMAL}\n[extra]\nx = 1\n");
        assert!(RunConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn shipped_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
        for name in ["run.example.toml", "run.few-shot.example.toml"] {
            let c = RunConfig::from_file(dir.join(name)).unwrap();
            c.validate().unwrap();
        }
        crate::backend::BackendConfig::from_file(dir.join("backend.scripted.toml"))
            .unwrap()
            .validate()
            .unwrap();
    }
}
