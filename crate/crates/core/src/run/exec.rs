use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{
    io_err, json_err, read_jsonl, write_atomic, ArtifactOffsets, InputDigests, InstanceState,
    PredictionRecord, Record, Result, RunConfig, RunError, RunFailure, RunManifest, RunStatus,
    ScoredPrediction, TranscriptRecord, MANIFEST, PARSED, PREDICTIONS, SCORES, TRANSCRIPTS,
};
use crate::backend::{Clock, Gateway, RequestContext, ResponseCache, Transcript};
use crate::catalog::{
    builtin_catalog, builtin_task, catalog_digest, load_dataset, sample_eval_subset,
    select_exemplars, ExemplarSet, Instance, TaskSpec,
};
use crate::parse::{parse_response, AnswerContract, ParsedResponse};
use crate::prompt::{PromptEngine, TemplateRegistry};
use crate::scoring::{majority_vote, score_run, Prediction, ScoreReport, ScoringError};

/// Knobs that change how a run executes but never what it produces.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop cleanly after this many newly completed instances, leaving the
    /// run resumable. Used for crash drills.
    pub stop_after: Option<usize>,
    /// Response cache location; `<output_dir>/cache` when absent.
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub manifest: RunManifest,
    /// Present once the run is complete.
    pub scores: Option<ScoreReport>,
    /// Instances completed by this invocation.
    pub executed: usize,
    pub backend_calls: u64,
}

/// Execute a fresh run into `config.output_dir`.
pub fn run_eval(config: &RunConfig) -> Result<RunOutcome> {
    run_eval_with(config, &RunOptions::default())
}

pub fn run_eval_with(config: &RunConfig, opts: &RunOptions) -> Result<RunOutcome> {
    config.validate()?;
    let out = config
        .output_dir
        .clone()
        .ok_or_else(|| RunError::Config("output_dir is not set".into()))?;
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    if out.join(MANIFEST).exists() {
        return Err(RunError::Config(format!(
            "{} already holds a run; resume it or pick another output directory",
            out.display()
        )));
    }
    let _lock = DirLock::acquire(&out)?;
    let cache_dir = opts.cache_dir.clone().or_else(|| config.cache_dir.clone());
    let prepared = Prepared::new(config, &out, cache_dir)?;

    let manifest = RunManifest {
        run_id: config.run_id.clone(),
        config: config.clone(),
        digests: prepared.digests.clone(),
        subset_shared_across_models: true,
        exemplar_ids: prepared
            .exemplars
            .as_ref()
            .map(|e| {
                e.exemplars
                    .iter()
                    .map(|x| x.instance.instance_id.clone())
                    .collect()
            })
            .unwrap_or_default(),
        started_at: prepared.clock.timestamp(),
        finished_at: None,
        status: RunStatus::Running,
        progress: prepared
            .subset
            .iter()
            .map(|i| (i.instance_id.clone(), InstanceState::Pending))
            .collect(),
        artifacts: ArtifactOffsets::default(),
        failure: None,
    };
    // The manifest goes first so a crash at any later point is resumable.
    manifest.store(&out)?;
    for name in [TRANSCRIPTS, PARSED, PREDICTIONS] {
        let p = out.join(name);
        File::create(&p).map_err(io_err(&p))?;
    }
    execute(prepared, manifest, &out, opts)
}

/// Finish an interrupted or failed run. A complete run is left untouched.
pub fn resume(output_dir: impl AsRef<Path>) -> Result<RunOutcome> {
    resume_with(output_dir, &RunOptions::default())
}

pub fn resume_with(output_dir: impl AsRef<Path>, opts: &RunOptions) -> Result<RunOutcome> {
    let out = output_dir.as_ref().to_path_buf();
    let manifest = RunManifest::load(&out)?;
    if manifest.status == RunStatus::Complete {
        let scores = read_scores(&out)?;
        return Ok(RunOutcome {
            output_dir: out,
            manifest,
            scores,
            executed: 0,
            backend_calls: 0,
        });
    }
    let _lock = DirLock::acquire(&out)?;
    let mut config = manifest.config.clone();
    config.output_dir = Some(out.clone());
    let prepared = Prepared::new(&config, &out, opts.cache_dir.clone())?;
    check_digests(&manifest.digests, &prepared.digests)?;
    let subset_ids: Vec<&String> = prepared.subset.iter().map(|i| &i.instance_id).collect();
    if !subset_ids.iter().copied().eq(manifest.progress.keys()) {
        return Err(RunError::DigestMismatch {
            what: "evaluation subset".into(),
            expected: format!("{} instances", manifest.progress.len()),
            found: format!("{} instances", subset_ids.len()),
        });
    }

    // Drop anything appended after the last manifest commit.
    let offsets = manifest.artifacts;
    for (name, len) in [
        (TRANSCRIPTS, offsets.transcripts),
        (PARSED, offsets.parsed),
        (PREDICTIONS, offsets.predictions),
    ] {
        let p = out.join(name);
        let f = OpenOptions::new()
            .write(true)
            .create(true)
            .truncate(false)
            .open(&p)
            .map_err(io_err(&p))?;
        f.set_len(len).map_err(io_err(&p))?;
    }
    let mut manifest = manifest;
    manifest.status = RunStatus::Running;
    manifest.failure = None;
    manifest.store(&out)?;
    log::info!(
        "resuming {}: {} of {} instances done",
        manifest.run_id,
        manifest.completed(),
        manifest.progress.len()
    );
    execute(prepared, manifest, &out, opts)
}

fn check_digests(recorded: &InputDigests, current: &InputDigests) -> Result<()> {
    let mismatch = |what: &str, a: &str, b: &str| RunError::DigestMismatch {
        what: what.into(),
        expected: a.into(),
        found: b.into(),
    };
    if recorded.config != current.config {
        return Err(mismatch("run config", &recorded.config, &current.config));
    }
    if recorded.catalog != current.catalog {
        return Err(mismatch(
            "task catalog",
            &recorded.catalog,
            &current.catalog,
        ));
    }
    if recorded.task_spec != current.task_spec {
        return Err(mismatch(
            "task spec",
            &recorded.task_spec,
            &current.task_spec,
        ));
    }
    for (name, digest) in &recorded.templates {
        let now = current
            .templates
            .get(name)
            .map(String::as_str)
            .unwrap_or("missing");
        if now != digest {
            return Err(mismatch(&format!("template {name}"), digest, now));
        }
    }
    if recorded.dataset != current.dataset {
        return Err(mismatch("dataset", &recorded.dataset, &current.dataset));
    }
    let opt = |o: &Option<String>| o.clone().unwrap_or_default();
    if recorded.train != current.train {
        return Err(mismatch(
            "training split",
            &opt(&recorded.train),
            &opt(&current.train),
        ));
    }
    if recorded.exemplar_answers != current.exemplar_answers {
        return Err(mismatch(
            "exemplar answers",
            &opt(&recorded.exemplar_answers),
            &opt(&current.exemplar_answers),
        ));
    }
    Ok(())
}

/// Everything resolved from a config before any instance runs.
struct Prepared {
    config: RunConfig,
    spec: TaskSpec,
    contract: AnswerContract,
    engine: PromptEngine,
    gateway: Gateway,
    clock: Clock,
    subset: Vec<Instance>,
    exemplars: Option<ExemplarSet>,
    digests: InputDigests,
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(crate::digest_hex(&bytes))
}

#[derive(Deserialize)]
struct WorkedAnswer {
    instance_id: String,
    worked_answer: String,
}

/// A rendered prompt for one evaluation instance, before any backend call.
#[derive(Debug, Clone)]
pub struct PlannedPrompt {
    pub instance: Instance,
    pub bundle: crate::prompt::PromptBundle,
}

/// Render every prompt `config` would send, in subset order, without
/// building a backend. Useful for recording scripted fixtures.
pub fn plan_prompts(config: &RunConfig) -> Result<Vec<PlannedPrompt>> {
    let inputs = Inputs::resolve(config)?;
    inputs
        .subset
        .iter()
        .map(|instance| {
            let bundle = inputs.engine.render(
                config.strategy,
                &inputs.spec,
                instance,
                inputs.exemplars.as_ref(),
            )?;
            Ok(PlannedPrompt {
                instance: instance.clone(),
                bundle,
            })
        })
        .collect()
}

/// The backend-independent part of a run.
struct Inputs {
    spec: TaskSpec,
    engine: PromptEngine,
    subset: Vec<Instance>,
    exemplars: Option<ExemplarSet>,
    digests: InputDigests,
}

impl Inputs {
    fn resolve(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let spec = match &config.task_file {
            Some(path) => TaskSpec::from_file(path)?,
            None => builtin_task(&config.task_id)?,
        };
        if spec.task_id != config.task_id {
            return Err(RunError::Config(format!(
                "task file defines `{}`, config asks for `{}`",
                spec.task_id, config.task_id
            )));
        }

        let registry = match &config.templates_dir {
            Some(dir) => TemplateRegistry::with_overrides_from(dir)?,
            None => TemplateRegistry::builtin(),
        };
        let mut engine = PromptEngine::new(registry)
            .with_overrides(config.overrides)
            .with_system_prompt(config.system_prompt.clone());
        if config.strategy.is_few_shot() {
            engine = engine.with_shots(config.effective_shots());
        }
        let template = engine.template(&spec.task_id, config.strategy)?;
        template.check_against(&spec)?;
        let templates = BTreeMap::from([(template.strategy.to_string(), template.digest())]);

        let all = load_dataset(
            &config.dataset.path,
            config.dataset.format,
            &spec,
            &config.dataset.split,
        )
        .map_err(|e| RunError::Config(format!("{}: {e}", config.dataset.path.display())))?;
        let subset = sample_eval_subset(&all, config.eval_n, config.seed)?;

        let (exemplars, train_digest, answers_digest) = if config.strategy.is_few_shot() {
            let train_src = config.train.as_ref().expect("validated");
            let answers_path = config.exemplar_answers.as_ref().expect("validated");
            let train = load_dataset(&train_src.path, train_src.format, &spec, &train_src.split)
                .map_err(|e| RunError::Config(format!("{}: {e}", train_src.path.display())))?;
            let answers: HashMap<String, String> = read_jsonl::<WorkedAnswer>(answers_path)?
                .into_iter()
                .map(|w| (w.instance_id, w.worked_answer))
                .collect();
            let set = select_exemplars(
                &spec.task_id,
                &train,
                config.effective_shots(),
                config.exemplar_seed(),
                &answers,
            )?;
            (
                Some(set),
                Some(file_digest(&train_src.path)?),
                Some(file_digest(answers_path)?),
            )
        } else {
            (None, None, None)
        };

        let digests = InputDigests {
            config: config.digest(),
            task_spec: spec.digest(),
            templates,
            catalog: catalog_digest(&builtin_catalog()),
            dataset: file_digest(&config.dataset.path)?,
            train: train_digest,
            exemplar_answers: answers_digest,
        };
        Ok(Inputs {
            spec,
            engine,
            subset,
            exemplars,
            digests,
        })
    }
}

impl Prepared {
    fn new(config: &RunConfig, out: &Path, cache_dir: Option<PathBuf>) -> Result<Self> {
        let Inputs {
            spec,
            engine,
            subset,
            exemplars,
            digests,
        } = Inputs::resolve(config)?;
        let clock = config.frozen_clock.map(Clock::Frozen).unwrap_or_default();
        let cache_dir = cache_dir.unwrap_or_else(|| out.join("cache"));
        let gateway = Gateway::from_config(config.backend.clone())?
            .with_cache(ResponseCache::new(cache_dir))
            .with_clock(clock.clone());
        Ok(Prepared {
            contract: AnswerContract::for_task(&spec),
            config: config.clone(),
            spec,
            engine,
            gateway,
            clock,
            subset,
            exemplars,
            digests,
        })
    }

    fn run_instance(
        &self,
        instance: &Instance,
    ) -> Result<(Vec<Transcript>, Vec<ParsedResponse>, Prediction)> {
        let bundle = self.engine.render(
            self.config.strategy,
            &self.spec,
            instance,
            self.exemplars.as_ref(),
        )?;
        let ctx = RequestContext {
            run_id: &self.config.run_id,
            task_id: &self.spec.task_id,
            instance_id: &instance.instance_id,
        };
        let transcripts = self.gateway.complete_samples(ctx, &bundle)?;
        let parsed: Vec<ParsedResponse> = transcripts
            .iter()
            .map(|t| {
                parse_response(
                    &t.raw_text,
                    &self.spec,
                    &self.contract,
                    instance,
                    t.sample_index,
                )
            })
            .collect();
        let prediction = if bundle.decoding.sample_count > 1 {
            match majority_vote(&parsed) {
                Ok(p) => p,
                Err(ScoringError::NoParsableSamples(_)) => Prediction {
                    instance_id: instance.instance_id.clone(),
                    labels: None,
                    confidence: None,
                    vote_detail: Some(BTreeMap::new()),
                },
                Err(e) => return Err(e.into()),
            }
        } else {
            Prediction::from_parsed(&parsed[0])
        };
        Ok((transcripts, parsed, prediction))
    }
}

fn jsonl_bytes<T: serde::Serialize>(records: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, &r).expect("record serializes");
        out.push(b'\n');
    }
    out
}

fn append(path: &Path, bytes: &[u8]) -> Result<u64> {
    let mut f = OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))?;
    f.sync_data().map_err(io_err(path))?;
    Ok(f.metadata().map_err(io_err(path))?.len())
}

fn execute(
    prepared: Prepared,
    mut manifest: RunManifest,
    out: &Path,
    opts: &RunOptions,
) -> Result<RunOutcome> {
    let run_id = manifest.run_id.clone();
    let digest = manifest.digests.config.clone();
    fn wrap<T>(run_id: &str, digest: &str, body: T) -> Record<T> {
        Record {
            run_id: run_id.to_string(),
            config_digest: digest.to_string(),
            body,
        }
    }

    let pending: Vec<&Instance> = prepared
        .subset
        .iter()
        .filter(|i| manifest.progress.get(&i.instance_id) != Some(&InstanceState::Done))
        .collect();
    let width = prepared.config.backend.parallelism.max(1);
    let mut executed = 0usize;
    let mut cursor = 0usize;

    while cursor < pending.len() {
        let budget = opts
            .stop_after
            .map_or(usize::MAX, |s| s.saturating_sub(executed));
        if budget == 0 {
            break;
        }
        let chunk = &pending[cursor..(cursor + width.min(budget)).min(pending.len())];
        let results: Vec<_> = if chunk.len() == 1 {
            vec![prepared.run_instance(chunk[0])]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|inst| {
                        let p = &prepared;
                        s.spawn(move || p.run_instance(inst))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("instance thread panicked"))
                    .collect()
            })
        };

        // Appends stay in subset order whatever order the work finished in.
        for (instance, result) in chunk.iter().zip(results) {
            let (transcripts, parsed, prediction) = match result {
                Ok(r) => r,
                Err(e) => {
                    manifest.status = RunStatus::Failed;
                    manifest.failure = Some(RunFailure {
                        instance_id: Some(instance.instance_id.clone()),
                        message: e.to_string(),
                    });
                    manifest.store(out)?;
                    return Err(RunError::Instance {
                        instance_id: instance.instance_id.clone(),
                        source: Box::new(e),
                    });
                }
            };
            let correct = prediction.labels.as_ref() == Some(&instance.gold);
            let scored = ScoredPrediction {
                prediction,
                gold: instance.gold.clone(),
                correct,
            };
            manifest.artifacts = ArtifactOffsets {
                transcripts: append(
                    &out.join(TRANSCRIPTS),
                    &jsonl_bytes(transcripts.into_iter().map(|body| TranscriptRecord {
                        config_digest: digest.clone(),
                        body,
                    })),
                )?,
                parsed: append(
                    &out.join(PARSED),
                    &jsonl_bytes(parsed.into_iter().map(|b| wrap(&run_id, &digest, b))),
                )?,
                predictions: append(
                    &out.join(PREDICTIONS),
                    &jsonl_bytes([wrap(&run_id, &digest, scored)]),
                )?,
            };
            manifest
                .progress
                .insert(instance.instance_id.clone(), InstanceState::Done);
            manifest.store(out)?;
            executed += 1;
        }
        cursor += chunk.len();
    }

    let backend_calls = prepared.gateway.backend_calls();
    if manifest.completed() < manifest.progress.len() {
        log::info!("{run_id}: stopped after {executed} instance(s); resume to finish");
        return Ok(RunOutcome {
            output_dir: out.to_path_buf(),
            manifest,
            scores: None,
            executed,
            backend_calls,
        });
    }

    let records: Vec<PredictionRecord> = read_jsonl(&out.join(PREDICTIONS))?;
    let report = score_records(
        &prepared.spec,
        &prepared.config,
        &records,
        prepared.config.parse_failure_mode,
    )?;
    let mut bytes = serde_json::to_vec_pretty(&wrap(&run_id, &digest, report.clone()))
        .expect("scores serialize");
    bytes.push(b'\n');
    write_atomic(&out.join(SCORES), &bytes)?;

    manifest.status = RunStatus::Complete;
    manifest.finished_at = Some(prepared.clock.timestamp());
    manifest.store(out)?;
    Ok(RunOutcome {
        output_dir: out.to_path_buf(),
        manifest,
        scores: Some(report),
        executed,
        backend_calls,
    })
}

pub(super) fn score_records(
    spec: &TaskSpec,
    config: &RunConfig,
    records: &[PredictionRecord],
    mode: crate::scoring::ParseFailureMode,
) -> Result<ScoreReport> {
    let preds: Vec<Prediction> = records.iter().map(|r| r.body.prediction.clone()).collect();
    let golds: Vec<(String, crate::catalog::Answer)> = records
        .iter()
        .map(|r| (r.body.prediction.instance_id.clone(), r.body.gold.clone()))
        .collect();
    Ok(score_run(
        spec,
        config.strategy,
        &config.backend.model_name,
        &preds,
        &golds,
        mode,
    )?)
}

fn read_scores(out: &Path) -> Result<Option<ScoreReport>> {
    let path = out.join(SCORES);
    match fs::read(&path) {
        Ok(b) => {
            let rec: Record<ScoreReport> = serde_json::from_slice(&b).map_err(json_err(&path))?;
            Ok(Some(rec.body))
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(&path)(e)),
    }
}

/// One orchestrator per run directory. The lock file holds the owner's
/// pid; a lock left by a process that no longer exists is taken over.
struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(".lock");
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    let _ = write!(f, "{}", std::process::id());
                    return Ok(DirLock(path));
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    let owner = fs::read_to_string(&path).unwrap_or_default();
                    if owner_is_gone(owner.trim()) {
                        log::warn!("removing stale lock {}", path.display());
                        let _ = fs::remove_file(&path);
                        continue;
                    }
                    return Err(RunError::Locked(dir.to_path_buf()));
                }
                Err(e) => return Err(io_err(&path)(e)),
            }
        }
        Err(RunError::Locked(dir.to_path_buf()))
    }
}

fn owner_is_gone(pid: &str) -> bool {
    let Ok(pid) = pid.parse::<u32>() else {
        return true;
    };
    if pid == std::process::id() {
        // Same process: a live lock held by another thread or run.
        return false;
    }
    let proc = Path::new("/proc");
    proc.is_dir() && !proc.join(pid.to_string()).exists()
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}
