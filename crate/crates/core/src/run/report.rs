use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::Serialize;

use super::exec::score_records;
use super::{
    io_err, read_jsonl, PredictionRecord, Record, Result, RunError, RunManifest, RunStatus,
    ANNOTATIONS, PREDICTIONS, SCORES,
};
use crate::analysis::{
    average_across_models, calibrate_groups, distribution_tsv, error_distribution,
    improvement_report, AnalysisError, CalibrationItem, CalibrationMode, ErrorAnnotation,
    ErrorPartition, COMPARISONS,
};
use crate::catalog::{builtin_catalog, builtin_task, MetricId, TaskSpec};
use crate::prompt::StrategyId;
use crate::scoring::{ParseFailureMode, ScoreReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportMode {
    /// Per-model scores: model × strategy rows, tasks as columns.
    Table2,
    /// Scores averaged over models.
    Table3,
    /// Flat means and relative improvement per model.
    Fig3,
    Calibration,
    Errors,
}

impl std::str::FromStr for ReportMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "table2" => Ok(Self::Table2),
            "table3" => Ok(Self::Table3),
            "fig3" => Ok(Self::Fig3),
            "calibration" => Ok(Self::Calibration),
            "errors" => Ok(Self::Errors),
            other => Err(format!("unknown report mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub mode: ReportMode,
    /// When several runs cover one model × task × strategy cell, keep the
    /// one scoring highest on this metric. Without it such duplicates are
    /// an error.
    pub select_best: Option<MetricId>,
    pub threshold: f64,
    pub calibration_mode: CalibrationMode,
}

impl ReportOptions {
    pub fn new(mode: ReportMode) -> Self {
        ReportOptions {
            mode,
            select_best: None,
            threshold: crate::analysis::DEFAULT_THRESHOLD,
            calibration_mode: CalibrationMode::Pooled,
        }
    }
}

/// Named report files. The first is the main table.
#[derive(Debug, Clone, Default)]
pub struct ReportOutput {
    pub files: Vec<(String, String)>,
}

impl ReportOutput {
    pub fn main(&self) -> &str {
        self.files.first().map_or("", |(_, c)| c.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_str())
    }

    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        self.files
            .iter()
            .map(|(name, contents)| {
                let p = dir.join(name);
                fs::write(&p, contents).map_err(io_err(&p))?;
                Ok(p)
            })
            .collect()
    }

    fn push_json(&mut self, name: &str, value: &impl Serialize) {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        self.files.push((name.to_string(), text));
    }
}

/// A finished run directory.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub scores: ScoreReport,
}

pub fn load_run(dir: impl AsRef<Path>) -> Result<LoadedRun> {
    let dir = dir.as_ref();
    let manifest = RunManifest::load(dir)?;
    if manifest.status != RunStatus::Complete {
        return Err(RunError::IncompleteRun(dir.to_path_buf()));
    }
    let path = dir.join(SCORES);
    let bytes = fs::read(&path).map_err(|_| RunError::IncompleteRun(dir.to_path_buf()))?;
    let rec: Record<ScoreReport> =
        serde_json::from_slice(&bytes).map_err(super::json_err(&path))?;
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        manifest,
        scores: rec.body,
    })
}

impl LoadedRun {
    pub fn predictions(&self) -> Result<Vec<PredictionRecord>> {
        read_jsonl(&self.dir.join(PREDICTIONS))
    }

    pub fn task_spec(&self) -> Result<TaskSpec> {
        Ok(match &self.manifest.config.task_file {
            Some(p) => TaskSpec::from_file(p)?,
            None => builtin_task(&self.manifest.config.task_id)?,
        })
    }

    fn cell(&self) -> (&str, &str, StrategyId) {
        (
            &self.scores.model_name,
            &self.scores.task_id,
            self.scores.strategy,
        )
    }
}

/// Recompute a run's scores from its predictions.
pub fn rescore(dir: impl AsRef<Path>, mode: Option<ParseFailureMode>) -> Result<ScoreReport> {
    let run = load_run(dir)?;
    let spec = run.task_spec()?;
    let mode = mode.unwrap_or(run.manifest.config.parse_failure_mode);
    score_records(&spec, &run.manifest.config, &run.predictions()?, mode)
}

fn strategy_rank(s: StrategyId) -> usize {
    StrategyId::ALL
        .iter()
        .position(|x| *x == s)
        .unwrap_or(usize::MAX)
}

fn task_order() -> Vec<String> {
    builtin_catalog().into_iter().map(|t| t.task_id).collect()
}

fn task_rank(order: &[String], task: &str) -> (usize, String) {
    (
        order.iter().position(|t| t == task).unwrap_or(usize::MAX),
        task.to_string(),
    )
}

/// One run per model × task × strategy cell.
fn dedupe(runs: Vec<LoadedRun>, best: Option<MetricId>) -> Result<Vec<LoadedRun>> {
    let mut cells: IndexMap<(String, String, StrategyId), Vec<LoadedRun>> = IndexMap::new();
    for run in runs {
        let (m, t, s) = run.cell();
        cells.entry((m.into(), t.into(), s)).or_default().push(run);
    }
    let mut out = Vec::with_capacity(cells.len());
    for ((model, task, strategy), mut group) in cells {
        if group.len() == 1 {
            out.push(group.pop().expect("one run"));
            continue;
        }
        let Some(metric) = best else {
            return Err(RunError::CoverageGap(format!(
                "{} runs cover {model}/{task}/{strategy}; pass --select best --metric <id>",
                group.len()
            )));
        };
        group.sort_by(|a, b| a.manifest.run_id.cmp(&b.manifest.run_id));
        let mut winner = 0;
        for (i, run) in group.iter().enumerate() {
            let value = |r: &LoadedRun| {
                r.scores.values.get(&metric).copied().ok_or_else(|| {
                    RunError::CoverageGap(format!(
                        "run {} does not report {metric}",
                        r.manifest.run_id
                    ))
                })
            };
            if value(run)? > value(&group[winner])? {
                winner = i;
            }
        }
        log::info!(
            "{model}/{task}/{strategy}: selected run {} by {metric}",
            group[winner].manifest.run_id
        );
        out.push(group.swap_remove(winner));
    }
    Ok(out)
}

/// Build a report over finished run directories.
pub fn report(run_dirs: &[PathBuf], opts: &ReportOptions) -> Result<ReportOutput> {
    if run_dirs.is_empty() {
        return Err(RunError::CoverageGap("no run directories given".into()));
    }
    let runs = run_dirs.iter().map(load_run).collect::<Result<Vec<_>>>()?;
    let runs = dedupe(runs, opts.select_best)?;
    match opts.mode {
        ReportMode::Table2 => table2(&runs),
        ReportMode::Table3 => table3(&runs),
        ReportMode::Fig3 => fig3(&runs),
        ReportMode::Calibration => calibration(&runs, opts),
        ReportMode::Errors => errors(&runs),
    }
}

fn sorted_reports(runs: &[LoadedRun]) -> Vec<ScoreReport> {
    let order = task_order();
    let mut reports: Vec<ScoreReport> = runs.iter().map(|r| r.scores.clone()).collect();
    reports.sort_by(|a, b| {
        (
            strategy_rank(a.strategy),
            task_rank(&order, &a.task_id),
            &a.model_name,
        )
            .cmp(&(
                strategy_rank(b.strategy),
                task_rank(&order, &b.task_id),
                &b.model_name,
            ))
    });
    reports
}

fn table2(runs: &[LoadedRun]) -> Result<ReportOutput> {
    let order = task_order();
    let reports = sorted_reports(runs);
    let mut tasks: Vec<&str> = reports.iter().map(|r| r.task_id.as_str()).collect();
    tasks.sort_by_key(|t| task_rank(&order, t));
    tasks.dedup();
    let mut models: Vec<&str> = Vec::new();
    for r in runs {
        if !models.contains(&r.scores.model_name.as_str()) {
            models.push(&r.scores.model_name);
        }
    }
    let mut rows: Vec<(&str, StrategyId, usize)> = Vec::new();
    for &model in &models {
        let mut strategies: Vec<(StrategyId, usize)> = runs
            .iter()
            .filter(|r| r.scores.model_name == model)
            .map(|r| (r.scores.strategy, r.manifest.config.effective_shots()))
            .collect();
        strategies.sort_by_key(|(s, _)| strategy_rank(*s));
        strategies.dedup_by_key(|(s, _)| *s);
        rows.extend(strategies.into_iter().map(|(s, k)| (model, s, k)));
    }

    let find = |model: &str, s: StrategyId, task: &str| {
        reports
            .iter()
            .find(|r| r.model_name == model && r.strategy == s && r.task_id == task)
    };
    let mut missing = Vec::new();
    for &(model, s, _) in &rows {
        for &task in &tasks {
            if find(model, s, task).is_none() {
                missing.push(format!("{model}/{s}/{task}"));
            }
        }
    }
    if !missing.is_empty() {
        return Err(RunError::CoverageGap(format!(
            "no run for {}",
            missing.join(", ")
        )));
    }

    let mut tsv = String::from("model\tsetting\tstrategy");
    for &task in &tasks {
        let heading = reports
            .iter()
            .find(|r| r.task_id == task)
            .map(|r| r.slash_heading())
            .unwrap_or_default();
        let _ = write!(tsv, "\t{task} ({heading})");
    }
    tsv.push('\n');
    let mut json_rows = Vec::new();
    for &(model, s, shots) in &rows {
        let setting = if shots == 0 {
            "zero-shot".to_string()
        } else {
            format!("{shots}-shot")
        };
        let _ = write!(tsv, "{model}\t{setting}\t{s}");
        let mut cells = BTreeMap::new();
        for &task in &tasks {
            let r = find(model, s, task).expect("coverage checked");
            let _ = write!(tsv, "\t{}", r.slash_cell());
            cells.insert(task.to_string(), r.values.clone());
        }
        tsv.push('\n');
        json_rows.push(serde_json::json!({
            "model": model, "setting": setting, "strategy": s, "cells": cells,
        }));
    }
    let mut out = ReportOutput::default();
    out.files.push(("table2.tsv".into(), tsv));
    out.push_json("table2.json", &json_rows);
    Ok(out)
}

fn coverage(e: AnalysisError) -> RunError {
    match e {
        AnalysisError::InconsistentGroup { .. } => RunError::CoverageGap(e.to_string()),
        other => RunError::Analysis(other),
    }
}

fn table3(runs: &[LoadedRun]) -> Result<ReportOutput> {
    let table = average_across_models(&sorted_reports(runs)).map_err(coverage)?;
    let mut out = ReportOutput::default();
    out.files.push(("table3.tsv".into(), table.to_tsv()));
    out.push_json("table3.json", &table);
    Ok(out)
}

fn fig3(runs: &[LoadedRun]) -> Result<ReportOutput> {
    let reports = sorted_reports(runs);
    let mut by_model: IndexMap<&str, BTreeMap<StrategyId, BTreeSet<&str>>> = IndexMap::new();
    for r in &reports {
        by_model
            .entry(&r.model_name)
            .or_default()
            .entry(r.strategy)
            .or_default()
            .insert(&r.task_id);
    }
    for (model, strategies) in &by_model {
        let mut usable = 0;
        for (a, b) in COMPARISONS {
            if let (Some(ta), Some(tb)) = (strategies.get(&a), strategies.get(&b)) {
                if ta != tb {
                    return Err(RunError::CoverageGap(format!(
                        "{model}: {a} covers {ta:?} but {b} covers {tb:?}"
                    )));
                }
                usable += 1;
            }
        }
        if usable == 0 {
            let have: Vec<String> = strategies.keys().map(|s| s.to_string()).collect();
            let wanted: Vec<String> = COMPARISONS
                .iter()
                .filter(|(a, b)| strategies.contains_key(a) || strategies.contains_key(b))
                .map(|(a, b)| {
                    if strategies.contains_key(a) {
                        b.to_string()
                    } else {
                        a.to_string()
                    }
                })
                .collect();
            return Err(RunError::CoverageGap(format!(
                "{model}: strategies {have:?} form no comparison; missing {}",
                if wanted.is_empty() {
                    "MP or M-MP runs".to_string()
                } else {
                    wanted.join(" or ")
                }
            )));
        }
    }
    let rep = improvement_report(&reports)?;
    let mut out = ReportOutput::default();
    out.files.push(("fig3.tsv".into(), rep.to_tsv()));
    out.push_json("fig3.json", &rep);
    let mut csv = String::from("model,strategy,flat_mean\n");
    for m in &rep.means {
        let _ = writeln!(csv, "{},{},{:.1}", m.model, m.strategy, m.mean);
    }
    out.files.push(("fig3_plot.csv".into(), csv));
    Ok(out)
}

fn calibration(runs: &[LoadedRun], opts: &ReportOptions) -> Result<ReportOutput> {
    let mut groups = Vec::with_capacity(runs.len());
    for run in runs {
        groups.push(
            run.predictions()?
                .into_iter()
                .map(|r| CalibrationItem {
                    confidence: r.body.prediction.confidence,
                    correct: r.body.correct,
                })
                .collect::<Vec<_>>(),
        );
    }
    let m = calibrate_groups(&groups, opts.threshold, opts.calibration_mode);
    let mut out = ReportOutput::default();
    out.files.push(("calibration.tsv".into(), m.to_tsv()));
    out.push_json("calibration.json", &m);
    out.files
        .push(("calibration_plot.csv".into(), m.to_plot_csv()));
    Ok(out)
}

fn read_annotations(dir: &Path) -> Result<Vec<ErrorAnnotation>> {
    read_jsonl(&dir.join(ANNOTATIONS))
}

fn errors(runs: &[LoadedRun]) -> Result<ReportOutput> {
    let mut per_run = Vec::with_capacity(runs.len());
    for run in runs {
        per_run.push((run.task_spec()?.benchmark, read_annotations(&run.dir)?));
    }
    let mut by_partition: IndexMap<ErrorPartition, Vec<ErrorAnnotation>> = IndexMap::new();
    for p in [
        ErrorPartition::General,
        ErrorPartition::Biomedical,
        ErrorPartition::Legal,
    ] {
        let anns = per_run
            .iter()
            .filter(|(b, _)| p.applies_to(*b))
            .flat_map(|(_, a)| a.iter().cloned())
            .collect();
        by_partition.insert(p, anns);
    }
    let mut tsv = String::new();
    let mut json = BTreeMap::new();
    for (partition, anns) in &by_partition {
        match error_distribution(anns, partition.categories()) {
            Ok(dist) => {
                let name = format!("{partition:?}").to_lowercase();
                let counted = anns
                    .iter()
                    .filter(|a| partition.categories().contains(&a.category))
                    .count();
                let _ = writeln!(tsv, "# {name} ({counted} annotations)");
                tsv.push_str(&distribution_tsv(&dist));
                tsv.push('\n');
                json.insert(name, dist);
            }
            Err(AnalysisError::EmptyAnnotationSet) => {}
            Err(e) => return Err(e.into()),
        }
    }
    if json.is_empty() {
        return Err(AnalysisError::EmptyAnnotationSet.into());
    }
    let mut out = ReportOutput::default();
    out.files.push(("errors.tsv".into(), tsv));
    out.push_json("errors.json", &json);
    Ok(out)
}

/// Validate annotations against a finished run and append them to its
/// `annotations.jsonl`. Every annotation must name this run and one of its
/// incorrect predictions. Returns how many new annotations were stored.
pub fn annotate(run_dir: impl AsRef<Path>, annotations: &[ErrorAnnotation]) -> Result<usize> {
    let run = load_run(run_dir)?;
    let preds = run.predictions()?;
    let wrong: BTreeSet<&str> = preds
        .iter()
        .filter(|r| !r.body.correct)
        .map(|r| r.body.prediction.instance_id.as_str())
        .collect();
    let known: BTreeSet<&str> = preds
        .iter()
        .map(|r| r.body.prediction.instance_id.as_str())
        .collect();
    for a in annotations {
        if a.run_id != run.manifest.run_id {
            return Err(RunError::Annotation(format!(
                "{} names run {}, not {}",
                a.instance_id, a.run_id, run.manifest.run_id
            )));
        }
        if !known.contains(a.instance_id.as_str()) {
            return Err(RunError::Annotation(format!(
                "{} is not part of run {}",
                a.instance_id, a.run_id
            )));
        }
        if !wrong.contains(a.instance_id.as_str()) {
            return Err(RunError::Annotation(format!(
                "{} was predicted correctly in run {}",
                a.instance_id, a.run_id
            )));
        }
    }
    let mut existing = read_annotations(&run.dir)?;
    let mut added = 0;
    for a in annotations {
        if !existing.contains(a) {
            existing.push(a.clone());
            added += 1;
        }
    }
    let mut bytes = Vec::new();
    for a in &existing {
        serde_json::to_writer(&mut bytes, a).expect("annotation serializes");
        bytes.push(b'\n');
    }
    super::write_atomic(&run.dir.join(ANNOTATIONS), &bytes)?;
    Ok(added)
}
