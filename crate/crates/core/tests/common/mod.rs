#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use metacog_eval::backend::{write_fixtures, BackendConfig, Fixture};
use metacog_eval::catalog::{builtin_task, save_instances, Answer, Instance, TaskSpec};
use metacog_eval::parse::AnswerContract;
use metacog_eval::run::{plan_prompts, DataSource, RunConfig};
use metacog_eval::StrategyId;
use sha2::{Digest, Sha256};

pub const FROZEN: &str = "2024-01-01T00:00:00Z";

/// Cheap stable hash used to vary fixture behaviour per instance.
pub fn spread(s: &str) -> u64 {
    s.bytes().fold(1469598103934665603u64, |h, b| {
        (h ^ b as u64).wrapping_mul(1099511628211)
    })
}

const SENTENCE: [&str; 4] = ["Aspirin", "relieves", "mild", "headache"];

pub fn make_instances(spec: &TaskSpec, prefix: &str, n: usize) -> Vec<Instance> {
    let labels = &spec.label_space.labels;
    (0..n)
        .map(|i| {
            let id = format!("{prefix}-{i}");
            let slot_values: BTreeMap<String, String> = spec
                .template_slots
                .iter()
                .map(|slot| {
                    let text = if spec.token_slot.as_deref() == Some(slot.as_str()) {
                        format!("{} case{i}", SENTENCE.join(" "))
                    } else {
                        format!("Text for {slot} in example {i} of {}.", spec.task_id)
                    };
                    (slot.clone(), text)
                })
                .collect();
            let gold = if spec.label_space.is_tag_sequence() {
                let tags: &[&str] = if i % 2 == 0 {
                    &["B", "O", "O", "O", "O"]
                } else {
                    &["B", "I", "O", "B", "O"]
                };
                Answer::Tags(tags.iter().map(|t| t.to_string()).collect())
            } else if spec.label_space.is_multi_label() {
                let a = &labels[i % labels.len()];
                let b = &labels[(i * 3 + 1) % labels.len()];
                let set: BTreeSet<String> = if i % 3 == 0 {
                    [a.clone()].into()
                } else {
                    [a.clone(), b.clone()].into()
                };
                Answer::Labels(set)
            } else {
                Answer::single(labels[i % labels.len()].clone())
            };
            Instance {
                instance_id: id,
                slot_values,
                gold,
            }
        })
        .collect()
}

/// A plausible wrong answer for `gold`.
pub fn wrong_answer(spec: &TaskSpec, gold: &Answer) -> Answer {
    let labels = &spec.label_space.labels;
    match gold {
        Answer::Tags(tags) => {
            let all_o = tags.iter().all(|t| t == "O");
            Answer::Tags(
                tags.iter()
                    .enumerate()
                    .map(|(i, _)| if all_o && i == 0 { "B" } else { "O" }.to_string())
                    .collect(),
            )
        }
        Answer::Labels(set) => {
            let first = set.iter().next().expect("nonempty gold");
            let pos = labels.iter().position(|l| l == first).unwrap_or(0);
            let mut replacement = labels[(pos + 1) % labels.len()].clone();
            if spec.label_space.none_label.as_deref() == Some(replacement.as_str()) {
                replacement = labels[(pos + 2) % labels.len()].clone();
            }
            if set.len() > 1 {
                let mut out = set.clone();
                out.remove(first);
                out.insert(replacement);
                Answer::Labels(out)
            } else {
                Answer::single(replacement)
            }
        }
    }
}

/// What the scripted model intends to answer; `None` means it rambles
/// without committing to anything parsable.
pub fn intended(
    spec: &TaskSpec,
    inst: &Instance,
    strategy: StrategyId,
    sample: u32,
) -> Option<Answer> {
    let h = spread(&inst.instance_id) % 3;
    if strategy == StrategyId::CotSc {
        // 6/4, a 5/5 tie, or 3/6 plus one unparsable sample.
        let gold_votes = [6, 5, 3][h as usize];
        if h == 2 && sample == 9 {
            return None;
        }
        return Some(if sample < gold_votes {
            inst.gold.clone()
        } else {
            wrong_answer(spec, &inst.gold)
        });
    }
    Some(if h == 0 {
        wrong_answer(spec, &inst.gold)
    } else {
        inst.gold.clone()
    })
}

pub fn confidence_for(inst: &Instance, sample: u32) -> u32 {
    [90, 80, 70, 60, 95][((spread(&inst.instance_id) + sample as u64) % 5) as usize]
}

pub fn response_text(
    spec: &TaskSpec,
    inst: &Instance,
    strategy: StrategyId,
    sample: u32,
) -> String {
    let contract = AnswerContract::for_task(spec);
    let Some(answer) = intended(spec, inst, strategy, sample) else {
        return "Let me think about this.\nThe evidence is mixed and I will not commit.".into();
    };
    let tokens = inst.tokens(spec);
    let sentence = contract.instantiate(&answer, tokens.as_deref());
    let conf = confidence_for(inst, sample);
    match strategy.base() {
        StrategyId::Mp => format!(
            "1. Understanding: the input restates the question clearly.\n\
             2. Preliminary judgment: an initial reading suggests a direction.\n\
             3. Critical evaluation: reconsidering the context keeps that direction.\n\
             4. Final decision:\n{sentence}.\n\
             5. Confidence: I am {conf}% confident in this answer.\n"
        ),
        _ => format!("Step by step, the context points one way.\nSo, {sentence}.\n"),
    }
}

pub fn worked_answer(spec: &TaskSpec, inst: &Instance) -> String {
    let contract = AnswerContract::for_task(spec);
    let tokens = inst.tokens(spec);
    format!(
        "Reasoning over the example. {}.",
        contract.instantiate(&inst.gold, tokens.as_deref())
    )
}

/// Lay out data, worked answers and fixtures for one scripted run under
/// `root`, returning a config that writes to `root/<name>/out`.
pub fn scripted_run(
    root: &Path,
    task_id: &str,
    strategy: StrategyId,
    data_n: usize,
    eval_n: usize,
) -> RunConfig {
    let spec = builtin_task(task_id).unwrap();
    let name = format!("{task_id}-{strategy}");
    let dir = root.join(&name);
    fs::create_dir_all(&dir).unwrap();

    let data_path = dir.join("validation.jsonl");
    save_instances(
        &data_path,
        &make_instances(&spec, &format!("{task_id}-val"), data_n),
    )
    .unwrap();

    let mut config = RunConfig {
        run_id: name.clone(),
        task_id: task_id.into(),
        strategy,
        shots: None,
        eval_n,
        seed: 11,
        exemplar_seed: None,
        parse_failure_mode: Default::default(),
        overrides: Default::default(),
        backend: BackendConfig::scripted("scripted-model"),
        dataset: native(&data_path),
        train: None,
        exemplar_answers: None,
        task_file: None,
        templates_dir: None,
        system_prompt: None,
        frozen_clock: Some(FROZEN.parse().unwrap()),
        output_dir: Some(dir.join("out")),
        cache_dir: None,
    };
    if strategy.is_few_shot() {
        let train = make_instances(&spec, &format!("{task_id}-train"), 8);
        let train_path = dir.join("train.jsonl");
        save_instances(&train_path, &train).unwrap();
        let answers: String = train
            .iter()
            .map(|i| {
                serde_json::json!({"instance_id": i.instance_id, "worked_answer": worked_answer(&spec, i)})
                    .to_string()
                    + "\n"
            })
            .collect();
        let answers_path = dir.join("worked_answers.jsonl");
        fs::write(&answers_path, answers).unwrap();
        config.train = Some(native(&train_path));
        config.exemplar_answers = Some(answers_path);
    }
    let fixtures_path = dir.join("fixtures.jsonl");
    config.backend.fixtures = Some(fixtures_path.clone());

    let mut fixtures = Vec::new();
    for planned in plan_prompts(&config).unwrap() {
        for s in 0..planned.bundle.decoding.sample_count {
            fixtures.push(Fixture {
                prompt_hash: planned.bundle.prompt_hash.clone(),
                sample_index: s,
                text: response_text(&spec, &planned.instance, strategy, s),
            });
        }
    }
    write_fixtures(&fixtures_path, &fixtures).unwrap();
    config
}

fn native(path: &Path) -> DataSource {
    DataSource {
        path: path.to_path_buf(),
        format: "native".parse().unwrap(),
        split: "validation".into(),
    }
}

pub fn with_output(config: &RunConfig, out: PathBuf) -> RunConfig {
    let mut c = config.clone();
    c.output_dir = Some(out);
    c
}

/// Digest of every file under `dir`, keyed by relative path.
pub fn tree_digest(dir: &Path) -> String {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(base, &path, out);
            } else {
                let rel = path
                    .strip_prefix(base)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    let mut files = Vec::new();
    walk(dir, dir, &mut files);
    files.sort();
    let mut h = Sha256::new();
    for (name, bytes) in files {
        h.update(name.as_bytes());
        h.update([0]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    hex::encode(h.finalize())
}

/// Majority label over intended answers; unparsable samples abstain and
/// ties go to the smallest answer.
pub fn expected_vote(answers: &[Option<Answer>]) -> Option<Answer> {
    let mut counts: Vec<(Answer, usize)> = Vec::new();
    for a in answers.iter().flatten() {
        match counts.iter_mut().find(|(x, _)| x == a) {
            Some((_, n)) => *n += 1,
            None => counts.push((a.clone(), 1)),
        }
    }
    let top = counts.iter().map(|(_, n)| *n).max()?;
    counts
        .into_iter()
        .filter(|(_, n)| *n == top)
        .map(|(a, _)| a)
        .min()
}

/// Brute-force metrics straight from precision and recall definitions.
pub mod oracle {
    use std::collections::BTreeSet;

    fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
        let p = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let r = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        if p + r == 0.0 {
            0.0
        } else {
            100.0 * 2.0 * p * r / (p + r)
        }
    }

    fn counts(
        label: &str,
        pred: &[BTreeSet<String>],
        gold: &[BTreeSet<String>],
    ) -> (usize, usize, usize) {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (p, g) in pred.iter().zip(gold) {
            let (a, b) = (p.contains(label), g.contains(label));
            tp += (a && b) as usize;
            fp += (a && !b) as usize;
            fn_ += (!a && b) as usize;
        }
        (tp, fp, fn_)
    }

    pub fn accuracy(pred: &[BTreeSet<String>], gold: &[BTreeSet<String>]) -> f64 {
        let hits = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
        100.0 * hits as f64 / gold.len() as f64
    }

    pub fn binary_f1(pred: &[BTreeSet<String>], gold: &[BTreeSet<String>], pos: &str) -> f64 {
        let (tp, fp, fn_) = counts(pos, pred, gold);
        f1(tp, fp, fn_)
    }

    pub fn micro_f1(
        pred: &[BTreeSet<String>],
        gold: &[BTreeSet<String>],
        labels: &[String],
    ) -> f64 {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for l in labels {
            let c = counts(l, pred, gold);
            tp += c.0;
            fp += c.1;
            fn_ += c.2;
        }
        f1(tp, fp, fn_)
    }

    pub fn macro_f1(
        pred: &[BTreeSet<String>],
        gold: &[BTreeSet<String>],
        labels: &[String],
    ) -> f64 {
        let total: f64 = labels
            .iter()
            .map(|l| {
                let (tp, fp, fn_) = counts(l, pred, gold);
                f1(tp, fp, fn_)
            })
            .sum();
        total / labels.len() as f64
    }

    pub fn bio_f1(pred: &[Vec<String>], gold: &[Vec<String>]) -> f64 {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (p, g) in pred.iter().zip(gold) {
            for (pt, gt) in p.iter().zip(g) {
                if pt != "O" && pt == gt {
                    tp += 1;
                }
                if pt != "O" && pt != gt {
                    fp += 1;
                }
                if gt != "O" && pt != gt {
                    fn_ += 1;
                }
            }
        }
        f1(tp, fp, fn_)
    }
}

/// Rows of the committed per-model results table as score reports,
/// tagged with their shot setting ("0S" or "5S").
pub fn table2_reports() -> Vec<(String, metacog_eval::scoring::ScoreReport)> {
    use indexmap::IndexMap;
    use metacog_eval::catalog::MetricId;
    use metacog_eval::scoring::{ScoreCounts, ScoreReport};

    let text = include_str!("../fixtures/table2.tsv");
    let mut lines = text.lines();
    let header: Vec<(String, MetricId)> = lines
        .next()
        .unwrap()
        .split('\t')
        .skip(3)
        .map(|col| {
            let (task, metric) = col.split_once(':').unwrap();
            (
                task.to_string(),
                serde_json::from_value(metric.into()).unwrap(),
            )
        })
        .collect();
    let mut out = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split('\t').collect();
        let (model, setting, strategy) = (cells[0], cells[1], cells[2].parse().unwrap());
        let mut per_task: IndexMap<String, IndexMap<MetricId, f64>> = IndexMap::new();
        for ((task, metric), cell) in header.iter().zip(&cells[3..]) {
            per_task
                .entry(task.clone())
                .or_default()
                .insert(*metric, cell.parse().unwrap());
        }
        for (task, values) in per_task {
            out.push((
                setting.to_string(),
                ScoreReport {
                    task_id: task,
                    strategy,
                    model_name: model.into(),
                    parse_failure_mode: Default::default(),
                    alt_values: values.clone(),
                    values,
                    counts: ScoreCounts::default(),
                    macro_f1_present: None,
                },
            ));
        }
    }
    out
}

/// Cells of the committed model-averaged table: (strategy, task, metric, value).
pub fn table3_cells() -> Vec<(StrategyId, String, metacog_eval::catalog::MetricId, f64)> {
    let text = include_str!("../fixtures/table3.tsv");
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .unwrap()
        .split('\t')
        .skip(1)
        .map(String::from)
        .collect();
    let mut out = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split('\t').collect();
        let strategy: StrategyId = cells[0].parse().unwrap();
        for (col, cell) in header.iter().zip(&cells[1..]) {
            let (task, metric) = col.split_once(':').unwrap();
            out.push((
                strategy,
                task.to_string(),
                serde_json::from_value(metric.into()).unwrap(),
                cell.parse().unwrap(),
            ));
        }
    }
    out
}
