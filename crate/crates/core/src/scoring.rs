//! Predictions, self-consistency voting and task metrics.
//!
//! Every metric is computed from integer confusion counts ([`Confusion`]),
//! so partial results from disjoint instance partitions merge exactly.
//! Metric functions return unrounded percentages; [`score_run`] rounds to
//! one decimal for reporting.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::ops::{Add, AddAssign};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Answer, LabelSpace, MetricId, TaskSpec};
use crate::parse::ParsedResponse;
use crate::prompt::StrategyId;
use crate::round1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoringError {
    #[error("no sample of instance {0} could be parsed")]
    NoParsableSamples(String),
    #[error("samples from several instances passed to one vote: {0:?}")]
    MixedInstances(Vec<String>),
    #[error("predictions and golds do not align: missing {missing:?}, extra {extra:?}, duplicate {duplicate:?}")]
    AlignmentError {
        missing: Vec<String>,
        extra: Vec<String>,
        duplicate: Vec<String>,
    },
    #[error("instance {instance}: {predicted} predicted tags for {gold} gold tags")]
    LengthMismatch {
        instance: String,
        predicted: usize,
        gold: usize,
    },
    #[error("metric {metric} needs {need}")]
    Unsupported {
        metric: MetricId,
        need: &'static str,
    },
}

pub type Result<T, E = ScoringError> = std::result::Result<T, E>;

/// Final answer for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    /// `None` is a parse-failure placeholder.
    pub labels: Option<Answer>,
    pub confidence: Option<f64>,
    /// Sample count per voted answer, for self-consistency runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vote_detail: Option<BTreeMap<String, u32>>,
}

impl Prediction {
    pub fn from_parsed(parsed: &ParsedResponse) -> Self {
        Prediction {
            instance_id: parsed.instance_id.clone(),
            labels: parsed.labels.clone(),
            confidence: parsed.confidence.map(f64::from),
            vote_detail: None,
        }
    }

    pub fn is_failure(&self) -> bool {
        self.labels.is_none()
    }
}

/// Majority vote over the samples of one instance.
///
/// Whole answers are the voting unit. Ties go to the smallest answer in
/// canonical order, which for single labels is the lexicographically
/// smallest label. Confidence is the mean of the stated confidences.
pub fn majority_vote(parsed: &[ParsedResponse]) -> Result<Prediction> {
    let ids: BTreeSet<&str> = parsed.iter().map(|p| p.instance_id.as_str()).collect();
    let instance_id = match ids.len() {
        0 => return Err(ScoringError::NoParsableSamples(String::new())),
        1 => ids.into_iter().next().expect("one id").to_string(),
        _ => {
            return Err(ScoringError::MixedInstances(
                ids.into_iter().map(String::from).collect(),
            ))
        }
    };

    let mut counts: BTreeMap<&Answer, u32> = BTreeMap::new();
    for answer in parsed.iter().filter_map(|p| p.labels.as_ref()) {
        *counts.entry(answer).or_default() += 1;
    }
    // BTreeMap iterates in ascending order, so the first maximum wins ties.
    let mut winner: Option<(&Answer, u32)> = None;
    for (&answer, &n) in &counts {
        if winner.is_none_or(|(_, best)| n > best) {
            winner = Some((answer, n));
        }
    }
    let Some((answer, _)) = winner else {
        return Err(ScoringError::NoParsableSamples(instance_id));
    };

    let stated: Vec<f64> = parsed
        .iter()
        .filter_map(|p| p.confidence.map(f64::from))
        .collect();
    let confidence = (!stated.is_empty()).then(|| stated.iter().sum::<f64>() / stated.len() as f64);

    Ok(Prediction {
        instance_id,
        labels: Some(answer.clone()),
        confidence,
        vote_detail: Some(counts.iter().map(|(a, &n)| (a.to_string(), n)).collect()),
    })
}

/// How parse failures enter the metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParseFailureMode {
    /// A failure is a wrong answer with an empty label set.
    #[default]
    CountWrong,
    /// Failed instances are dropped from every metric.
    Exclude,
}

impl std::str::FromStr for ParseFailureMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "count-wrong" => Ok(Self::CountWrong),
            "exclude" => Ok(Self::Exclude),
            other => Err(format!("unknown parse-failure mode `{other}`")),
        }
    }
}

/// Gold answer keyed by instance id.
pub type Gold = (String, Answer);

/// Pair predictions with golds by instance id, in gold order.
pub fn align<'a>(
    preds: &'a [Prediction],
    golds: &'a [Gold],
) -> Result<Vec<(&'a Prediction, &'a Answer)>> {
    let mut by_id: HashMap<&str, &Prediction> = HashMap::with_capacity(preds.len());
    let mut duplicate = BTreeSet::new();
    for p in preds {
        if by_id.insert(&p.instance_id, p).is_some() {
            duplicate.insert(p.instance_id.clone());
        }
    }
    let mut seen = HashSet::with_capacity(golds.len());
    let mut missing = Vec::new();
    let mut pairs = Vec::with_capacity(golds.len());
    for (id, gold) in golds {
        if !seen.insert(id.as_str()) {
            duplicate.insert(id.clone());
            continue;
        }
        match by_id.get(id.as_str()) {
            Some(p) => pairs.push((*p, gold)),
            None => missing.push(id.clone()),
        }
    }
    let mut extra: Vec<String> = by_id
        .keys()
        .filter(|id| !seen.contains(*id))
        .map(|id| id.to_string())
        .collect();
    extra.sort();
    if pairs.is_empty() || !missing.is_empty() || !extra.is_empty() || !duplicate.is_empty() {
        return Err(ScoringError::AlignmentError {
            missing,
            extra,
            duplicate: duplicate.into_iter().collect(),
        });
    }
    Ok(pairs)
}

/// True-positive, false-positive and false-negative counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    /// F1 as a percentage; zero when there is nothing to score.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            100.0 * (2 * self.tp) as f64 / denom as f64
        }
    }

    pub fn is_empty(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }
}

impl Add for Confusion {
    type Output = Confusion;
    fn add(self, rhs: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + rhs.tp,
            fp: self.fp + rhs.fp,
            fn_: self.fn_ + rhs.fn_,
        }
    }
}

impl AddAssign for Confusion {
    fn add_assign(&mut self, rhs: Confusion) {
        *self = *self + rhs;
    }
}

static EMPTY: BTreeSet<String> = BTreeSet::new();

fn label_set(answer: Option<&Answer>) -> &BTreeSet<String> {
    answer.and_then(Answer::as_labels).unwrap_or(&EMPTY)
}

/// Exact-match counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCount {
    pub correct: u64,
    pub total: u64,
}

impl MatchCount {
    pub fn percent(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.total as f64
        }
    }
}

impl Add for MatchCount {
    type Output = MatchCount;
    fn add(self, rhs: MatchCount) -> MatchCount {
        MatchCount {
            correct: self.correct + rhs.correct,
            total: self.total + rhs.total,
        }
    }
}

pub fn match_count(pairs: &[(&Prediction, &Answer)]) -> MatchCount {
    MatchCount {
        correct: pairs
            .iter()
            .filter(|(p, g)| p.labels.as_ref() == Some(*g))
            .count() as u64,
        total: pairs.len() as u64,
    }
}

pub fn binary_confusion(pairs: &[(&Prediction, &Answer)], positive: &str) -> Confusion {
    let mut c = Confusion::default();
    for (p, g) in pairs {
        let pred_pos = label_set(p.labels.as_ref()).contains(positive);
        let gold_pos = label_set(Some(g)).contains(positive);
        match (pred_pos, gold_pos) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    c
}

/// Per-label counts over the label space, from set intersections and
/// differences. Predicted labels outside the space are ignored.
pub fn label_confusions(
    pairs: &[(&Prediction, &Answer)],
    space: &LabelSpace,
) -> IndexMap<String, Confusion> {
    let mut out: IndexMap<String, Confusion> = space
        .labels
        .iter()
        .map(|l| (l.clone(), Confusion::default()))
        .collect();
    for (p, g) in pairs {
        let pred = label_set(p.labels.as_ref());
        let gold = label_set(Some(g));
        for label in pred.union(gold) {
            let Some(c) = out.get_mut(label) else {
                continue;
            };
            match (pred.contains(label), gold.contains(label)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => unreachable!("label came from the union"),
            }
        }
    }
    out
}

/// Token-level counts over non-O tags. A failed prediction reads as all O.
pub fn tag_confusion(pairs: &[(&Prediction, &Answer)]) -> Result<Confusion> {
    let mut c = Confusion::default();
    for (p, g) in pairs {
        let gold = g.as_tags().ok_or(ScoringError::Unsupported {
            metric: MetricId::BioMicroF1,
            need: "tag-sequence golds",
        })?;
        let pred: Vec<&str> = match p.labels.as_ref() {
            None => vec!["O"; gold.len()],
            Some(answer) => answer
                .as_tags()
                .ok_or(ScoringError::Unsupported {
                    metric: MetricId::BioMicroF1,
                    need: "tag-sequence predictions",
                })?
                .iter()
                .map(String::as_str)
                .collect(),
        };
        if pred.len() != gold.len() {
            return Err(ScoringError::LengthMismatch {
                instance: p.instance_id.clone(),
                predicted: pred.len(),
                gold: gold.len(),
            });
        }
        for (pt, gt) in pred.iter().zip(gold) {
            let same = *pt == gt.as_str();
            if *pt != "O" {
                if same {
                    c.tp += 1;
                } else {
                    c.fp += 1;
                }
            }
            if gt != "O" && !same {
                c.fn_ += 1;
            }
        }
    }
    Ok(c)
}

pub fn accuracy(preds: &[Prediction], golds: &[Gold]) -> Result<f64> {
    Ok(match_count(&align(preds, golds)?).percent())
}

pub fn f1_binary(preds: &[Prediction], golds: &[Gold], positive_label: &str) -> Result<f64> {
    Ok(binary_confusion(&align(preds, golds)?, positive_label).f1())
}

pub fn micro_f1(preds: &[Prediction], golds: &[Gold], space: &LabelSpace) -> Result<f64> {
    let pooled = label_confusions(&align(preds, golds)?, space)
        .into_values()
        .fold(Confusion::default(), Add::add);
    Ok(pooled.f1())
}

/// Mean per-label F1 over the whole label space; labels that never occur
/// contribute zero.
pub fn macro_f1(preds: &[Prediction], golds: &[Gold], space: &LabelSpace) -> Result<f64> {
    Ok(macro_over(
        &label_confusions(&align(preds, golds)?, space),
        false,
    ))
}

/// Mean per-label F1 over labels that occur in a gold or a prediction.
pub fn macro_f1_present(preds: &[Prediction], golds: &[Gold], space: &LabelSpace) -> Result<f64> {
    Ok(macro_over(
        &label_confusions(&align(preds, golds)?, space),
        true,
    ))
}

fn macro_over(per_label: &IndexMap<String, Confusion>, present_only: bool) -> f64 {
    let f1s: Vec<f64> = per_label
        .values()
        .filter(|c| !present_only || !c.is_empty())
        .map(Confusion::f1)
        .collect();
    if f1s.is_empty() {
        0.0
    } else {
        f1s.iter().sum::<f64>() / f1s.len() as f64
    }
}

pub fn bio_micro_f1(preds: &[Prediction], golds: &[Gold]) -> Result<f64> {
    Ok(tag_confusion(&align(preds, golds)?)?.f1())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreCounts {
    pub scored: usize,
    pub parse_failures: usize,
    pub excluded: usize,
}

/// Metric values for one task × strategy × model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub task_id: String,
    pub strategy: StrategyId,
    pub model_name: String,
    pub parse_failure_mode: ParseFailureMode,
    /// Percentages rounded to one decimal, in the task's metric order.
    pub values: IndexMap<MetricId, f64>,
    /// The same metrics under the other parse-failure mode.
    pub alt_values: IndexMap<MetricId, f64>,
    pub counts: ScoreCounts,
    /// Macro-F1 over labels that occur, next to the full-space value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub macro_f1_present: Option<f64>,
}

fn compute(
    spec: &TaskSpec,
    pairs: &[(&Prediction, &Answer)],
) -> Result<(IndexMap<MetricId, f64>, Option<f64>)> {
    let mut values = IndexMap::new();
    let mut present = None;
    let mut per_label = None;
    for &metric in &spec.metrics {
        let value = match metric {
            MetricId::Accuracy => match_count(pairs).percent(),
            MetricId::F1Binary => {
                let positive = spec
                    .positive_label
                    .as_deref()
                    .ok_or(ScoringError::Unsupported {
                        metric,
                        need: "a positive label",
                    })?;
                binary_confusion(pairs, positive).f1()
            }
            MetricId::MicroF1 | MetricId::MacroF1 => {
                let counts =
                    per_label.get_or_insert_with(|| label_confusions(pairs, &spec.label_space));
                if metric == MetricId::MicroF1 {
                    counts
                        .values()
                        .copied()
                        .fold(Confusion::default(), Add::add)
                        .f1()
                } else {
                    present = Some(round1(macro_over(counts, true)));
                    macro_over(counts, false)
                }
            }
            MetricId::BioMicroF1 => tag_confusion(pairs)?.f1(),
        };
        values.insert(metric, round1(value));
    }
    Ok((values, present))
}

/// Score aligned predictions with exactly the task's metrics.
pub fn score_run(
    spec: &TaskSpec,
    strategy: StrategyId,
    model_name: &str,
    preds: &[Prediction],
    golds: &[Gold],
    mode: ParseFailureMode,
) -> Result<ScoreReport> {
    let all = align(preds, golds)?;
    let kept: Vec<_> = all
        .iter()
        .copied()
        .filter(|(p, _)| !p.is_failure())
        .collect();
    let failures = all.len() - kept.len();

    let (with_failures, present_all) = compute(spec, &all)?;
    let (without, present_kept) = if kept.is_empty() {
        (spec.metrics.iter().map(|&m| (m, 0.0)).collect(), None)
    } else {
        compute(spec, &kept)?
    };

    let (values, alt_values, counts, present) = match mode {
        ParseFailureMode::CountWrong => (
            with_failures,
            without,
            ScoreCounts {
                scored: all.len(),
                parse_failures: failures,
                excluded: 0,
            },
            present_all,
        ),
        ParseFailureMode::Exclude => (
            without,
            with_failures,
            ScoreCounts {
                scored: kept.len(),
                parse_failures: failures,
                excluded: failures,
            },
            present_kept,
        ),
    };
    Ok(ScoreReport {
        task_id: spec.task_id.clone(),
        strategy,
        model_name: model_name.to_string(),
        parse_failure_mode: mode,
        values,
        alt_values,
        counts,
        macro_f1_present: present,
    })
}

/// One-decimal rendering that keeps the trailing zero.
pub fn fmt1(x: f64) -> String {
    format!("{:.1}", round1(x))
}

impl ScoreReport {
    /// Column heading such as `acc./F1`.
    pub fn slash_heading(&self) -> String {
        self.values
            .keys()
            .map(|m| m.abbreviation())
            .collect::<Vec<_>>()
            .join("/")
    }

    /// Cell such as `80.1/75.2`.
    pub fn slash_cell(&self) -> String {
        self.values
            .values()
            .map(|&v| fmt1(v))
            .collect::<Vec<_>>()
            .join("/")
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "task\tstrategy\tmodel\tmetrics\tvalue\tscored\tparse_failures\texcluded\n",
        );
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.task_id,
            self.strategy,
            self.model_name,
            self.slash_heading(),
            self.slash_cell(),
            self.counts.scored,
            self.counts.parse_failures,
            self.counts.excluded
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::builtin_task;
    use crate::parse::ParseMode;

    fn parsed(id: &str, label: Option<&str>, conf: Option<u8>) -> ParsedResponse {
        ParsedResponse {
            instance_id: id.into(),
            sample_index: 0,
            labels: label.map(Answer::single),
            confidence: conf,
            stages: None,
            parse_mode: label.map(|_| ParseMode::Strict),
            dropped_labels: 0,
            error: None,
        }
    }

    fn pred(id: &str, answer: Option<Answer>) -> Prediction {
        Prediction {
            instance_id: id.into(),
            labels: answer,
            confidence: None,
            vote_detail: None,
        }
    }

    fn single(pairs: &[(&str, Option<&str>, &str)]) -> (Vec<Prediction>, Vec<Gold>) {
        pairs
            .iter()
            .map(|(id, p, g)| {
                (
                    pred(id, p.map(Answer::single)),
                    (id.to_string(), Answer::single(*g)),
                )
            })
            .unzip()
    }

    #[test]
    fn vote_majority_and_tie() {
        let mut samples: Vec<_> = (0..6)
            .map(|_| parsed("a", Some("True"), Some(80)))
            .collect();
        samples.extend((0..4).map(|_| parsed("a", Some("False"), Some(60))));
        let p = majority_vote(&samples).unwrap();
        assert_eq!(p.labels, Some(Answer::single("True")));
        assert_eq!(
            p.vote_detail.unwrap(),
            BTreeMap::from([("True".into(), 6), ("False".into(), 4)])
        );
        assert_eq!(p.confidence, Some(72.0));

        let mut tie: Vec<_> = (0..5)
            .map(|_| parsed("b", Some("not_entailment"), None))
            .collect();
        tie.extend((0..5).map(|_| parsed("b", Some("entailment"), None)));
        assert_eq!(
            majority_vote(&tie).unwrap().labels,
            Some(Answer::single("entailment"))
        );

        let failed: Vec<_> = (0..10).map(|_| parsed("c", None, None)).collect();
        assert_eq!(
            majority_vote(&failed).unwrap_err(),
            ScoringError::NoParsableSamples("c".into())
        );
        assert!(matches!(
            majority_vote(&[parsed("a", Some("x"), None), parsed("b", Some("x"), None)]),
            Err(ScoringError::MixedInstances(_))
        ));
    }

    #[test]
    fn vote_detail_counts_only_parsed_samples() {
        let mut s: Vec<_> = (0..3).map(|_| parsed("a", Some("yes"), None)).collect();
        s.push(parsed("a", None, None));
        let p = majority_vote(&s).unwrap();
        assert_eq!(p.vote_detail.unwrap().values().sum::<u32>(), 3);
        assert_eq!(p.confidence, None);
    }

    #[test]
    fn accuracy_examples() {
        let (p, g) = single(&[
            ("1", Some("a"), "a"),
            ("2", Some("b"), "b"),
            ("3", Some("a"), "a"),
            ("4", Some("a"), "b"),
        ]);
        assert_eq!(accuracy(&p, &g).unwrap(), 75.0);
        let (p, g) = single(&[("1", None, "a"), ("2", Some("b"), "a")]);
        assert_eq!(accuracy(&p, &g).unwrap(), 0.0);
    }

    #[test]
    fn binary_f1_example() {
        let (p, g) = single(&[
            ("1", Some("+"), "+"),
            ("2", Some("-"), "+"),
            ("3", Some("+"), "-"),
            ("4", Some("-"), "-"),
        ]);
        assert_eq!(f1_binary(&p, &g, "+").unwrap(), 50.0);
        let (p, g) = single(&[("1", Some("-"), "+"), ("2", Some("-"), "-")]);
        assert_eq!(f1_binary(&p, &g, "+").unwrap(), 0.0);
    }

    #[test]
    fn multi_label_micro_example() {
        let space = builtin_task("unfair-tos").unwrap().label_space;
        let (a, b, c) = ("Arbitration", "Choice of law", "Content removal");
        let preds = vec![
            pred("1", Some(Answer::labels([a]))),
            pred("2", Some(Answer::labels([b, c]))),
            pred("3", Some(Answer::labels([c]))),
        ];
        let golds: Vec<Gold> = vec![
            ("1".into(), Answer::labels([a, b])),
            ("2".into(), Answer::labels([b])),
            ("3".into(), Answer::labels([c])),
        ];
        assert_eq!(micro_f1(&preds, &golds, &space).unwrap(), 75.0);
        // a: tp 1; b: tp 1, fn 1; c: tp 1, fp 1.
        let present = macro_f1_present(&preds, &golds, &space).unwrap();
        assert!((present - (100.0 + 200.0 / 3.0 + 200.0 / 3.0) / 3.0).abs() < 1e-9);
        let full = macro_f1(&preds, &golds, &space).unwrap();
        assert!((full - present * 3.0 / space.labels.len() as f64).abs() < 1e-9);
    }

    #[test]
    fn bio_example() {
        let tags = |s: &str| Answer::Tags(s.split(' ').map(String::from).collect());
        let preds = vec![pred("1", Some(tags("B O O O")))];
        let golds: Vec<Gold> = vec![("1".into(), tags("B I O O"))];
        assert!((bio_micro_f1(&preds, &golds).unwrap() - 200.0 / 3.0).abs() < 1e-9);

        let failed = vec![pred("1", None)];
        assert_eq!(bio_micro_f1(&failed, &golds).unwrap(), 0.0);
        let short = vec![pred("1", Some(tags("B O")))];
        assert!(matches!(
            bio_micro_f1(&short, &golds),
            Err(ScoringError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn alignment_errors() {
        assert!(matches!(
            accuracy(&[], &[]),
            Err(ScoringError::AlignmentError { .. })
        ));
        let (p, mut g) = single(&[("1", Some("a"), "a")]);
        g.push(("2".into(), Answer::single("a")));
        let err = accuracy(&p, &g).unwrap_err();
        assert_eq!(
            err,
            ScoringError::AlignmentError {
                missing: vec!["2".into()],
                extra: vec![],
                duplicate: vec![]
            }
        );
    }

    #[test]
    fn report_keys_follow_task_metrics() {
        let qqp = builtin_task("qqp").unwrap();
        let (p, g) = single(&[
            ("1", Some("True"), "True"),
            ("2", None, "False"),
            ("3", Some("True"), "False"),
        ]);
        let r = score_run(
            &qqp,
            StrategyId::Mp,
            "m",
            &p,
            &g,
            ParseFailureMode::CountWrong,
        )
        .unwrap();
        assert_eq!(
            r.values.keys().copied().collect::<Vec<_>>(),
            [MetricId::Accuracy, MetricId::F1Binary]
        );
        assert_eq!(r.values[&MetricId::Accuracy], 33.3);
        assert_eq!(r.alt_values[&MetricId::Accuracy], 50.0);
        assert_eq!(
            r.counts,
            ScoreCounts {
                scored: 3,
                parse_failures: 1,
                excluded: 0
            }
        );
        assert_eq!(r.slash_heading(), "acc./F1");
        assert_eq!(r.slash_cell(), "33.3/66.7");

        let ex = score_run(&qqp, StrategyId::Mp, "m", &p, &g, ParseFailureMode::Exclude).unwrap();
        assert_eq!(ex.values, r.alt_values);
        assert_eq!(ex.counts.excluded, 1);

        let eurlex = builtin_task("eur-lex").unwrap();
        let preds = vec![pred("1", Some(Answer::labels(["3"])))];
        let golds: Vec<Gold> = vec![("1".into(), Answer::labels(["3"]))];
        let r = score_run(
            &eurlex,
            StrategyId::Cot,
            "m",
            &preds,
            &golds,
            ParseFailureMode::CountWrong,
        )
        .unwrap();
        assert_eq!(
            r.values.keys().copied().collect::<Vec<_>>(),
            [MetricId::MicroF1, MetricId::MacroF1]
        );
        assert_eq!(r.values[&MetricId::MicroF1], 100.0);
        assert_eq!(r.values[&MetricId::MacroF1], 1.0);
        assert_eq!(r.macro_f1_present, Some(100.0));
    }

    #[test]
    fn report_json_round_trip() {
        let qnli = builtin_task("qnli").unwrap();
        let (p, g) = single(&[("1", Some("entailment"), "entailment")]);
        let r = score_run(
            &qnli,
            StrategyId::Ps,
            "m",
            &p,
            &g,
            ParseFailureMode::CountWrong,
        )
        .unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"accuracy\":100.0"));
        assert_eq!(serde_json::from_str::<ScoreReport>(&json).unwrap(), r);
    }
}
