//! Cross-run analyses: confidence calibration, model-averaged tables,
//! relative improvement of flat means and error-category distributions.
//!
//! Everything here is a pure function over finished score reports or
//! item lists, run single-threaded so rounding is bit-stable.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Benchmark, MetricId};
use crate::prompt::StrategyId;
use crate::round1;
use crate::scoring::{fmt1, ScoreReport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("group {task_id}/{strategy}: {reason}")]
    InconsistentGroup {
        task_id: String,
        strategy: StrategyId,
        reason: String,
    },
    #[error("relative improvement over a zero baseline")]
    DivisionByZero,
    #[error("no annotations fall in the partition")]
    EmptyAnnotationSet,
    #[error("empty category partition")]
    EmptyPartition,
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;

// ---------------------------------------------------------------------------
// Calibration

/// Default boundary between low and high stated confidence, in percent.
pub const DEFAULT_THRESHOLD: f64 = 75.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationItem {
    pub confidence: Option<f64>,
    pub correct: bool,
}

/// Confidence level crossed with correctness. TP is high confidence and
/// correct, FP high and wrong, TN low and wrong, FN low and correct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tp_pct: f64,
    pub fp_pct: f64,
    pub tn_pct: f64,
    pub fn_pct: f64,
    pub threshold: f64,
    pub unclassified: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationMode {
    /// All items pooled before taking percentages.
    #[default]
    Pooled,
    /// Percentages per group, then averaged across groups.
    Macro,
}

impl std::str::FromStr for CalibrationMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pooled" => Ok(Self::Pooled),
            "macro" => Ok(Self::Macro),
            other => Err(format!("unknown calibration mode `{other}`")),
        }
    }
}

fn counts(items: &[CalibrationItem], threshold: f64) -> [u64; 5] {
    let mut c = [0u64; 5];
    for item in items {
        let slot = match (item.confidence, item.correct) {
            (None, _) => 4,
            (Some(conf), true) if conf >= threshold => 0,
            (Some(conf), false) if conf >= threshold => 1,
            (Some(_), false) => 2,
            (Some(_), true) => 3,
        };
        c[slot] += 1;
    }
    c
}

fn shares(c: &[u64; 5]) -> [f64; 4] {
    let classified: u64 = c[..4].iter().sum();
    if classified == 0 {
        return [0.0; 4];
    }
    std::array::from_fn(|i| 100.0 * c[i] as f64 / classified as f64)
}

/// Items at or above `threshold` are high confidence.
pub fn calibrate(items: &[CalibrationItem], threshold: f64) -> CalibrationMatrix {
    let c = counts(items, threshold);
    matrix(c, shares(&c), threshold)
}

fn matrix(c: [u64; 5], pct: [f64; 4], threshold: f64) -> CalibrationMatrix {
    CalibrationMatrix {
        tp: c[0],
        fp: c[1],
        tn: c[2],
        fn_: c[3],
        tp_pct: round1(pct[0]),
        fp_pct: round1(pct[1]),
        tn_pct: round1(pct[2]),
        fn_pct: round1(pct[3]),
        threshold,
        unclassified: c[4],
    }
}

/// Calibration over several groups (e.g. one per model × dataset).
///
/// Counts are always pooled. In macro mode the percentages are the mean of
/// per-group percentages over groups with at least one classified item.
pub fn calibrate_groups(
    groups: &[Vec<CalibrationItem>],
    threshold: f64,
    mode: CalibrationMode,
) -> CalibrationMatrix {
    let per_group: Vec<[u64; 5]> = groups.iter().map(|g| counts(g, threshold)).collect();
    let mut pooled = [0u64; 5];
    for c in &per_group {
        for (p, x) in pooled.iter_mut().zip(c) {
            *p += x;
        }
    }
    let pct = match mode {
        CalibrationMode::Pooled => shares(&pooled),
        CalibrationMode::Macro => {
            let used: Vec<[f64; 4]> = per_group
                .iter()
                .filter(|c| c[..4].iter().sum::<u64>() > 0)
                .map(shares)
                .collect();
            if used.is_empty() {
                [0.0; 4]
            } else {
                std::array::from_fn(|i| used.iter().map(|s| s[i]).sum::<f64>() / used.len() as f64)
            }
        }
    };
    matrix(pooled, pct, threshold)
}

impl CalibrationMatrix {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("quadrant\tcount\tpercent\n");
        for (name, n, pct) in self.quadrants() {
            let _ = writeln!(out, "{name}\t{n}\t{}", fmt1(pct));
        }
        let _ = writeln!(out, "unclassified\t{}\t", self.unclassified);
        out
    }

    /// Bar heights for a four-bar chart.
    pub fn to_plot_csv(&self) -> String {
        let mut out = String::from("quadrant,percent\n");
        for (name, _, pct) in self.quadrants() {
            let _ = writeln!(out, "{name},{}", fmt1(pct));
        }
        out
    }

    fn quadrants(&self) -> [(&'static str, u64, f64); 4] {
        [
            ("TP", self.tp, self.tp_pct),
            ("FP", self.fp, self.fp_pct),
            ("TN", self.tn, self.tn_pct),
            ("FN", self.fn_, self.fn_pct),
        ]
    }
}

// ---------------------------------------------------------------------------
// Model averages

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub task_id: String,
    pub strategy: StrategyId,
    /// Mean over models, rounded to one decimal.
    pub values: IndexMap<MetricId, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateTable {
    pub models: Vec<String>,
    pub rows: Vec<AggregateRow>,
}

/// Unrounded per-metric mean of several value maps with identical keys.
pub fn mean_values(maps: &[&IndexMap<MetricId, f64>]) -> IndexMap<MetricId, f64> {
    let Some(first) = maps.first() else {
        return IndexMap::new();
    };
    first
        .keys()
        .map(|m| {
            let sum: f64 = maps.iter().map(|v| v[m]).sum();
            (*m, sum / maps.len() as f64)
        })
        .collect()
}

/// Average task × strategy groups over models.
///
/// Every group must hold exactly one report per model, drawn from the same
/// model set, with identical metric keys. Rows follow first appearance.
pub fn average_across_models(reports: &[ScoreReport]) -> Result<AggregateTable> {
    let models: BTreeSet<&str> = reports.iter().map(|r| r.model_name.as_str()).collect();
    let mut groups: IndexMap<(&str, StrategyId), Vec<&ScoreReport>> = IndexMap::new();
    for r in reports {
        groups.entry((&r.task_id, r.strategy)).or_default().push(r);
    }

    let mut rows = Vec::with_capacity(groups.len());
    for ((task_id, strategy), members) in groups {
        let bad = |reason: String| AnalysisError::InconsistentGroup {
            task_id: task_id.to_string(),
            strategy,
            reason,
        };
        let present: BTreeSet<&str> = members.iter().map(|r| r.model_name.as_str()).collect();
        if present.len() != members.len() {
            return Err(bad("a model appears more than once".into()));
        }
        if present != models {
            let missing: Vec<_> = models.difference(&present).collect();
            return Err(bad(format!("missing models {missing:?}")));
        }
        let keys: Vec<MetricId> = members[0].values.keys().copied().collect();
        for r in &members[1..] {
            if !r.values.keys().copied().eq(keys.iter().copied()) {
                return Err(bad(format!(
                    "model {} reports metrics {:?}, expected {:?}",
                    r.model_name,
                    r.values.keys().collect::<Vec<_>>(),
                    keys
                )));
            }
        }
        let maps: Vec<_> = members.iter().map(|r| &r.values).collect();
        rows.push(AggregateRow {
            task_id: task_id.to_string(),
            strategy,
            values: mean_values(&maps)
                .into_iter()
                .map(|(m, v)| (m, round1(v)))
                .collect(),
        });
    }
    Ok(AggregateTable {
        models: models.into_iter().map(String::from).collect(),
        rows,
    })
}

impl AggregateTable {
    /// Strategies as rows and tasks as columns, dual metrics slash-joined.
    pub fn to_tsv(&self) -> String {
        let mut tasks: IndexMap<&str, String> = IndexMap::new();
        let mut strategies: Vec<StrategyId> = Vec::new();
        for row in &self.rows {
            tasks.entry(&row.task_id).or_insert_with(|| {
                row.values
                    .keys()
                    .map(|m| m.abbreviation())
                    .collect::<Vec<_>>()
                    .join("/")
            });
            if !strategies.contains(&row.strategy) {
                strategies.push(row.strategy);
            }
        }
        let mut out = String::from("strategy");
        for (task, heading) in &tasks {
            let _ = write!(out, "\t{task} ({heading})");
        }
        out.push('\n');
        for strategy in strategies {
            out.push_str(strategy.as_str());
            for task in tasks.keys() {
                let cell = self
                    .rows
                    .iter()
                    .find(|r| r.task_id == *task && r.strategy == strategy)
                    .map(|r| {
                        r.values
                            .values()
                            .map(|&v| fmt1(v))
                            .collect::<Vec<_>>()
                            .join("/")
                    })
                    .unwrap_or_else(|| "-".into());
                let _ = write!(out, "\t{cell}");
            }
            out.push('\n');
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Flat means and relative improvement

/// Unweighted mean of every metric value of every task, each counted once.
pub fn flat_mean<'a>(reports: impl IntoIterator<Item = &'a ScoreReport>) -> Option<f64> {
    let values: Vec<f64> = reports
        .into_iter()
        .flat_map(|r| r.values.values().copied())
        .collect();
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// `100 × (a − b) / b`, unrounded.
pub fn relative_improvement(avg_a: f64, avg_b: f64) -> Result<f64> {
    if avg_b == 0.0 {
        return Err(AnalysisError::DivisionByZero);
    }
    Ok(100.0 * (avg_a - avg_b) / avg_b)
}

/// Strategy pairs compared in the average-performance chart: each
/// metacognitive strategy against the baselines of its shot setting.
pub const COMPARISONS: [(StrategyId, StrategyId); 4] = [
    (StrategyId::Mp, StrategyId::Cot),
    (StrategyId::Mp, StrategyId::Ps),
    (StrategyId::MMp, StrategyId::MCot),
    (StrategyId::MMp, StrategyId::CotSc),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatMeanRow {
    pub model: String,
    pub strategy: StrategyId,
    pub values: usize,
    /// Flat mean rounded to one decimal, as charted.
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub model: String,
    pub strategy: StrategyId,
    pub baseline: StrategyId,
    /// Percent, unrounded.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub means: Vec<FlatMeanRow>,
    pub improvements: Vec<Improvement>,
}

/// Flat means per model × strategy and the relative improvement for each
/// comparison whose two strategies are both present for a model.
///
/// Means are rounded to one decimal before the ratio is taken, so the
/// improvements are those of the charted bar heights.
pub fn improvement_report(reports: &[ScoreReport]) -> Result<ImprovementReport> {
    let mut cells: IndexMap<(&str, StrategyId), Vec<&ScoreReport>> = IndexMap::new();
    for r in reports {
        cells
            .entry((&r.model_name, r.strategy))
            .or_default()
            .push(r);
    }
    let means: Vec<FlatMeanRow> = cells
        .iter()
        .map(|(&(model, strategy), rs)| FlatMeanRow {
            model: model.to_string(),
            strategy,
            values: rs.iter().map(|r| r.values.len()).sum(),
            mean: round1(flat_mean(rs.iter().copied()).unwrap_or(0.0)),
        })
        .collect();
    let lookup = |model: &str, s: StrategyId| {
        means
            .iter()
            .find(|m| m.model == model && m.strategy == s)
            .map(|m| m.mean)
    };
    let models: Vec<&str> = {
        let mut seen = Vec::new();
        for m in &means {
            if !seen.contains(&m.model.as_str()) {
                seen.push(m.model.as_str());
            }
        }
        seen
    };
    let mut improvements = Vec::new();
    for model in models {
        for (a, b) in COMPARISONS {
            if let (Some(x), Some(y)) = (lookup(model, a), lookup(model, b)) {
                improvements.push(Improvement {
                    model: model.to_string(),
                    strategy: a,
                    baseline: b,
                    relative: relative_improvement(x, y)?,
                });
            }
        }
    }
    Ok(ImprovementReport {
        means,
        improvements,
    })
}

impl ImprovementReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("model\tstrategy\tvalues\tflat_mean\n");
        for m in &self.means {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                m.model,
                m.strategy,
                m.values,
                fmt1(m.mean)
            );
        }
        out.push_str("\nmodel\tstrategy\tbaseline\trelative_improvement_pct\n");
        for i in &self.improvements {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.2}",
                i.model, i.strategy, i.baseline, i.relative
            );
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Error categories

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCategory {
    Overthinking,
    Overcorrection,
    TerminologicalMisalignment,
    ClinicalInferenceDiscrepancy,
    StatutoryInterpretationError,
    JurisprudentialAnalysisDeviation,
    Other,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 7] = [
        ErrorCategory::Overthinking,
        ErrorCategory::Overcorrection,
        ErrorCategory::TerminologicalMisalignment,
        ErrorCategory::ClinicalInferenceDiscrepancy,
        ErrorCategory::StatutoryInterpretationError,
        ErrorCategory::JurisprudentialAnalysisDeviation,
        ErrorCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Overthinking => "overthinking",
            ErrorCategory::Overcorrection => "overcorrection",
            ErrorCategory::TerminologicalMisalignment => "terminological-misalignment",
            ErrorCategory::ClinicalInferenceDiscrepancy => "clinical-inference-discrepancy",
            ErrorCategory::StatutoryInterpretationError => "statutory-interpretation-error",
            ErrorCategory::JurisprudentialAnalysisDeviation => "jurisprudential-analysis-deviation",
            ErrorCategory::Other => "other",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Domain groupings of the error vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorPartition {
    General,
    Biomedical,
    Legal,
}

impl ErrorPartition {
    pub fn categories(self) -> &'static [ErrorCategory] {
        use ErrorCategory::*;
        match self {
            ErrorPartition::General => &[Overthinking, Overcorrection],
            ErrorPartition::Biomedical => {
                &[TerminologicalMisalignment, ClinicalInferenceDiscrepancy]
            }
            ErrorPartition::Legal => &[
                StatutoryInterpretationError,
                JurisprudentialAnalysisDeviation,
            ],
        }
    }

    /// Whether annotations on a task from `benchmark` count toward this
    /// partition. The general vocabulary covers every task; the domain
    /// ones cover BLUE (biomedical) and LexGLUE (legal) tasks.
    pub fn applies_to(self, benchmark: Benchmark) -> bool {
        match self {
            ErrorPartition::General => true,
            ErrorPartition::Biomedical => benchmark == Benchmark::Blue,
            ErrorPartition::Legal => benchmark == Benchmark::LexGlue,
        }
    }
}

impl std::str::FromStr for ErrorPartition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "general" => Ok(Self::General),
            "biomedical" => Ok(Self::Biomedical),
            "legal" => Ok(Self::Legal),
            other => Err(format!("unknown error partition `{other}`")),
        }
    }
}

/// A human judgement about why one prediction went wrong.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorAnnotation {
    pub instance_id: String,
    pub run_id: String,
    pub category: ErrorCategory,
    #[serde(default)]
    pub note: String,
}

/// Share of each partition category among annotations in the partition.
/// Annotations outside the partition are ignored.
pub fn error_distribution(
    annotations: &[ErrorAnnotation],
    partition: &[ErrorCategory],
) -> Result<IndexMap<ErrorCategory, f64>> {
    if partition.is_empty() {
        return Err(AnalysisError::EmptyPartition);
    }
    let mut counts: IndexMap<ErrorCategory, u64> = partition.iter().map(|&c| (c, 0)).collect();
    for a in annotations {
        if let Some(n) = counts.get_mut(&a.category) {
            *n += 1;
        }
    }
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Err(AnalysisError::EmptyAnnotationSet);
    }
    Ok(counts
        .into_iter()
        .map(|(c, n)| (c, round1(100.0 * n as f64 / total as f64)))
        .collect())
}

pub fn distribution_tsv(dist: &IndexMap<ErrorCategory, f64>) -> String {
    let mut out = String::from("category\tpercent\n");
    for (c, p) in dist {
        let _ = writeln!(out, "{c}\t{}", fmt1(*p));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{ParseFailureMode, ScoreCounts};
    use proptest::prelude::*;

    fn items(spec: &[(Option<f64>, bool, usize)]) -> Vec<CalibrationItem> {
        spec.iter()
            .flat_map(|&(confidence, correct, n)| {
                std::iter::repeat_n(
                    CalibrationItem {
                        confidence,
                        correct,
                    },
                    n,
                )
            })
            .collect()
    }

    fn report(
        model: &str,
        task: &str,
        strategy: StrategyId,
        values: &[(MetricId, f64)],
    ) -> ScoreReport {
        ScoreReport {
            task_id: task.into(),
            strategy,
            model_name: model.into(),
            parse_failure_mode: ParseFailureMode::CountWrong,
            values: values.iter().copied().collect(),
            alt_values: IndexMap::new(),
            counts: ScoreCounts::default(),
            macro_f1_present: None,
        }
    }

    #[test]
    fn calibration_quadrants() {
        let m = calibrate(
            &items(&[
                (Some(90.0), true, 556),
                (Some(80.0), false, 325),
                (Some(40.0), false, 68),
                (Some(60.0), true, 51),
            ]),
            DEFAULT_THRESHOLD,
        );
        assert_eq!(
            (m.tp_pct, m.fp_pct, m.tn_pct, m.fn_pct),
            (55.6, 32.5, 6.8, 5.1)
        );

        let m = calibrate(&items(&[(Some(75.0), true, 3)]), DEFAULT_THRESHOLD);
        assert_eq!(
            (m.tp, m.tp_pct, m.fp_pct, m.tn_pct, m.fn_pct),
            (3, 100.0, 0.0, 0.0, 0.0)
        );

        let m = calibrate(&items(&[(None, true, 4)]), DEFAULT_THRESHOLD);
        assert_eq!((m.tp + m.fp + m.tn + m.fn_, m.unclassified), (0, 4));
    }

    #[test]
    fn macro_calibration_averages_groups() {
        let a = items(&[(Some(90.0), true, 1)]);
        let b = items(&[(Some(10.0), false, 3)]);
        let pooled = calibrate_groups(&[a.clone(), b.clone()], 75.0, CalibrationMode::Pooled);
        assert_eq!((pooled.tp_pct, pooled.tn_pct), (25.0, 75.0));
        let mac = calibrate_groups(&[a, b, vec![]], 75.0, CalibrationMode::Macro);
        assert_eq!((mac.tp_pct, mac.tn_pct), (50.0, 50.0));
        assert_eq!((mac.tp, mac.tn), (1, 3));
    }

    #[test]
    fn averages_over_models() {
        let reports: Vec<_> = [("a", 89.5), ("b", 89.9), ("c", 90.3), ("d", 95.0)]
            .iter()
            .map(|&(m, v)| report(m, "qnli", StrategyId::Cot, &[(MetricId::Accuracy, v)]))
            .collect();
        let t = average_across_models(&reports).unwrap();
        assert_eq!(t.rows[0].values[&MetricId::Accuracy], 91.2);

        let single = average_across_models(&reports[..1]).unwrap();
        assert_eq!(single.rows[0].values[&MetricId::Accuracy], 89.5);

        let mut gap = reports.clone();
        gap.push(report(
            "a",
            "wic",
            StrategyId::Cot,
            &[(MetricId::Accuracy, 1.0)],
        ));
        assert!(matches!(
            average_across_models(&gap),
            Err(AnalysisError::InconsistentGroup { .. })
        ));
        let mut keys = reports.clone();
        keys[2].values = [(MetricId::MicroF1, 90.3)].into_iter().collect();
        assert!(average_across_models(&keys).is_err());
    }

    #[test]
    fn improvement_basics() {
        assert_eq!(relative_improvement(70.0, 70.0).unwrap(), 0.0);
        assert_eq!(
            relative_improvement(1.0, 0.0),
            Err(AnalysisError::DivisionByZero)
        );
        let reports = vec![
            report("m", "t", StrategyId::Mp, &[(MetricId::Accuracy, 84.0)]),
            report("m", "t", StrategyId::Cot, &[(MetricId::Accuracy, 80.0)]),
        ];
        let r = improvement_report(&reports).unwrap();
        assert_eq!(r.improvements.len(), 1);
        assert!((r.improvements[0].relative - 5.0).abs() < 1e-12);
    }

    #[test]
    fn error_shares() {
        let ann = |c: ErrorCategory, n: usize| {
            (0..n).map(move |i| ErrorAnnotation {
                instance_id: format!("{c}-{i}"),
                run_id: "r".into(),
                category: c,
                note: String::new(),
            })
        };
        let general: Vec<_> = ann(ErrorCategory::Overthinking, 41)
            .chain(ann(ErrorCategory::Overcorrection, 19))
            .chain(ann(ErrorCategory::Other, 5))
            .collect();
        let d = error_distribution(&general, ErrorPartition::General.categories()).unwrap();
        assert_eq!(d.values().copied().collect::<Vec<_>>(), [68.3, 31.7]);

        let one: Vec<_> = ann(ErrorCategory::Overthinking, 3).collect();
        let d = error_distribution(&one, &[ErrorCategory::Overthinking]).unwrap();
        assert_eq!(d[&ErrorCategory::Overthinking], 100.0);

        assert_eq!(
            error_distribution(&one, ErrorPartition::Legal.categories()),
            Err(AnalysisError::EmptyAnnotationSet)
        );
        assert_eq!(
            error_distribution(&one, &[]),
            Err(AnalysisError::EmptyPartition)
        );
    }

    fn arb_items() -> impl Strategy<Value = Vec<CalibrationItem>> {
        proptest::collection::vec(
            (
                proptest::option::weighted(0.9, 0.0f64..=100.0),
                any::<bool>(),
            )
                .prop_map(|(confidence, correct)| CalibrationItem {
                    confidence,
                    correct,
                }),
            0..300,
        )
    }

    #[test]
    fn partitions_follow_benchmarks() {
        use Benchmark::*;
        for b in [Glue, SuperGlue, Blue, LexGlue] {
            assert!(ErrorPartition::General.applies_to(b));
        }
        assert!(ErrorPartition::Biomedical.applies_to(Blue));
        assert!(!ErrorPartition::Biomedical.applies_to(LexGlue));
        assert!(ErrorPartition::Legal.applies_to(LexGlue));
        assert!(!ErrorPartition::Legal.applies_to(Glue));
    }

    proptest! {
        #[test]
        fn calibration_percentages_sum_to_100(items in arb_items(), threshold in 0.0f64..=100.0) {
            let m = calibrate(&items, threshold);
            let classified = m.tp + m.fp + m.tn + m.fn_;
            prop_assert_eq!(classified + m.unclassified, items.len() as u64);
            if classified > 0 {
                let sum = m.tp_pct + m.fp_pct + m.tn_pct + m.fn_pct;
                prop_assert!((sum - 100.0).abs() <= 0.1 + 1e-9, "{}", sum);
            }
        }

        #[test]
        fn raising_threshold_never_adds_high(items in arb_items(), a in 0.0f64..=100.0, b in 0.0f64..=100.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let m_lo = calibrate(&items, lo);
            let m_hi = calibrate(&items, hi);
            prop_assert!(m_hi.tp + m_hi.fp <= m_lo.tp + m_lo.fp);
        }

        #[test]
        fn improvement_antisymmetry(a in 1.0f64..100.0, b in 1.0f64..100.0) {
            let ab = relative_improvement(a, b).unwrap();
            let ba = relative_improvement(b, a).unwrap();
            // 100(a-b)/b = -100(b-a)/a * a/b
            prop_assert!((ab + ba * a / b).abs() < 1e-9 * ab.abs().max(1.0));
        }

        #[test]
        fn averaging_is_order_free_and_linear(
            vals in proptest::collection::vec(0.0f64..100.0, 1..6),
            scale in 0.1f64..2.0,
            rot in 0usize..6,
        ) {
            let maps: Vec<IndexMap<MetricId, f64>> =
                vals.iter().map(|&v| [(MetricId::Accuracy, v)].into_iter().collect()).collect();
            let refs: Vec<_> = maps.iter().collect();
            let mean = mean_values(&refs)[&MetricId::Accuracy];

            let mut rotated = refs.clone();
            rotated.rotate_left(rot % refs.len());
            prop_assert!((mean_values(&rotated)[&MetricId::Accuracy] - mean).abs() < 1e-9);

            let scaled: Vec<IndexMap<MetricId, f64>> =
                vals.iter().map(|&v| [(MetricId::Accuracy, v * scale)].into_iter().collect()).collect();
            let srefs: Vec<_> = scaled.iter().collect();
            prop_assert!((mean_values(&srefs)[&MetricId::Accuracy] - mean * scale).abs() < 1e-9);
        }
    }
}
