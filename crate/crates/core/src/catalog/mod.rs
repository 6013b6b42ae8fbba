//! Declarative task descriptions, dataset loading and seeded subset draws.
//!
//! Each task is described by a [`TaskSpec`] read from a TOML file. The ten
//! built-in specs live under `tasks/` and are compiled into the crate; a run
//! may point at its own task file instead, so adding a task needs no rebuild.

mod dataset;
mod sampling;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{load_dataset, load_instances, save_instances, DatasetFormat};
pub use sampling::{sample_eval_subset, select_exemplars, SeededRng};

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("invalid task spec `{task}`: {reason}")]
    InvalidSpec { task: String, reason: String },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("failed to parse task file {path}: {source}")]
    TaskFile {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: label `{label}` is not in the label space of `{task}`")]
    UnknownLabel {
        line: usize,
        label: String,
        task: String,
    },
    #[error("line {line}: missing slot `{slot}` (field `{field}`)")]
    MissingSlot {
        line: usize,
        slot: String,
        field: String,
    },
    #[error("requested {requested} instances but only {available} are available")]
    SubsetTooLarge { requested: usize, available: usize },
    #[error("no worked answer for exemplar instance `{0}`")]
    MissingWorkedAnswer(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CatalogError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Benchmark {
    #[serde(rename = "GLUE")]
    Glue,
    #[serde(rename = "SuperGLUE")]
    SuperGlue,
    #[serde(rename = "BLUE")]
    Blue,
    #[serde(rename = "LexGLUE")]
    LexGlue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "pair-classification")]
    PairClassification,
    #[serde(rename = "QA")]
    Qa,
    #[serde(rename = "WSD")]
    Wsd,
    #[serde(rename = "NLI")]
    Nli,
    #[serde(rename = "NER")]
    Ner,
    #[serde(rename = "RE")]
    Re,
    #[serde(rename = "multi-class")]
    MultiClass,
    #[serde(rename = "multi-label")]
    MultiLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelKind {
    Binary,
    MultiClass,
    MultiLabel,
    TagSequence,
}

/// Metric identifiers as bound in task files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricId {
    #[serde(rename = "accuracy")]
    Accuracy,
    #[serde(rename = "f1-binary")]
    F1Binary,
    #[serde(rename = "micro-f1")]
    MicroF1,
    #[serde(rename = "macro-f1")]
    MacroF1,
    #[serde(rename = "bio-micro-f1")]
    BioMicroF1,
}

impl MetricId {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::Accuracy => "accuracy",
            MetricId::F1Binary => "f1-binary",
            MetricId::MicroF1 => "micro-f1",
            MetricId::MacroF1 => "macro-f1",
            MetricId::BioMicroF1 => "bio-micro-f1",
        }
    }

    /// Short column heading used in result tables.
    pub fn abbreviation(self) -> &'static str {
        match self {
            MetricId::Accuracy => "acc.",
            MetricId::F1Binary => "F1",
            MetricId::MicroF1 | MetricId::BioMicroF1 => "µ-F1",
            MetricId::MacroF1 => "m-F1",
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MetricId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "accuracy" => MetricId::Accuracy,
            "f1-binary" => MetricId::F1Binary,
            "micro-f1" => MetricId::MicroF1,
            "macro-f1" => MetricId::MacroF1,
            "bio-micro-f1" => MetricId::BioMicroF1,
            other => return Err(format!("unknown metric `{other}`")),
        })
    }
}

/// Canonical comparison form of a label: surrounding whitespace, quotes and
/// emphasis markers removed, trailing punctuation stripped, case-folded.
pub fn normalize_label(raw: &str) -> String {
    const WRAPPERS: &[char] = &[
        '"', '\'', '“', '”', '‘', '’', '`', '*', '[', ']', '(', ')', '{', '}', '<', '>',
    ];
    const TRAILING: &[char] = &['.', ',', ';', ':', '!', '?'];
    let mut s = raw.trim();
    loop {
        let next = s
            .trim_end_matches(TRAILING)
            .trim()
            .trim_matches(WRAPPERS)
            .trim();
        if next == s {
            break;
        }
        s = next;
    }
    s.to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    pub kind: LabelKind,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub none_label: Option<String>,
}

impl LabelSpace {
    /// Look up the canonical spelling of a label, tolerant of casing and
    /// punctuation.
    pub fn canonical(&self, raw: &str) -> Option<&str> {
        let needle = normalize_label(raw);
        if needle.is_empty() {
            return None;
        }
        self.labels
            .iter()
            .find(|l| normalize_label(l) == needle)
            .map(String::as_str)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    pub fn is_multi_label(&self) -> bool {
        self.kind == LabelKind::MultiLabel
    }

    pub fn is_tag_sequence(&self) -> bool {
        self.kind == LabelKind::TagSequence
    }

    fn validate(&self, task: &str) -> Result<()> {
        let invalid = |reason: String| CatalogError::InvalidSpec {
            task: task.to_string(),
            reason,
        };
        if self.labels.is_empty() {
            return Err(invalid("label space is empty".into()));
        }
        let mut seen = HashSet::new();
        for label in &self.labels {
            let norm = normalize_label(label);
            if norm.is_empty() {
                return Err(invalid(format!("label `{label}` normalizes to nothing")));
            }
            if !seen.insert(norm) {
                return Err(invalid(format!("duplicate label `{label}`")));
            }
        }
        if let Some(none) = &self.none_label {
            if !self.contains(none) {
                return Err(invalid(format!(
                    "none_label `{none}` is not a member of labels"
                )));
            }
        }
        if self.kind == LabelKind::Binary && self.labels.len() != 2 {
            return Err(invalid(
                "binary label space needs exactly two labels".into(),
            ));
        }
        Ok(())
    }
}

/// Final-answer sentence the model is asked to produce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractSpec {
    /// Sentence frame with a single `{}` hole, e.g. `The status is {}`.
    pub frame: String,
    #[serde(default = "default_list_separator")]
    pub list_separator: String,
}

fn default_list_separator() -> String {
    ", ".to_string()
}

/// Binds dataset columns to template slots and the gold label.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FieldMapping {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_field: Option<String>,
    pub gold_field: String,
    /// Raw gold value (as text) to canonical label, for integer-coded datasets.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub gold_map: BTreeMap<String, String>,
    /// Separator for list-valued gold cells in TSV files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_separator: Option<String>,
    /// Template slot name to dataset column.
    pub slots: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    /// Display name, as printed in result tables.
    pub name: String,
    pub benchmark: Benchmark,
    pub task_kind: TaskKind,
    #[serde(default)]
    pub domain: String,
    pub metrics: Vec<MetricId>,
    /// Positive class for `f1-binary`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_label: Option<String>,
    pub template_slots: Vec<String>,
    /// Slot whose whitespace-separated tokens align with tag sequences.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_slot: Option<String>,
    pub label_space: LabelSpace,
    pub contract: ContractSpec,
    pub dataset: FieldMapping,
}

impl TaskSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: TaskSpec = toml::from_str(text).map_err(|source| CatalogError::TaskFile {
            path: "<inline>".into(),
            source,
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let spec: TaskSpec = toml::from_str(&text).map_err(|source| CatalogError::TaskFile {
            path: path.display().to_string(),
            source,
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| CatalogError::InvalidSpec {
            task: self.task_id.clone(),
            reason,
        };
        if self.metrics.is_empty() {
            return Err(invalid("no metrics bound".into()));
        }
        self.label_space.validate(&self.task_id)?;

        let expected_kind_ok = match self.task_kind {
            TaskKind::Ner => self.label_space.kind == LabelKind::TagSequence,
            TaskKind::MultiLabel => self.label_space.kind == LabelKind::MultiLabel,
            _ => matches!(
                self.label_space.kind,
                LabelKind::Binary | LabelKind::MultiClass
            ),
        };
        if !expected_kind_ok {
            return Err(invalid(format!(
                "label kind {:?} does not fit task kind {:?}",
                self.label_space.kind, self.task_kind
            )));
        }

        if self.metrics.contains(&MetricId::F1Binary) {
            match &self.positive_label {
                Some(p) if self.label_space.contains(p) => {}
                Some(p) => return Err(invalid(format!("positive label `{p}` not in label space"))),
                None => return Err(invalid("f1-binary requires positive_label".into())),
            }
        }
        if self.metrics.contains(&MetricId::BioMicroF1) != self.label_space.is_tag_sequence() {
            return Err(invalid(
                "bio-micro-f1 is bound exactly to tag-sequence tasks".into(),
            ));
        }
        if self.label_space.is_tag_sequence() {
            match &self.token_slot {
                Some(slot) if self.template_slots.contains(slot) => {}
                _ => {
                    return Err(invalid(
                        "tag-sequence task needs a token_slot among template_slots".into(),
                    ))
                }
            }
        }

        if self.contract.frame.matches("{}").count() != 1 {
            return Err(invalid(
                "contract frame must contain exactly one `{}` hole".into(),
            ));
        }

        let slots: BTreeSet<_> = self.template_slots.iter().collect();
        if slots.len() != self.template_slots.len() {
            return Err(invalid("duplicate template slot".into()));
        }
        let mapped: BTreeSet<_> = self.dataset.slots.keys().collect();
        if mapped != slots {
            return Err(invalid(
                "dataset slot mapping must bind exactly the template slots".into(),
            ));
        }
        for label in self.dataset.gold_map.values() {
            if !self.label_space.contains(label) {
                return Err(invalid(format!(
                    "gold_map target `{label}` not in label space"
                )));
            }
        }
        Ok(())
    }

    /// Digest of the spec's canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("task spec serializes");
        crate::digest_hex(&json)
    }
}

/// Gold or predicted answer: a label set, or a token-aligned tag list.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Labels(BTreeSet<String>),
    Tags(Vec<String>),
}

impl Answer {
    pub fn single(label: impl Into<String>) -> Self {
        Answer::Labels(BTreeSet::from([label.into()]))
    }

    pub fn labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Answer::Labels(labels.into_iter().map(Into::into).collect())
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Answer::Labels(set) => set.is_empty(),
            Answer::Tags(tags) => tags.is_empty(),
        }
    }

    pub fn as_labels(&self) -> Option<&BTreeSet<String>> {
        match self {
            Answer::Labels(set) => Some(set),
            Answer::Tags(_) => None,
        }
    }

    pub fn as_tags(&self) -> Option<&[String]> {
        match self {
            Answer::Tags(tags) => Some(tags),
            Answer::Labels(_) => None,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Labels(set) => {
                let parts: Vec<&str> = set.iter().map(String::as_str).collect();
                f.write_str(&parts.join(", "))
            }
            Answer::Tags(tags) => f.write_str(&tags.join(" ")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub instance_id: String,
    pub slot_values: BTreeMap<String, String>,
    pub gold: Answer,
}

impl Instance {
    /// Tokens of the task's token slot, for tag-sequence tasks.
    pub fn tokens<'a>(&'a self, spec: &TaskSpec) -> Option<Vec<&'a str>> {
        let slot = spec.token_slot.as_ref()?;
        Some(self.slot_values.get(slot)?.split_whitespace().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub instance: Instance,
    pub worked_answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub task_id: String,
    pub exemplars: Vec<Exemplar>,
}

impl ExemplarSet {
    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }
}

const BUILTIN_TASK_FILES: [(&str, &str); 10] = [
    ("qqp", include_str!("../../tasks/qqp.toml")),
    ("qnli", include_str!("../../tasks/qnli.toml")),
    ("boolq", include_str!("../../tasks/boolq.toml")),
    ("wic", include_str!("../../tasks/wic.toml")),
    ("bc5cdr-chem", include_str!("../../tasks/bc5cdr-chem.toml")),
    ("ddi", include_str!("../../tasks/ddi.toml")),
    ("mednli", include_str!("../../tasks/mednli.toml")),
    ("eur-lex", include_str!("../../tasks/eur-lex.toml")),
    ("ledgar", include_str!("../../tasks/ledgar.toml")),
    ("unfair-tos", include_str!("../../tasks/unfair-tos.toml")),
];

/// The ten built-in tasks, in result-table column order.
pub fn builtin_catalog() -> Vec<TaskSpec> {
    BUILTIN_TASK_FILES
        .iter()
        .map(|(id, text)| {
            TaskSpec::from_toml_str(text)
                .unwrap_or_else(|e| panic!("built-in task file `{id}` is invalid: {e}"))
        })
        .collect()
}

pub fn builtin_task(task_id: &str) -> Result<TaskSpec> {
    builtin_catalog()
        .into_iter()
        .find(|t| t.task_id == task_id)
        .ok_or_else(|| CatalogError::UnknownTask(task_id.to_string()))
}

/// Digest over the whole built-in catalog.
pub fn catalog_digest(specs: &[TaskSpec]) -> String {
    let json = serde_json::to_vec(specs).expect("catalog serializes");
    crate::digest_hex(&json)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task<'a>(catalog: &'a [TaskSpec], id: &str) -> &'a TaskSpec {
        catalog.iter().find(|t| t.task_id == id).unwrap()
    }

    #[test]
    fn catalog_has_ten_tasks_in_table_order() {
        let catalog = builtin_catalog();
        let names: Vec<_> = catalog.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "QQP",
                "QNLI",
                "BoolQ",
                "WiC",
                "BC5CDR-chem",
                "DDI",
                "MedNLI",
                "EUR-LEX",
                "LEDGAR",
                "UNFAIR-ToS"
            ]
        );
    }

    #[test]
    fn catalog_rows_match_dataset_overview() {
        let c = builtin_catalog();
        let qqp = task(&c, "qqp");
        assert_eq!(qqp.metrics, [MetricId::Accuracy, MetricId::F1Binary]);
        assert_eq!(qqp.benchmark, Benchmark::Glue);

        let ddi = task(&c, "ddi");
        assert_eq!(
            ddi.label_space.labels,
            ["Advice", "Effect", "Mechanism", "Int"]
        );
        assert_eq!(ddi.metrics, [MetricId::MacroF1]);

        let unfair = task(&c, "unfair-tos");
        assert_eq!(unfair.label_space.labels.len(), 9);
        assert_eq!(unfair.label_space.none_label.as_deref(), Some("none"));
        assert_eq!(unfair.metrics, [MetricId::MicroF1, MetricId::MacroF1]);

        let expected_classes = [
            ("qqp", 2),
            ("qnli", 2),
            ("boolq", 2),
            ("wic", 2),
            ("bc5cdr-chem", 3),
            ("ddi", 4),
            ("mednli", 3),
            ("eur-lex", 100),
            ("ledgar", 100),
        ];
        for (id, n) in expected_classes {
            assert_eq!(task(&c, id).label_space.labels.len(), n, "{id}");
        }

        let multi_label: Vec<_> = c
            .iter()
            .filter(|t| t.label_space.is_multi_label())
            .map(|t| t.task_id.as_str())
            .collect();
        assert_eq!(multi_label, ["eur-lex", "unfair-tos"]);
    }

    #[test]
    fn catalog_is_stable() {
        assert_eq!(builtin_catalog(), builtin_catalog());
        assert_eq!(
            catalog_digest(&builtin_catalog()),
            catalog_digest(&builtin_catalog())
        );
    }

    #[test]
    fn normalization_strips_decoration() {
        assert_eq!(normalize_label("  False. "), "false");
        assert_eq!(normalize_label("“Effect”."), "effect");
        assert_eq!(normalize_label("**not_entailment**"), "not_entailment");
        assert_eq!(normalize_label("(yes)"), "yes");
        assert_eq!(
            normalize_label("Anti-Corruption Laws;"),
            "anti-corruption laws"
        );
    }

    #[test]
    fn canonical_lookup_returns_stored_spelling() {
        let c = builtin_catalog();
        let wic = task(&c, "wic");
        assert_eq!(wic.label_space.canonical("true"), Some("True"));
        assert_eq!(wic.label_space.canonical("Maybe"), None);
        let qnli = task(&c, "qnli");
        assert_eq!(
            qnli.label_space.canonical("NOT_ENTAILMENT."),
            Some("not_entailment")
        );
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = builtin_task("wic").unwrap();
        spec.metrics.clear();
        assert!(spec.validate().is_err());

        let mut spec = builtin_task("unfair-tos").unwrap();
        spec.label_space.none_label = Some("nothing".into());
        assert!(spec.validate().is_err());

        let mut spec = builtin_task("wic").unwrap();
        spec.label_space.labels.push("true".into());
        assert!(spec.validate().is_err());

        let mut spec = builtin_task("wic").unwrap();
        spec.label_space.kind = LabelKind::MultiLabel;
        assert!(spec.validate().is_err());

        let mut spec = builtin_task("qnli").unwrap();
        spec.contract.frame = "The status is".into();
        assert!(spec.validate().is_err());
    }
}
