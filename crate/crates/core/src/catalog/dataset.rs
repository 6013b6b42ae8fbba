use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Answer, CatalogError, Instance, LabelKind, Result, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Jsonl,
    Tsv,
    /// Instances as written by [`save_instances`].
    Native,
}

impl std::str::FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(DatasetFormat::Jsonl),
            "tsv" => Ok(DatasetFormat::Tsv),
            "native" => Ok(DatasetFormat::Native),
            other => Err(format!("unknown dataset format `{other}`")),
        }
    }
}

/// A raw cell value, before field mapping.
enum Cell {
    Scalar(String),
    List(Vec<String>),
}

/// Load a dataset file, binding its columns to the task's template slots and
/// gold label through the spec's field mapping. Record order is preserved.
pub fn load_dataset(
    path: impl AsRef<Path>,
    format: DatasetFormat,
    spec: &TaskSpec,
    split: &str,
) -> Result<Vec<Instance>> {
    if format == DatasetFormat::Native {
        return load_instances(path, spec);
    }
    let reader = BufReader::new(File::open(path)?);
    let records = match format {
        DatasetFormat::Jsonl => read_jsonl_records(reader)?,
        DatasetFormat::Tsv => read_tsv_records(reader, spec)?,
        DatasetFormat::Native => unreachable!("handled above"),
    };

    let mut seen = HashSet::new();
    let mut instances = Vec::with_capacity(records.len());
    for (line, record) in records {
        let instance = build_instance(spec, split, line, record)?;
        if !seen.insert(instance.instance_id.clone()) {
            return Err(CatalogError::MalformedRecord {
                line,
                reason: format!("duplicate instance id `{}`", instance.instance_id),
            });
        }
        instances.push(instance);
    }
    Ok(instances)
}

fn read_jsonl_records(reader: impl BufRead) -> Result<Vec<(usize, BTreeMap<String, Cell>)>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(&line).map_err(|e| CatalogError::MalformedRecord {
                line: line_no,
                reason: e.to_string(),
            })?;
        let Value::Object(map) = value else {
            return Err(CatalogError::MalformedRecord {
                line: line_no,
                reason: "record is not a JSON object".into(),
            });
        };
        let mut record = BTreeMap::new();
        for (key, value) in map {
            if let Some(cell) = json_cell(&value) {
                record.insert(key, cell);
            }
        }
        out.push((line_no, record));
    }
    Ok(out)
}

fn json_scalar(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn json_cell(value: &Value) -> Option<Cell> {
    match value {
        Value::Array(items) => Some(Cell::List(items.iter().filter_map(json_scalar).collect())),
        Value::Null | Value::Object(_) => None,
        scalar => json_scalar(scalar).map(Cell::Scalar),
    }
}

fn read_tsv_records(
    reader: impl BufRead,
    spec: &TaskSpec,
) -> Result<Vec<(usize, BTreeMap<String, Cell>)>> {
    let mut lines = reader.lines().enumerate();
    let header: Vec<String> = loop {
        match lines.next() {
            Some((_, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line.split('\t').map(|h| h.trim().to_string()).collect();
                }
            }
            None => return Ok(Vec::new()),
        }
    };

    let gold_field = &spec.dataset.gold_field;
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != header.len() {
            return Err(CatalogError::MalformedRecord {
                line: line_no,
                reason: format!("expected {} columns, found {}", header.len(), cells.len()),
            });
        }
        let mut record = BTreeMap::new();
        for (name, cell) in header.iter().zip(cells) {
            let value = if name == gold_field {
                split_gold_cell(cell, spec)
            } else {
                Cell::Scalar(cell.to_string())
            };
            record.insert(name.clone(), value);
        }
        out.push((line_no, record));
    }
    Ok(out)
}

fn split_gold_cell(cell: &str, spec: &TaskSpec) -> Cell {
    match spec.label_space.kind {
        LabelKind::TagSequence => Cell::List(match &spec.dataset.gold_separator {
            Some(sep) => cell
                .split(sep.as_str())
                .map(|t| t.trim().to_string())
                .collect(),
            None => cell.split_whitespace().map(str::to_string).collect(),
        }),
        LabelKind::MultiLabel => {
            let sep = spec.dataset.gold_separator.as_deref().unwrap_or(",");
            Cell::List(
                cell.split(sep)
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(str::to_string)
                    .collect(),
            )
        }
        _ => Cell::Scalar(cell.to_string()),
    }
}

fn build_instance(
    spec: &TaskSpec,
    split: &str,
    line: usize,
    mut record: BTreeMap<String, Cell>,
) -> Result<Instance> {
    let mapping = &spec.dataset;

    let instance_id = match &mapping.id_field {
        Some(field) => match record.get(field) {
            Some(Cell::Scalar(id)) => id.clone(),
            _ => {
                return Err(CatalogError::MalformedRecord {
                    line,
                    reason: format!("missing id field `{field}`"),
                })
            }
        },
        None => format!("{split}-{line}"),
    };

    let mut slot_values = BTreeMap::new();
    for slot in &spec.template_slots {
        let field = &mapping.slots[slot];
        let text = match record.get(field) {
            Some(Cell::Scalar(s)) => s.clone(),
            Some(Cell::List(items)) => items.join(" "),
            None => {
                return Err(CatalogError::MissingSlot {
                    line,
                    slot: slot.clone(),
                    field: field.clone(),
                })
            }
        };
        slot_values.insert(slot.clone(), text);
    }

    let raw_gold =
        record
            .remove(&mapping.gold_field)
            .ok_or_else(|| CatalogError::MalformedRecord {
                line,
                reason: format!("missing gold field `{}`", mapping.gold_field),
            })?;
    let resolve = |raw: &str| -> Result<String> {
        let mapped = mapping.gold_map.get(raw).map(String::as_str).unwrap_or(raw);
        spec.label_space
            .canonical(mapped)
            .map(str::to_string)
            .ok_or_else(|| CatalogError::UnknownLabel {
                line,
                label: raw.to_string(),
                task: spec.task_id.clone(),
            })
    };

    let gold = match spec.label_space.kind {
        LabelKind::Binary | LabelKind::MultiClass => {
            let raw = match raw_gold {
                Cell::Scalar(s) => s,
                Cell::List(mut items) if items.len() == 1 => items.remove(0),
                Cell::List(_) => {
                    return Err(CatalogError::MalformedRecord {
                        line,
                        reason: "single-label task has a list-valued gold field".into(),
                    })
                }
            };
            Answer::single(resolve(&raw)?)
        }
        LabelKind::MultiLabel => {
            let items = match raw_gold {
                Cell::Scalar(s) => vec![s],
                Cell::List(items) => items,
            };
            let mut labels = items
                .iter()
                .map(|raw| resolve(raw))
                .collect::<Result<BTreeSet<_>>>()?;
            if labels.is_empty() {
                if let Some(none) = &spec.label_space.none_label {
                    labels.insert(none.clone());
                }
            }
            Answer::Labels(labels)
        }
        LabelKind::TagSequence => {
            let items = match raw_gold {
                Cell::Scalar(s) => s.split_whitespace().map(str::to_string).collect(),
                Cell::List(items) => items,
            };
            let tags = items
                .iter()
                .map(|raw| resolve(raw))
                .collect::<Result<Vec<_>>>()?;
            let token_slot = spec.token_slot.as_deref().unwrap_or_default();
            let token_count = slot_values
                .get(token_slot)
                .map(|s| s.split_whitespace().count())
                .unwrap_or(0);
            if tags.len() != token_count {
                return Err(CatalogError::MalformedRecord {
                    line,
                    reason: format!("{} tags for {} tokens", tags.len(), token_count),
                });
            }
            Answer::Tags(tags)
        }
    };

    Ok(Instance {
        instance_id,
        slot_values,
        gold,
    })
}

/// Write instances in the crate's native JSONL form.
pub fn save_instances(path: impl AsRef<Path>, instances: &[Instance]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for instance in instances {
        serde_json::to_writer(&mut out, instance).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read instances written by [`save_instances`], re-checking them against the spec.
pub fn load_instances(path: impl AsRef<Path>, spec: &TaskSpec) -> Result<Vec<Instance>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let instance: Instance =
            serde_json::from_str(&line).map_err(|e| CatalogError::MalformedRecord {
                line: line_no,
                reason: e.to_string(),
            })?;
        check_instance(spec, &instance, line_no)?;
        if !seen.insert(instance.instance_id.clone()) {
            return Err(CatalogError::MalformedRecord {
                line: line_no,
                reason: format!("duplicate instance id `{}`", instance.instance_id),
            });
        }
        out.push(instance);
    }
    Ok(out)
}

fn check_instance(spec: &TaskSpec, instance: &Instance, line: usize) -> Result<()> {
    for slot in &spec.template_slots {
        if !instance.slot_values.contains_key(slot) {
            return Err(CatalogError::MissingSlot {
                line,
                slot: slot.clone(),
                field: slot.clone(),
            });
        }
    }
    if instance.slot_values.len() != spec.template_slots.len() {
        return Err(CatalogError::MalformedRecord {
            line,
            reason: "instance has slots outside the task's template slots".into(),
        });
    }
    let labels: Vec<&String> = match &instance.gold {
        Answer::Labels(set) => set.iter().collect(),
        Answer::Tags(tags) => tags.iter().collect(),
    };
    for label in labels {
        if !spec.label_space.contains(label) {
            return Err(CatalogError::UnknownLabel {
                line,
                label: label.clone(),
                task: spec.task_id.clone(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::builtin_task;

    fn write_file(contents: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(contents.as_bytes()).unwrap();
        file
    }

    #[test]
    fn loads_wic_jsonl() {
        let spec = builtin_task("wic").unwrap();
        let file = write_file(concat!(
            r#"{"idx": 0, "sentence1": "He went home.", "sentence2": "Go away.", "word": "go", "label": 0}"#,
            "\n",
            r#"{"idx": 1, "sentence1": "A bank of a river.", "sentence2": "The bank closed.", "word": "bank", "label": "True"}"#,
            "\n"
        ));
        let instances =
            load_dataset(file.path(), DatasetFormat::Jsonl, &spec, "validation").unwrap();
        assert_eq!(instances.len(), 2);
        assert_eq!(instances[0].instance_id, "0");
        assert_eq!(instances[0].gold, Answer::single("False"));
        assert_eq!(instances[1].gold, Answer::single("True"));
        let keys: Vec<_> = instances[0].slot_values.keys().cloned().collect();
        assert_eq!(keys, ["sentence_1", "sentence_2", "word"]);
    }

    #[test]
    fn unknown_label_is_reported() {
        let spec = builtin_task("wic").unwrap();
        let file = write_file(
            r#"{"idx": 0, "sentence1": "a", "sentence2": "b", "word": "c", "label": "Maybe"}"#,
        );
        let err = load_dataset(file.path(), DatasetFormat::Jsonl, &spec, "dev").unwrap_err();
        assert!(
            matches!(err, CatalogError::UnknownLabel { line: 1, ref label, .. } if label == "Maybe")
        );
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let spec = builtin_task("wic").unwrap();
        let file = write_file("");
        assert!(
            load_dataset(file.path(), DatasetFormat::Jsonl, &spec, "dev")
                .unwrap()
                .is_empty()
        );
        assert!(load_dataset(file.path(), DatasetFormat::Tsv, &spec, "dev")
            .unwrap()
            .is_empty());
    }

    #[test]
    fn missing_slot_and_malformed_lines() {
        let spec = builtin_task("wic").unwrap();
        let file = write_file(r#"{"idx": 0, "sentence1": "a", "word": "c", "label": 1}"#);
        let err = load_dataset(file.path(), DatasetFormat::Jsonl, &spec, "dev").unwrap_err();
        assert!(matches!(err, CatalogError::MissingSlot { ref slot, .. } if slot == "sentence_2"));

        let file = write_file("{\"idx\": 0,\n");
        let err = load_dataset(file.path(), DatasetFormat::Jsonl, &spec, "dev").unwrap_err();
        assert!(matches!(err, CatalogError::MalformedRecord { line: 1, .. }));
    }

    #[test]
    fn empty_slot_text_is_a_valid_binding() {
        let spec = builtin_task("qnli").unwrap();
        let file = write_file(r#"{"idx": 3, "question": "", "sentence": "s", "label": 1}"#);
        let instances = load_dataset(file.path(), DatasetFormat::Jsonl, &spec, "dev").unwrap();
        assert_eq!(instances[0].slot_values["question"], "");
        assert_eq!(instances[0].gold, Answer::single("not_entailment"));
    }

    #[test]
    fn loads_tsv_with_generated_ids() {
        let mut spec = builtin_task("mednli").unwrap();
        spec.dataset.id_field = None;
        let file = write_file(
            "sentence1\tsentence2\tgold_label\nHe has a fever.\tHe is febrile.\tentailment\nNo pain.\tSevere pain.\tcontradiction\n",
        );
        let instances = load_dataset(file.path(), DatasetFormat::Tsv, &spec, "dev").unwrap();
        assert_eq!(instances.len(), 2);
        assert_eq!(instances[0].instance_id, "dev-2");
        assert_eq!(instances[1].gold, Answer::single("contradiction"));
    }

    #[test]
    fn multi_label_and_tag_sequences() {
        let spec = builtin_task("unfair-tos").unwrap();
        let file = write_file(concat!(
            r#"{"text": "We may terminate at any time.", "labels": [1, 2]}"#,
            "\n",
            r#"{"text": "Welcome.", "labels": []}"#,
            "\n"
        ));
        let instances = load_dataset(file.path(), DatasetFormat::Jsonl, &spec, "dev").unwrap();
        assert_eq!(
            instances[0].gold,
            Answer::labels(["Unilateral termination", "Unilateral change"])
        );
        assert_eq!(instances[1].gold, Answer::single("none"));

        let spec = builtin_task("bc5cdr-chem").unwrap();
        let file = write_file(
            r#"{"id": "s1", "tokens": ["Aspirin", "induced", "asthma"], "ner_tags": [1, 0, 0]}"#,
        );
        let instances = load_dataset(file.path(), DatasetFormat::Jsonl, &spec, "dev").unwrap();
        assert_eq!(
            instances[0].slot_values["sentence"],
            "Aspirin induced asthma"
        );
        assert_eq!(
            instances[0].gold,
            Answer::Tags(vec!["B".into(), "O".into(), "O".into()])
        );

        let file = write_file(r#"{"id": "s1", "tokens": ["Aspirin", "induced"], "ner_tags": [1]}"#);
        assert!(load_dataset(file.path(), DatasetFormat::Jsonl, &spec, "dev").is_err());
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let spec = builtin_task("boolq").unwrap();
        let file = write_file(concat!(
            r#"{"idx": 1, "passage": "p", "question": "q", "label": true}"#,
            "\n",
            r#"{"idx": 1, "passage": "p", "question": "q", "label": false}"#,
            "\n"
        ));
        let err = load_dataset(file.path(), DatasetFormat::Jsonl, &spec, "dev").unwrap_err();
        assert!(matches!(err, CatalogError::MalformedRecord { line: 2, .. }));
    }
}
