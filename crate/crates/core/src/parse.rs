//! Extraction of final answers, verbalized confidence and stage segments
//! from free-form model output.
//!
//! Answers are read in two phases. Strict parsing looks for the last
//! occurrence of the task's contract frame (`The status is {}`) and reads
//! the hole. If that fails, lenient parsing scans the final two sentences
//! for allowed labels. The phase that succeeded is recorded on every
//! [`ParsedResponse`].

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Answer, ContractSpec, Instance, LabelKind, LabelSpace, TaskSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no answer could be extracted: {0}")]
    ParseFailure(String),
    #[error("answer is ambiguous between {0:?}")]
    AmbiguousAnswer(Vec<String>),
    #[error("confidence {0}% is above 100%")]
    ConfidenceOutOfRange(u32),
}

pub type Result<T, E = ParseError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    Strict,
    Lenient,
}

#[derive(Debug, Clone)]
pub struct AnswerContract {
    pub frame: String,
    pub labels: LabelSpace,
    pub list_separator: String,
    prefix: Regex,
    suffix: Option<Regex>,
}

impl AnswerContract {
    pub fn new(contract: &ContractSpec, labels: &LabelSpace) -> Self {
        let (before, after) = contract
            .frame
            .split_once("{}")
            .expect("contract frame has a hole");
        AnswerContract {
            frame: contract.frame.clone(),
            labels: labels.clone(),
            list_separator: contract.list_separator.clone(),
            prefix: loose_regex(before),
            suffix: (!after.trim().is_empty()).then(|| loose_regex(after)),
        }
    }

    pub fn for_task(spec: &TaskSpec) -> Self {
        Self::new(&spec.contract, &spec.label_space)
    }

    /// The frame with its hole filled, as a model following the prompt
    /// would write it.
    pub fn instantiate(&self, answer: &Answer, tokens: Option<&[&str]>) -> String {
        let hole = match answer {
            Answer::Labels(set) => set
                .iter()
                .map(String::as_str)
                .collect::<Vec<_>>()
                .join(&self.list_separator),
            Answer::Tags(tags) => match tokens {
                Some(tokens) => tokens
                    .iter()
                    .zip(tags)
                    .map(|(tok, tag)| format!("{tok}/{tag}"))
                    .collect::<Vec<_>>()
                    .join(" "),
                None => tags.join(" "),
            },
        };
        self.frame.replacen("{}", &hole, 1)
    }
}

/// Case-insensitive pattern for literal text with flexible whitespace.
fn loose_regex(text: &str) -> Regex {
    let words: Vec<String> = text.split_whitespace().map(regex::escape).collect();
    let mut pattern = String::from("(?i)");
    pattern.push_str(&words.join(r"\s+"));
    if text.ends_with(char::is_whitespace) {
        pattern.push_str(r"\s*");
    }
    Regex::new(&pattern).expect("escaped frame is a valid regex")
}

/// Outcome of answer extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub answer: Answer,
    pub mode: ParseMode,
    /// Multi-label list elements that matched no allowed label.
    pub dropped: usize,
}

/// Extract the final label set for a single- or multi-label contract.
pub fn extract_answer(raw: &str, contract: &AnswerContract) -> Result<Extraction> {
    if contract.labels.kind == LabelKind::TagSequence {
        return Err(ParseError::ParseFailure(
            "tag-sequence contracts need the token count; use extract_tags".into(),
        ));
    }
    if let Some(hole) = strict_hole(raw, contract) {
        if let Some((labels, dropped)) = read_labels(&hole, &contract.labels) {
            return Ok(Extraction {
                answer: Answer::Labels(labels),
                mode: ParseMode::Strict,
                dropped,
            });
        }
    }
    lenient(raw, &contract.labels)
}

/// Extract a BIO tag sequence aligned to `token_count` tokens.
pub fn extract_tags(
    raw: &str,
    contract: &AnswerContract,
    token_count: usize,
) -> Result<Extraction> {
    let hole = strict_hole(raw, contract)
        .ok_or_else(|| ParseError::ParseFailure("contract frame not found".into()))?;
    let mut tags = Vec::new();
    for item in hole.split_whitespace() {
        let tag_text = item.rsplit_once('/').map_or(item, |(_, tag)| tag);
        let tag = contract
            .labels
            .canonical(tag_text)
            .ok_or_else(|| ParseError::ParseFailure(format!("`{item}` carries no valid tag")))?;
        tags.push(tag.to_string());
    }
    if tags.len() != token_count {
        return Err(ParseError::ParseFailure(format!(
            "{} tags for {} tokens",
            tags.len(),
            token_count
        )));
    }
    Ok(Extraction {
        answer: Answer::Tags(tags),
        mode: ParseMode::Strict,
        dropped: 0,
    })
}

/// Text in the hole of the last contract frame, up to the end of its line.
fn strict_hole(raw: &str, contract: &AnswerContract) -> Option<String> {
    let found = contract.prefix.find_iter(raw).last()?;
    let rest = &raw[found.end()..];
    let line = rest.split('\n').next().unwrap_or_default();
    let line = match &contract.suffix {
        Some(suffix) => match suffix.find(line) {
            Some(m) => &line[..m.start()],
            None => line,
        },
        None => line,
    };
    Some(strip_option_hint(line).trim().to_string())
}

/// Drop an echoed option list such as `(True / False)`.
fn strip_option_hint(text: &str) -> &str {
    static HINT: OnceLock<Regex> = OnceLock::new();
    let hint = HINT.get_or_init(|| Regex::new(r"\s*\([^()]*/[^()]*\)[\s.”\x22*]*$").unwrap());
    match hint.find(text) {
        Some(m) => &text[..m.start()],
        None => text,
    }
}

/// First sentence of the hole text.
fn first_sentence(text: &str) -> &str {
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if matches!(b, b'.' | b'!' | b'?')
            && bytes.get(i + 1).is_none_or(|n| n.is_ascii_whitespace())
        {
            return &text[..i];
        }
    }
    text
}

fn read_labels(hole: &str, space: &LabelSpace) -> Option<(BTreeSet<String>, usize)> {
    let text = first_sentence(hole);
    if space.kind != LabelKind::MultiLabel {
        return space
            .canonical(text)
            .map(|l| (BTreeSet::from([l.to_string()]), 0));
    }

    static SPLIT: OnceLock<Regex> = OnceLock::new();
    let split = SPLIT.get_or_init(|| Regex::new(r"(?i)\s*[,;]\s*(?:and\s+)?|\s+and\s+").unwrap());
    let mut labels = BTreeSet::new();
    let mut dropped = 0;
    for part in split.split(text) {
        if part.trim().is_empty() {
            continue;
        }
        match space.canonical(part) {
            Some(l) => {
                labels.insert(l.to_string());
            }
            None => dropped += 1,
        }
    }
    if labels.is_empty() {
        return None;
    }
    // "none" alongside real labels carries no information.
    if let Some(none) = &space.none_label {
        if labels.len() > 1 {
            labels.remove(none);
        }
    }
    Some((labels, dropped))
}

/// Last two sentences of the text, for lenient scanning.
fn final_sentences(raw: &str) -> String {
    let mut sentences: Vec<&str> = Vec::new();
    let mut start = 0;
    let bytes = raw.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        let ends = b == b'\n'
            || (matches!(b, b'.' | b'!' | b'?')
                && bytes.get(i + 1).is_none_or(|n| n.is_ascii_whitespace()));
        if ends {
            sentences.push(&raw[start..=i]);
            start = i + 1;
        }
    }
    sentences.push(&raw[start..]);
    let kept: Vec<&str> = sentences
        .into_iter()
        .filter(|s| !s.trim().is_empty())
        .collect();
    let from = kept.len().saturating_sub(2);
    kept[from..].join(" ")
}

fn mentions(haystack: &str, label: &str) -> bool {
    let hay = haystack.to_lowercase();
    let needle = label.to_lowercase();
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    let mut from = 0;
    while let Some(pos) = hay[from..].find(&needle) {
        let start = from + pos;
        let end = start + needle.len();
        let before_ok = hay[..start].chars().next_back().is_none_or(|c| !is_word(c));
        let after_ok = hay[end..].chars().next().is_none_or(|c| !is_word(c));
        if before_ok && after_ok {
            return true;
        }
        from = start + needle.chars().next().map_or(1, char::len_utf8);
    }
    false
}

fn lenient(raw: &str, space: &LabelSpace) -> Result<Extraction> {
    let tail = final_sentences(raw);
    let found: Vec<&String> = space.labels.iter().filter(|l| mentions(&tail, l)).collect();
    if found.is_empty() {
        return Err(ParseError::ParseFailure(
            "no contract frame and no allowed label in the final sentences".into(),
        ));
    }
    if space.kind == LabelKind::MultiLabel {
        let mut labels: BTreeSet<String> = found.into_iter().cloned().collect();
        if let Some(none) = &space.none_label {
            if labels.len() > 1 {
                labels.remove(none);
            }
        }
        return Ok(Extraction {
            answer: Answer::Labels(labels),
            mode: ParseMode::Lenient,
            dropped: 0,
        });
    }
    if found.len() > 1 {
        return Err(ParseError::AmbiguousAnswer(
            found.into_iter().cloned().collect(),
        ));
    }
    Ok(Extraction {
        answer: Answer::single(found[0].clone()),
        mode: ParseMode::Lenient,
        dropped: 0,
    })
}

/// The last confidence percentage stated in the text, if any.
///
/// Recognizes `<n>% confident`, `<n>% confidence` and `confidence … <n>%`
/// (including `confidence level of <n>%`).
pub fn extract_confidence(raw: &str) -> Result<Option<u8>> {
    static BEFORE: OnceLock<Regex> = OnceLock::new();
    static AFTER: OnceLock<Regex> = OnceLock::new();
    let before = BEFORE.get_or_init(|| {
        Regex::new(r"(?i)(\d+(?:\.\d+)?)\s*%\s*(?:confident|confidence|certain)").unwrap()
    });
    let after = AFTER.get_or_init(|| {
        Regex::new(r"(?i)confiden(?:ce|t)[^%\d\n]{0,60}?(\d+(?:\.\d+)?)\s*%").unwrap()
    });

    let mut best: Option<(usize, &str)> = None;
    for re in [before, after] {
        for caps in re.captures_iter(raw) {
            let number = caps.get(1).expect("group 1");
            if best.is_none_or(|(pos, _)| number.start() > pos) {
                best = Some((number.start(), number.as_str()));
            }
        }
    }
    let Some((_, text)) = best else {
        return Ok(None);
    };
    let value: f64 = text.parse().expect("regex matched a number");
    let rounded = value.round();
    if rounded > 100.0 {
        return Err(ParseError::ConfidenceOutOfRange(
            rounded.min(u32::MAX as f64) as u32,
        ));
    }
    Ok(Some(rounded as u8))
}

/// Split an answer into its five enumerated stages.
///
/// Blocks start at lines beginning with `1.`, `2)` and so on. Text before
/// the first block is dropped; blocks past the fifth are folded into the
/// fifth segment. Returns `None` with fewer than five blocks.
pub fn segment_stages(raw: &str) -> Option<Vec<String>> {
    static ENUM: OnceLock<Regex> = OnceLock::new();
    let re = ENUM.get_or_init(|| Regex::new(r"(?m)^[ \t]*\d{1,2}[.)][ \t]+").unwrap());
    let marks: Vec<(usize, usize)> = re.find_iter(raw).map(|m| (m.start(), m.end())).collect();
    if marks.len() < 5 {
        return None;
    }
    let mut segments = Vec::with_capacity(5);
    for i in 0..4 {
        segments.push(raw[marks[i].1..marks[i + 1].0].trim().to_string());
    }
    segments.push(raw[marks[4].1..].trim().to_string());
    if segments.iter().any(|s| s.is_empty()) {
        return None;
    }
    Some(segments)
}

/// One parsed model output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub instance_id: String,
    pub sample_index: u32,
    /// Extracted answer; `None` records a parse failure.
    pub labels: Option<Answer>,
    pub confidence: Option<u8>,
    pub stages: Option<Vec<String>>,
    pub parse_mode: Option<ParseMode>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub dropped_labels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

impl ParsedResponse {
    pub fn is_failure(&self) -> bool {
        self.labels.is_none()
    }
}

/// Parse one raw output for an instance of `spec`. Never fails: extraction
/// errors are recorded on the response.
pub fn parse_response(
    raw: &str,
    spec: &TaskSpec,
    contract: &AnswerContract,
    instance: &Instance,
    sample_index: u32,
) -> ParsedResponse {
    let extraction = if spec.label_space.is_tag_sequence() {
        let count = instance.tokens(spec).map_or(0, |t| t.len());
        extract_tags(raw, contract, count)
    } else {
        extract_answer(raw, contract)
    };
    let (confidence, confidence_error) = match extract_confidence(raw) {
        Ok(c) => (c, None),
        Err(e) => (None, Some(e.to_string())),
    };
    let stages = segment_stages(raw);
    match extraction {
        Ok(ex) => ParsedResponse {
            instance_id: instance.instance_id.clone(),
            sample_index,
            labels: Some(ex.answer),
            confidence,
            stages,
            parse_mode: Some(ex.mode),
            dropped_labels: ex.dropped,
            error: confidence_error,
        },
        Err(e) => ParsedResponse {
            instance_id: instance.instance_id.clone(),
            sample_index,
            labels: None,
            confidence,
            stages,
            parse_mode: None,
            dropped_labels: 0,
            error: Some(e.to_string()),
        },
    }
}
