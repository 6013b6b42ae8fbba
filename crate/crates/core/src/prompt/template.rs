use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::{PromptError, Result, StrategyId};
use crate::catalog::TaskSpec;

const CONTRACT_LEAD: &str = "Provide the answer in your final response as";

/// One template file: a small header naming the task and strategy, then a
/// `=== question` section and an `=== instructions` section.
///
/// The question section is what a few-shot demonstration shows after `Q:`;
/// the zero-shot prompt is the question followed by the instructions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub task_id: String,
    pub strategy: StrategyId,
    pub question: String,
    pub instructions: String,
    pub contract_sentence: String,
    /// The five numbered stages, for metacognitive templates.
    pub stage_list: Vec<String>,
    source: String,
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self> {
        let malformed = |reason: &str| PromptError::MalformedTemplate(reason.to_string());

        let mut header = BTreeMap::new();
        let mut sections: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        let mut current: Option<&str> = None;
        for line in text.lines() {
            if let Some(name) = line.strip_prefix("=== ") {
                let name = name.trim();
                if sections.contains_key(name) {
                    return Err(malformed(&format!("duplicate section `{name}`")));
                }
                sections.insert(name, Vec::new());
                current = Some(name);
            } else if let Some(name) = current {
                sections.get_mut(name).expect("section exists").push(line);
            } else if !line.trim().is_empty() {
                let (key, value) = line
                    .split_once(':')
                    .ok_or_else(|| malformed(&format!("bad header line `{line}`")))?;
                header.insert(key.trim().to_string(), value.trim().to_string());
            }
        }

        let task_id = header
            .remove("task_id")
            .ok_or_else(|| malformed("missing task_id header"))?;
        let strategy: StrategyId = header
            .remove("strategy")
            .ok_or_else(|| malformed("missing strategy header"))?
            .parse()
            .map_err(|e: String| malformed(&e))?;
        if strategy.is_few_shot() {
            return Err(malformed(
                "few-shot strategies reuse their zero-shot template; declare MP, CoT or PS",
            ));
        }

        let take = |name: &str| -> Result<String> {
            let lines = sections
                .get(name)
                .ok_or_else(|| malformed(&format!("missing `=== {name}` section")))?;
            let body = lines.join("\n");
            let body = body.trim_end_matches('\n').to_string();
            if body.trim().is_empty() {
                return Err(malformed(&format!("empty `{name}` section")));
            }
            Ok(body)
        };
        let question = take("question")?;
        let instructions = take("instructions")?;

        let contract_sentence = instructions
            .lines()
            .rev()
            .find(|l| l.starts_with(CONTRACT_LEAD))
            .ok_or_else(|| malformed("instructions lack a final-answer contract sentence"))?
            .to_string();

        let stage_list: Vec<String> = instructions
            .lines()
            .filter_map(|line| {
                let (num, rest) = line.split_once(". ")?;
                num.parse::<u32>().ok().map(|_| rest.to_string())
            })
            .collect();

        if strategy == StrategyId::Mp {
            let numbered: Vec<u32> = instructions
                .lines()
                .filter_map(|l| l.split_once(". ").and_then(|(n, _)| n.parse().ok()))
                .collect();
            if numbered != [1, 2, 3, 4, 5] {
                return Err(malformed(
                    "metacognitive template needs stages numbered 1 to 5",
                ));
            }
            if instructions.lines().last() != Some(contract_sentence.as_str()) {
                return Err(malformed(
                    "metacognitive template must end with the contract sentence",
                ));
            }
        }

        Ok(PromptTemplate {
            task_id,
            strategy,
            question,
            instructions,
            contract_sentence,
            stage_list,
            source: text.to_string(),
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PromptError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text)
    }

    /// Digest of the template file contents.
    pub fn digest(&self) -> String {
        crate::digest_hex(self.source.as_bytes())
    }

    pub fn placeholders(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for text in [&self.question, &self.instructions] {
            for piece in scan(text) {
                if let Piece::Placeholder(name) = piece {
                    out.insert(name.to_string());
                }
            }
        }
        out
    }

    /// Every placeholder must be one of the task's template slots.
    pub fn check_against(&self, spec: &TaskSpec) -> Result<()> {
        for name in self.placeholders() {
            if !spec.template_slots.contains(&name) {
                return Err(PromptError::UnknownPlaceholder {
                    task: spec.task_id.clone(),
                    placeholder: name,
                });
            }
        }
        Ok(())
    }

    pub fn render_question(&self, slots: &BTreeMap<String, String>) -> Result<String> {
        substitute(&self.question, slots)
    }

    /// Zero-shot prompt: the question, a space, then the instructions.
    pub fn render(&self, slots: &BTreeMap<String, String>) -> Result<String> {
        let question = substitute(&self.question, slots)?;
        let instructions = substitute(&self.instructions, slots)?;
        Ok(format!("{question} {instructions}"))
    }
}

enum Piece<'a> {
    Text(&'a str),
    Placeholder(&'a str),
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Split template text into literal runs and `{identifier}` placeholders.
/// `{{` and `}}` are literal braces; braces around anything that is not an
/// identifier (such as the `{}` answer hole) are kept as written.
fn scan(text: &str) -> Vec<Piece<'_>> {
    let mut pieces = Vec::new();
    let bytes = text.as_bytes();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                pieces.push(Piece::Text(&text[start..=i]));
                i += 2;
                start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                pieces.push(Piece::Text(&text[start..=i]));
                i += 2;
                start = i;
            }
            b'{' => {
                if let Some(close) = text[i + 1..].find('}') {
                    let inner = &text[i + 1..i + 1 + close];
                    if is_identifier(inner) {
                        pieces.push(Piece::Text(&text[start..i]));
                        pieces.push(Piece::Placeholder(inner));
                        i += close + 2;
                        start = i;
                        continue;
                    }
                }
                i += 1;
            }
            _ => i += 1,
        }
    }
    pieces.push(Piece::Text(&text[start..]));
    pieces
}

fn substitute(text: &str, slots: &BTreeMap<String, String>) -> Result<String> {
    let mut out = String::with_capacity(text.len() + 64);
    for piece in scan(text) {
        match piece {
            Piece::Text(t) => out.push_str(t),
            Piece::Placeholder(name) => match slots.get(name) {
                Some(value) => out.push_str(value),
                None => return Err(PromptError::UnboundPlaceholder(name.to_string())),
            },
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slots(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn substitution_keeps_holes_and_escapes() {
        let s = slots(&[("word", "go")]);
        assert_eq!(
            substitute("“{word}”: {} (True / False)", &s).unwrap(),
            "“go”: {} (True / False)"
        );
        assert_eq!(substitute("{{word}} {word}", &s).unwrap(), "{word} go");
        assert_eq!(
            substitute("{label, label, ...} {token/TAG ...}", &s).unwrap(),
            "{label, label, ...} {token/TAG ...}"
        );
        assert!(matches!(
            substitute("{missing}", &s),
            Err(PromptError::UnboundPlaceholder(name)) if name == "missing"
        ));
    }

    #[test]
    fn parses_stage_list_and_contract() {
        let t = PromptTemplate::parse(include_str!("../../templates/wic/MP.txt")).unwrap();
        assert_eq!(t.strategy, StrategyId::Mp);
        assert_eq!(t.stage_list.len(), 5);
        assert!(t.stage_list[4].starts_with("Evaluate your confidence (0-100%)"));
        assert!(t.contract_sentence.ends_with("(True / False)”."));
        let names: Vec<_> = t.placeholders().into_iter().collect();
        assert_eq!(names, ["sentence_1", "sentence_2", "word"]);
    }

    #[test]
    fn rejects_malformed_templates() {
        let four_stages = "task_id: x\nstrategy: MP\n=== question\nQ?\n=== instructions\n1. a\n2. b\n3. c\n4. d\nProvide the answer in your final response as “{}”.\n";
        assert!(PromptTemplate::parse(four_stages).is_err());
        let no_contract = "task_id: x\nstrategy: CoT\n=== question\nQ?\n=== instructions\nLet’s think step by step.\n";
        assert!(PromptTemplate::parse(no_contract).is_err());
        let few_shot = "task_id: x\nstrategy: M-MP\n=== question\nQ?\n=== instructions\nProvide the answer in your final response as “{}”.\n";
        assert!(PromptTemplate::parse(few_shot).is_err());
    }
}
