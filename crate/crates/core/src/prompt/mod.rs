//! Prompt rendering for every strategy, task and shot setting.
//!
//! Zero-shot strategies render their task template directly. Few-shot
//! strategies prepend `Q: … A: …` demonstration blocks to the zero-shot
//! render of the query, so removing the demonstrations leaves the zero-shot
//! prompt byte for byte.

mod template;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{ExemplarSet, Instance, TaskSpec};

pub use template::PromptTemplate;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("no template registered for task `{task}` and strategy {strategy}")]
    MissingTemplate { task: String, strategy: StrategyId },
    #[error("placeholder `{{{0}}}` has no value in the instance")]
    UnboundPlaceholder(String),
    #[error("template for `{task}` uses `{{{placeholder}}}`, which is not a template slot")]
    UnknownPlaceholder { task: String, placeholder: String },
    #[error("malformed template: {0}")]
    MalformedTemplate(String),
    #[error("exemplar mismatch: {0}")]
    ExemplarMismatch(String),
    #[error("{strategy} is a {expected} strategy")]
    WrongShotSetting {
        strategy: StrategyId,
        expected: &'static str,
    },
    #[error("invalid decoding override: {0}")]
    InvalidOverride(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = PromptError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyId {
    #[serde(rename = "MP")]
    Mp,
    #[serde(rename = "CoT")]
    Cot,
    #[serde(rename = "PS")]
    Ps,
    #[serde(rename = "M-CoT")]
    MCot,
    #[serde(rename = "CoT-SC")]
    CotSc,
    #[serde(rename = "M-MP")]
    MMp,
}

impl StrategyId {
    pub const ALL: [StrategyId; 6] = [
        StrategyId::Cot,
        StrategyId::Ps,
        StrategyId::Mp,
        StrategyId::MCot,
        StrategyId::CotSc,
        StrategyId::MMp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyId::Mp => "MP",
            StrategyId::Cot => "CoT",
            StrategyId::Ps => "PS",
            StrategyId::MCot => "M-CoT",
            StrategyId::CotSc => "CoT-SC",
            StrategyId::MMp => "M-MP",
        }
    }

    pub fn is_few_shot(self) -> bool {
        matches!(self, StrategyId::MCot | StrategyId::CotSc | StrategyId::MMp)
    }

    /// Zero-shot strategy whose template a few-shot strategy reuses.
    pub fn base(self) -> StrategyId {
        match self {
            StrategyId::MMp => StrategyId::Mp,
            StrategyId::MCot | StrategyId::CotSc => StrategyId::Cot,
            s => s,
        }
    }

    pub fn default_shots(self) -> usize {
        if self.is_few_shot() {
            5
        } else {
            0
        }
    }

    pub fn is_metacognitive(self) -> bool {
        matches!(self, StrategyId::Mp | StrategyId::MMp)
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        StrategyId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub sample_count: u32,
    pub max_tokens: u32,
}

pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodingOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

/// Greedy single-sample decoding for every strategy except self-consistency,
/// which samples ten completions at temperature 0.7.
pub fn decoding_params_for(
    strategy: StrategyId,
    overrides: &DecodingOverrides,
) -> Result<DecodingParams> {
    let (temperature, sample_count) = match strategy {
        StrategyId::CotSc => (0.7, 10),
        _ => (0.0, 1),
    };
    let params = DecodingParams {
        temperature: overrides.temperature.unwrap_or(temperature),
        sample_count: overrides.sample_count.unwrap_or(sample_count),
        max_tokens: overrides.max_tokens.unwrap_or(DEFAULT_MAX_TOKENS),
    };
    if !(0.0..=2.0).contains(&params.temperature) {
        return Err(PromptError::InvalidOverride(format!(
            "temperature {} outside [0, 2]",
            params.temperature
        )));
    }
    if params.sample_count == 0 || params.max_tokens == 0 {
        return Err(PromptError::InvalidOverride(
            "sample_count and max_tokens must be positive".into(),
        ));
    }
    if params.temperature == 0.0 && params.sample_count > 1 {
        return Err(PromptError::InvalidOverride(format!(
            "greedy decoding cannot draw {} samples",
            params.sample_count
        )));
    }
    Ok(params)
}

/// A fully rendered prompt, sent to the model as one user message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub text: String,
    pub strategy: StrategyId,
    pub shots: usize,
    pub decoding: DecodingParams,
    pub prompt_hash: String,
    /// Optional system message; off unless a run configures one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
}

pub fn prompt_hash(text: &str) -> String {
    crate::digest_hex(text.as_bytes())
}

/// Templates keyed by task and zero-shot strategy.
#[derive(Debug, Clone, Default)]
pub struct TemplateRegistry {
    templates: BTreeMap<(String, StrategyId), PromptTemplate>,
}

macro_rules! builtin_templates {
    ($($task:literal),* $(,)?) => {
        &[$(
            include_str!(concat!("../../templates/", $task, "/MP.txt")),
            include_str!(concat!("../../templates/", $task, "/CoT.txt")),
            include_str!(concat!("../../templates/", $task, "/PS.txt")),
        )*]
    };
}

const BUILTIN_TEMPLATES: &[&str] = builtin_templates!(
    "qqp",
    "qnli",
    "boolq",
    "wic",
    "bc5cdr-chem",
    "ddi",
    "mednli",
    "eur-lex",
    "ledgar",
    "unfair-tos",
);

impl TemplateRegistry {
    pub fn builtin() -> Self {
        let mut registry = TemplateRegistry::default();
        for text in BUILTIN_TEMPLATES {
            let template = PromptTemplate::parse(text).expect("built-in template parses");
            registry.insert(template);
        }
        registry
    }

    /// Built-in templates overlaid with every `<task>/<strategy>.txt` under `dir`.
    pub fn with_overrides_from(dir: impl AsRef<Path>) -> Result<Self> {
        let mut registry = Self::builtin();
        registry.load_dir(dir)?;
        Ok(registry)
    }

    pub fn load_dir(&mut self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let io = |e: std::io::Error| PromptError::Io {
            path: dir.display().to_string(),
            source: e,
        };
        let mut paths = Vec::new();
        for task_dir in std::fs::read_dir(dir).map_err(io)? {
            let task_dir = task_dir.map_err(io)?.path();
            if !task_dir.is_dir() {
                continue;
            }
            for file in std::fs::read_dir(&task_dir).map_err(io)? {
                let path = file.map_err(io)?.path();
                if path.extension().is_some_and(|e| e == "txt") {
                    paths.push(path);
                }
            }
        }
        paths.sort();
        for path in paths {
            self.insert(PromptTemplate::from_file(&path)?);
        }
        Ok(())
    }

    pub fn insert(&mut self, template: PromptTemplate) {
        self.templates
            .insert((template.task_id.clone(), template.strategy), template);
    }

    pub fn get(&self, task_id: &str, strategy: StrategyId) -> Result<&PromptTemplate> {
        self.templates
            .get(&(task_id.to_string(), strategy.base()))
            .ok_or_else(|| PromptError::MissingTemplate {
                task: task_id.to_string(),
                strategy,
            })
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.values()
    }
}

/// Renders prompt bundles from a template registry.
#[derive(Debug, Clone)]
pub struct PromptEngine {
    registry: TemplateRegistry,
    overrides: DecodingOverrides,
    system_prompt: Option<String>,
    shots: Option<usize>,
}

impl Default for PromptEngine {
    fn default() -> Self {
        Self::new(TemplateRegistry::builtin())
    }
}

impl PromptEngine {
    pub fn new(registry: TemplateRegistry) -> Self {
        PromptEngine {
            registry,
            overrides: DecodingOverrides::default(),
            system_prompt: None,
            shots: None,
        }
    }

    pub fn with_overrides(mut self, overrides: DecodingOverrides) -> Self {
        self.overrides = overrides;
        self
    }

    pub fn with_system_prompt(mut self, system: Option<String>) -> Self {
        self.system_prompt = system;
        self
    }

    /// Number of demonstrations few-shot renders must receive (default 5).
    pub fn with_shots(mut self, shots: usize) -> Self {
        self.shots = Some(shots);
        self
    }

    pub fn registry(&self) -> &TemplateRegistry {
        &self.registry
    }

    pub fn template(&self, task_id: &str, strategy: StrategyId) -> Result<&PromptTemplate> {
        self.registry.get(task_id, strategy)
    }

    pub fn render_zero_shot(
        &self,
        strategy: StrategyId,
        spec: &TaskSpec,
        instance: &Instance,
    ) -> Result<PromptBundle> {
        if strategy.is_few_shot() {
            return Err(PromptError::WrongShotSetting {
                strategy,
                expected: "few-shot",
            });
        }
        let text = self.query_text(strategy, spec, instance)?;
        self.bundle(text, strategy, 0)
    }

    pub fn render_few_shot(
        &self,
        strategy: StrategyId,
        spec: &TaskSpec,
        instance: &Instance,
        exemplars: &ExemplarSet,
    ) -> Result<PromptBundle> {
        if !strategy.is_few_shot() {
            return Err(PromptError::WrongShotSetting {
                strategy,
                expected: "zero-shot",
            });
        }
        if exemplars.task_id != spec.task_id {
            return Err(PromptError::ExemplarMismatch(format!(
                "exemplars belong to `{}`, query to `{}`",
                exemplars.task_id, spec.task_id
            )));
        }
        let expected = self.shots.unwrap_or_else(|| strategy.default_shots());
        if exemplars.is_empty() || exemplars.len() != expected {
            return Err(PromptError::ExemplarMismatch(format!(
                "expected {expected} exemplars, got {}",
                exemplars.len()
            )));
        }

        let template = self.registry.get(&spec.task_id, strategy)?;
        template.check_against(spec)?;
        let mut text = String::new();
        for exemplar in &exemplars.exemplars {
            let question = template.render_question(&exemplar.instance.slot_values)?;
            text.push_str("Q: ");
            text.push_str(&question);
            text.push_str("\nA: ");
            text.push_str(&exemplar.worked_answer);
            text.push_str("\n\n");
        }
        text.push_str(&self.query_text(strategy, spec, instance)?);
        self.bundle(text, strategy, exemplars.len())
    }

    /// Render with or without exemplars depending on the strategy.
    pub fn render(
        &self,
        strategy: StrategyId,
        spec: &TaskSpec,
        instance: &Instance,
        exemplars: Option<&ExemplarSet>,
    ) -> Result<PromptBundle> {
        match (strategy.is_few_shot(), exemplars) {
            (false, _) => self.render_zero_shot(strategy, spec, instance),
            (true, Some(ex)) => self.render_few_shot(strategy, spec, instance, ex),
            (true, None) => Err(PromptError::ExemplarMismatch(format!(
                "{strategy} needs exemplars"
            ))),
        }
    }

    fn query_text(
        &self,
        strategy: StrategyId,
        spec: &TaskSpec,
        instance: &Instance,
    ) -> Result<String> {
        let template = self.registry.get(&spec.task_id, strategy)?;
        template.check_against(spec)?;
        template.render(&instance.slot_values)
    }

    fn bundle(&self, text: String, strategy: StrategyId, shots: usize) -> Result<PromptBundle> {
        Ok(PromptBundle {
            prompt_hash: prompt_hash(&text),
            decoding: decoding_params_for(strategy, &self.overrides)?,
            text,
            strategy,
            shots,
            system: self.system_prompt.clone(),
        })
    }
}
