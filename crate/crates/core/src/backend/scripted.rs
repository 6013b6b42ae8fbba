use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, CallError, CompletionRequest};

/// One scripted response, as stored in a fixtures JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixture {
    pub prompt_hash: String,
    #[serde(default)]
    pub sample_index: u32,
    pub text: String,
}

/// Replays fixed texts looked up by `(prompt_hash, sample_index)`.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    fixtures: HashMap<(String, u32), String>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_fixtures(fixtures: impl IntoIterator<Item = Fixture>) -> Self {
        let mut backend = Self::new();
        for f in fixtures {
            backend.insert(f.prompt_hash, f.sample_index, f.text);
        }
        backend
    }

    pub fn from_jsonl(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let err = |msg: String| BackendError::Config(format!("{}: {msg}", path.display()));
        let file = File::open(path).map_err(|e| err(e.to_string()))?;
        let mut fixtures = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Fixture =
                serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", n + 1)))?;
            fixtures.push(f);
        }
        Ok(Self::from_fixtures(fixtures))
    }

    pub fn insert(
        &mut self,
        prompt_hash: impl Into<String>,
        sample_index: u32,
        text: impl Into<String>,
    ) {
        self.fixtures
            .insert((prompt_hash.into(), sample_index), text.into());
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }
}

/// Write fixtures as JSONL, sorted so the file is reproducible.
pub fn write_fixtures(path: impl AsRef<Path>, fixtures: &[Fixture]) -> std::io::Result<()> {
    let mut sorted: Vec<&Fixture> = fixtures.iter().collect();
    sorted.sort_by(|a, b| (&a.prompt_hash, a.sample_index).cmp(&(&b.prompt_hash, b.sample_index)));
    let mut out = BufWriter::new(File::create(path)?);
    for f in sorted {
        serde_json::to_writer(&mut out, f)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

impl Backend for ScriptedBackend {
    fn call(&self, req: &CompletionRequest<'_>) -> Result<String, CallError> {
        self.fixtures
            .get(&(req.prompt_hash.to_string(), req.sample_index))
            .cloned()
            .ok_or_else(|| {
                CallError::Fatal(BackendError::FixtureMiss {
                    prompt_hash: req.prompt_hash.to_string(),
                    sample_index: req.sample_index,
                })
            })
    }
}
