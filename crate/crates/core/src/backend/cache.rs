use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{BackendError, Result};

/// Everything that determines a response. Temperature participates so
/// greedy and sampled completions never share an entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheKey {
    pub model_name: String,
    pub prompt_hash: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub sample_index: u32,
    /// Digest of the system message, when one is sent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_hash: Option<String>,
}

impl CacheKey {
    /// Content address of the key.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("cache key serializes");
        crate::digest_hex(&canonical)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    #[serde(flatten)]
    pub key: CacheKey,
    pub raw_text: String,
    pub created_at: String,
}

/// One JSON file per key under `<root>/<model>/<hash-prefix>/<key>.json`.
///
/// Writes go to a temporary file that is renamed into place, so readers
/// never see a partial entry and concurrent writers of one key settle on
/// a complete file.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn path_safe(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

impl ResponseCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ResponseCache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        let digest = key.digest();
        self.root
            .join(path_safe(&key.model_name))
            .join(&key.prompt_hash[..key.prompt_hash.len().min(2)])
            .join(format!("{digest}.json"))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<CacheEntry>> {
        let path = self.path_for(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(BackendError::Cache(format!("{}: {e}", path.display()))),
        };
        let entry: CacheEntry = serde_json::from_slice(&bytes)
            .map_err(|e| BackendError::Cache(format!("{}: {e}", path.display())))?;
        // A digest collision is not expected, but a stale file must not leak.
        Ok((entry.key == *key).then_some(entry))
    }

    pub fn put(&self, entry: &CacheEntry) -> Result<()> {
        let path = self.path_for(&entry.key);
        let dir = path.parent().expect("cache path has a parent");
        let io = |e: std::io::Error| BackendError::Cache(format!("{}: {e}", path.display()));
        fs::create_dir_all(dir).map_err(io)?;
        let tmp = dir.join(format!(
            ".{}.{}.{}.tmp",
            path.file_stem().and_then(|s| s.to_str()).unwrap_or("entry"),
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let mut file = fs::File::create(&tmp).map_err(io)?;
        let mut bytes = serde_json::to_vec_pretty(entry).expect("cache entry serializes");
        bytes.push(b'\n');
        file.write_all(&bytes).map_err(io)?;
        file.sync_all().map_err(io)?;
        drop(file);
        fs::rename(&tmp, &path).map_err(io)?;
        Ok(())
    }
}
