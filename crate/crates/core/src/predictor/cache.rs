//! Content-addressed prediction cache.
//!
//! Keys are SHA-256 over backend id and prompt bytes. The optional disk
//! form is an append-only JSON-lines file, replayed on open, so repeated
//! runs against a paid backend reuse earlier completions.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn cache_key(backend_id: &str, prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(backend_id.as_bytes());
    hasher.update([0u8]);
    hasher.update(prompt.as_bytes());
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    key: String,
    backend: String,
    prompt: String,
    response: String,
    ts: String,
}

/// Clones share the same underlying map and sink.
#[derive(Clone)]
pub struct PredictionCache {
    inner: std::sync::Arc<CacheInner>,
}

struct CacheInner {
    entries: RwLock<HashMap<String, String>>,
    sink: Option<Mutex<File>>,
}

impl PredictionCache {
    /// A cache that lives only for the current process.
    pub fn in_memory() -> PredictionCache {
        PredictionCache {
            inner: std::sync::Arc::new(CacheInner {
                entries: RwLock::new(HashMap::new()),
                sink: None,
            }),
        }
    }

    /// Opens (or creates) a JSON-lines cache file and replays it.
    pub fn open(path: &Path) -> Result<PredictionCache> {
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (line_no, line) in reader.lines().enumerate() {
                let line = line?;
                if line.is_empty() {
                    continue;
                }
                let parsed: CacheLine = serde_json::from_str(&line).map_err(|e| {
                    Error::Config(format!("cache file {path:?} line {}: {e}", line_no + 1))
                })?;
                entries.insert(parsed.key, parsed.response);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(PredictionCache {
            inner: std::sync::Arc::new(CacheInner {
                entries: RwLock::new(entries),
                sink: Some(Mutex::new(file)),
            }),
        })
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.inner
            .entries
            .read()
            .expect("cache lock")
            .get(key)
            .cloned()
    }

    pub fn put(&self, key: &str, backend: &str, prompt: &str, response: &str) -> Result<()> {
        self.inner
            .entries
            .write()
            .expect("cache lock")
            .insert(key.to_string(), response.to_string());
        if let Some(sink) = &self.inner.sink {
            let line = CacheLine {
                key: key.to_string(),
                backend: backend.to_string(),
                prompt: prompt.to_string(),
                response: response.to_string(),
                ts: chrono::Utc::now().to_rfc3339(),
            };
            let mut file = sink.lock().expect("cache sink lock");
            let encoded =
                serde_json::to_string(&line).map_err(|e| Error::Config(e.to_string()))?;
            writeln!(file, "{encoded}")?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inner.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_depends_on_backend_and_prompt() {
        let a = cache_key("mock", "prompt");
        assert_eq!(a, cache_key("mock", "prompt"));
        assert_ne!(a, cache_key("http", "prompt"));
        assert_ne!(a, cache_key("mock", "prompt2"));
    }

    #[test]
    fn put_then_get_round_trips_bytes() {
        let cache = PredictionCache::in_memory();
        let response = "line one\nline \"two\" with quotes\n";
        cache.put("k", "b", "p", response).unwrap();
        assert_eq!(cache.get("k").as_deref(), Some(response));
    }

    #[test]
    fn disk_cache_replays_across_opens() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cache = PredictionCache::open(&path).unwrap();
            cache.put("k1", "mock", "prompt text", "resp\n1").unwrap();
            cache.put("k2", "mock", "other", "resp2").unwrap();
        }
        let raw = std::fs::read_to_string(&path).unwrap();
        assert_eq!(raw.lines().count(), 2);
        let first: serde_json::Value = serde_json::from_str(raw.lines().next().unwrap()).unwrap();
        for field in ["key", "backend", "prompt", "response", "ts"] {
            assert!(first.get(field).is_some(), "missing {field}");
        }

        let reopened = PredictionCache::open(&path).unwrap();
        assert_eq!(reopened.len(), 2);
        assert_eq!(reopened.get("k1").as_deref(), Some("resp\n1"));
    }

    #[test]
    fn corrupt_cache_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        std::fs::write(&path, "not json\n").unwrap();
        assert!(PredictionCache::open(&path).is_err());
    }
}
