//! Prompt construction, response parsing, and prediction backends.
//!
//! A [`Backend`] maps a finished prompt to raw completion text; the
//! [`Engine`] wraps one with a content-addressed cache, per-purpose call
//! counters, and observer hooks, and turns completions into positional
//! labels.

mod cache;
mod http;
mod mock;

pub use cache::{cache_key, PredictionCache};
pub use http::{HttpBackend, HttpBackendConfig};
pub use mock::MockKnnBackend;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::Schema;
use crate::error::{Error, Result};

pub const EXAMPLES_HEADER: &str = "Examples:";
pub const CLASSIFY_HEADER: &str =
    "Classify the following; answer with one label per line, labels only:";

/// Everything that goes into one prompt: the task instruction, labeled
/// in-context example texts, and unlabeled query texts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub task_instruction: String,
    pub ice_texts: Vec<String>,
    pub query_texts: Vec<String>,
}

/// A parsed per-query label. `Invalid` marks output that matched neither
/// surface form; downstream it counts as a wrong prediction and as a
/// negative for the fairness rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictedLabel {
    Zero,
    One,
    Invalid,
}

impl PredictedLabel {
    pub fn from_binary(v: u8) -> PredictedLabel {
        if v == 1 {
            PredictedLabel::One
        } else {
            PredictedLabel::Zero
        }
    }

    /// True label match; `Invalid` never matches.
    pub fn matches(self, y: u8) -> bool {
        match self {
            PredictedLabel::Zero => y == 0,
            PredictedLabel::One => y == 1,
            PredictedLabel::Invalid => false,
        }
    }

    /// Positive-class indicator with `Invalid` mapped to negative.
    pub fn as_positive(self) -> bool {
        self == PredictedLabel::One
    }
}

impl fmt::Display for PredictedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PredictedLabel::Zero => "0",
            PredictedLabel::One => "1",
            PredictedLabel::Invalid => "INVALID",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for PredictedLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<PredictedLabel> {
        match s {
            "0" => Ok(PredictedLabel::Zero),
            "1" => Ok(PredictedLabel::One),
            "INVALID" => Ok(PredictedLabel::Invalid),
            other => Err(Error::Argument(format!("unknown label {other:?}"))),
        }
    }
}

/// Labels for one prediction call, positional over the query texts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub labels: Vec<PredictedLabel>,
    pub raw_response: String,
    pub backend_id: String,
    pub cache_hit: bool,
}

/// Maps a prompt to raw completion text. Implementations must be safe for
/// concurrent calls.
pub trait Backend: Send + Sync {
    /// Stable identity mixed into cache keys.
    fn id(&self) -> String;
    fn complete(&self, prompt: &str) -> Result<String>;
}

/// Why a prediction is being made: scoring candidate in-context sets
/// against the proxy set, or final inference over true test examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Purpose {
    Selection,
    Inference,
}

/// Sees every prediction request before it is served (cached or not).
pub trait PromptObserver: Send + Sync {
    fn on_predict(&self, purpose: Purpose, spec: &PromptSpec);
}

/// Renders a spec into the fixed prompt layout:
///
/// ```text
/// <instruction>
///
/// Examples:
/// <labeled example per line>
///
/// Classify the following; answer with one label per line, labels only:
/// 1. <query>
/// ```
///
/// The examples block is omitted entirely for zero-shot specs. Identical
/// specs produce byte-identical prompts.
pub fn build_prompt(spec: &PromptSpec) -> String {
    let mut blocks = Vec::with_capacity(3);
    blocks.push(spec.task_instruction.clone());
    if !spec.ice_texts.is_empty() {
        blocks.push(format!("{EXAMPLES_HEADER}\n{}", spec.ice_texts.join("\n")));
    }
    let queries: Vec<String> = spec
        .query_texts
        .iter()
        .enumerate()
        .map(|(i, q)| format!("{}. {q}", i + 1))
        .collect();
    blocks.push(format!("{CLASSIFY_HEADER}\n{}", queries.join("\n")));
    blocks.join("\n\n")
}

/// Maps raw completion text to exactly `expected` labels, one per line:
/// a line containing the positive surface label (case-insensitive) or the
/// standalone token `1` is positive, the negative surface or token `0`
/// negative, anything else `Invalid`. Missing lines pad with `Invalid`,
/// surplus lines are dropped.
pub fn parse_response(raw: &str, expected: usize, schema: &Schema) -> Vec<PredictedLabel> {
    let positive = schema.label_positive_value.to_lowercase();
    let negative = schema.label_negative_value.to_lowercase();
    let mut labels: Vec<PredictedLabel> = raw
        .lines()
        .take(expected)
        .map(|line| {
            let lower = line.trim().to_lowercase();
            if lower.contains(&positive) || has_token(&lower, "1") {
                PredictedLabel::One
            } else if lower.contains(&negative) || has_token(&lower, "0") {
                PredictedLabel::Zero
            } else {
                PredictedLabel::Invalid
            }
        })
        .collect();
    labels.resize(expected, PredictedLabel::Invalid);
    labels
}

fn has_token(line: &str, token: &str) -> bool {
    line.split(|c: char| !c.is_alphanumeric())
        .any(|t| t == token)
}

/// Predicts labels for `query_texts` positionally, deduplicating repeated
/// query text inside the prompt and fanning the shared prediction back to
/// every position that asked for it. Returns the positional labels and
/// whether the underlying call was served from cache.
pub fn predict_positional(
    engine: &Engine,
    task_instruction: &str,
    ice_texts: Vec<String>,
    query_texts: &[String],
    schema: &Schema,
    purpose: Purpose,
) -> Result<(Vec<PredictedLabel>, bool)> {
    let mut unique: Vec<String> = Vec::new();
    let mut index_of: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    let mut positions = Vec::with_capacity(query_texts.len());
    for text in query_texts {
        let idx = match index_of.get(text.as_str()) {
            Some(&idx) => idx,
            None => {
                unique.push(text.clone());
                index_of.insert(text.as_str(), unique.len() - 1);
                unique.len() - 1
            }
        };
        positions.push(idx);
    }

    let spec = PromptSpec {
        task_instruction: task_instruction.to_string(),
        ice_texts,
        query_texts: unique,
    };
    let result = engine.predict(&spec, schema, purpose)?;
    let labels = positions.into_iter().map(|idx| result.labels[idx]).collect();
    Ok((labels, result.cache_hit))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub selection: u64,
    pub inference: u64,
    pub cache_hits: u64,
}

impl CallCounts {
    pub fn total(&self) -> u64 {
        self.selection + self.inference
    }
}

/// A backend plus cache, counters, and observers. Prediction is a pure
/// function of (backend id, prompt bytes) for deterministic backends and
/// for every cache hit.
pub struct Engine {
    backend: Arc<dyn Backend>,
    cache: PredictionCache,
    observers: Vec<Arc<dyn PromptObserver>>,
    selection_calls: AtomicU64,
    inference_calls: AtomicU64,
    cache_hits: AtomicU64,
}

impl Engine {
    pub fn new(backend: Arc<dyn Backend>, cache: PredictionCache) -> Engine {
        Engine {
            backend,
            cache,
            observers: Vec::new(),
            selection_calls: AtomicU64::new(0),
            inference_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    pub fn add_observer(&mut self, observer: Arc<dyn PromptObserver>) {
        self.observers.push(observer);
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    pub fn counters(&self) -> CallCounts {
        CallCounts {
            selection: self.selection_calls.load(Ordering::SeqCst),
            inference: self.inference_calls.load(Ordering::SeqCst),
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
        }
    }

    pub fn predict(
        &self,
        spec: &PromptSpec,
        schema: &Schema,
        purpose: Purpose,
    ) -> Result<PredictionResult> {
        if spec.query_texts.is_empty() {
            return Err(Error::Argument("prediction needs at least one query".into()));
        }
        match purpose {
            Purpose::Selection => self.selection_calls.fetch_add(1, Ordering::SeqCst),
            Purpose::Inference => self.inference_calls.fetch_add(1, Ordering::SeqCst),
        };
        for observer in &self.observers {
            observer.on_predict(purpose, spec);
        }

        let backend_id = self.backend.id();
        let prompt = build_prompt(spec);
        let key = cache_key(&backend_id, &prompt);

        let (raw_response, cache_hit) = match self.cache.get(&key) {
            Some(hit) => {
                self.cache_hits.fetch_add(1, Ordering::SeqCst);
                (hit, true)
            }
            None => {
                let response = self.backend.complete(&prompt)?;
                self.cache.put(&key, &backend_id, &prompt, &response)?;
                (response, false)
            }
        };

        Ok(PredictionResult {
            labels: parse_response(&raw_response, spec.query_texts.len(), schema),
            raw_response,
            backend_id,
            cache_hit,
        })
    }
}
