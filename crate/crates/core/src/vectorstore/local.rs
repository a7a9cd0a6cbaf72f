//! Deterministic offline embedder.
//!
//! Each schema feature owns a block of the output vector: categorical
//! values are FNV-hashed into one of 16 one-hot buckets, numeric values are
//! min-max scaled to [0,1] with bounds taken from the train set. Input text
//! is the `"name is value"` serialization; fields whose key is not a schema
//! feature (e.g. an appended label) are ignored, so labeled and unlabeled
//! texts of the same record embed identically.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::vectorstore::{Embedder, Embedding};

const CATEGORICAL_BUCKETS: usize = 16;

#[derive(Debug, Clone)]
enum FeatureKind {
    Numeric { min: f64, max: f64 },
    Categorical,
}

#[derive(Debug, Clone)]
struct FeatureBlock {
    name: String,
    offset: usize,
    kind: FeatureKind,
}

#[derive(Debug, Clone)]
pub struct LocalEmbedder {
    blocks: Vec<FeatureBlock>,
    dimension: usize,
}

impl LocalEmbedder {
    /// Decides numeric vs categorical per feature and fixes numeric bounds
    /// from the train set. A feature is numeric iff every train value
    /// parses as a finite number.
    pub fn fit(train: &Dataset) -> Result<LocalEmbedder> {
        if train.is_empty() {
            return Err(Error::Argument(
                "cannot fit the local embedder on an empty train set".into(),
            ));
        }
        let mut blocks = Vec::new();
        let mut offset = 0usize;
        for name in &train.schema.feature_names {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            let mut numeric = true;
            for rec in train.records() {
                let raw = rec.features.get(name).map(String::as_str).unwrap_or("");
                match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => {
                        min = min.min(v);
                        max = max.max(v);
                    }
                    _ => {
                        numeric = false;
                        break;
                    }
                }
            }
            let kind = if numeric {
                FeatureKind::Numeric { min, max }
            } else {
                FeatureKind::Categorical
            };
            let width = match kind {
                FeatureKind::Numeric { .. } => 1,
                FeatureKind::Categorical => CATEGORICAL_BUCKETS,
            };
            blocks.push(FeatureBlock {
                name: name.clone(),
                offset,
                kind,
            });
            offset += width;
        }
        Ok(LocalEmbedder {
            blocks,
            dimension: offset,
        })
    }
}

impl Embedder for LocalEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        if text.is_empty() {
            return Err(Error::Argument("cannot embed empty text".into()));
        }
        let fields = parse_fields(text);
        let mut values = vec![0.0; self.dimension];
        for block in &self.blocks {
            let Some(raw) = fields
                .iter()
                .find(|(k, _)| *k == block.name)
                .map(|(_, v)| *v)
            else {
                continue;
            };
            match block.kind {
                FeatureKind::Numeric { min, max } => {
                    let parsed = raw.parse::<f64>().unwrap_or(min);
                    let scaled = if max > min {
                        ((parsed - min) / (max - min)).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    values[block.offset] = scaled;
                }
                FeatureKind::Categorical => {
                    let bucket = hash_bucket(&block.name, raw);
                    values[block.offset + bucket] = 1.0;
                }
            }
        }
        Ok(Embedding(values))
    }
}

/// Splits `"a is 1, b is x"` into (key, value) pairs on the first `" is "`
/// of each comma-separated segment.
fn parse_fields(text: &str) -> Vec<(&str, &str)> {
    text.split(", ")
        .filter_map(|segment| segment.split_once(" is "))
        .collect()
}

fn hash_bucket(feature: &str, value: &str) -> usize {
    (fnv1a64(feature, value) % CATEGORICAL_BUCKETS as u64) as usize
}

fn fnv1a64(feature: &str, value: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in feature.bytes().chain([0u8]).chain(value.bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
