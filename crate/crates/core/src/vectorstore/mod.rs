//! Embedding storage and filtered exact nearest-neighbor retrieval.
//!
//! The store is a brute-force cosine scan: dataset sizes here top out in
//! the tens of thousands, and an exact scan keeps rankings deterministic.

mod local;
mod remote;

pub use local::LocalEmbedder;
pub use remote::{RemoteEmbedder, RemoteEmbedderConfig};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{to_text, Dataset, RecordId};
use crate::error::{Error, Result};

/// A fixed-length vector of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dimension(&self) -> usize {
        self.0.len()
    }
}

/// Turns serialized record text into a fixed-dimension embedding.
///
/// Implementations must be deterministic: identical text maps to an
/// identical vector.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Embedding>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoreEntry {
    id: RecordId,
    z: u8,
    vector: Vec<f64>,
}

const STORE_FORMAT_VERSION: u32 = 1;

/// Immutable collection of (record id, sensitive attribute, vector) entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorStore {
    version: u32,
    dimension: usize,
    entries: Vec<StoreEntry>,
}

impl VectorStore {
    /// Embeds every training record (label excluded from the text) and
    /// stores its vector together with its sensitive attribute.
    pub fn build(train: &Dataset, embedder: &dyn Embedder) -> Result<VectorStore> {
        if train.is_empty() {
            return Err(Error::Argument(
                "cannot build a vector store from an empty train set".into(),
            ));
        }
        let mut entries = Vec::with_capacity(train.len());
        for rec in train.records() {
            let text = to_text(rec, &train.schema, false);
            let embedding = embedder.embed(&text).map_err(|e| Error::Embed {
                record_id: rec.id.0,
                reason: e.to_string(),
            })?;
            if embedding.dimension() != embedder.dimension() {
                return Err(Error::Embed {
                    record_id: rec.id.0,
                    reason: format!(
                        "embedder returned dimension {} (declared {})",
                        embedding.dimension(),
                        embedder.dimension()
                    ),
                });
            }
            entries.push(StoreEntry {
                id: rec.id,
                z: rec.z,
                vector: embedding.0,
            });
        }
        Ok(VectorStore {
            version: STORE_FORMAT_VERSION,
            dimension: embedder.dimension(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// The `k` entries with sensitive attribute `z_filter` closest to `q`,
    /// by descending cosine similarity with ties broken by ascending id.
    pub fn query(&self, q: &Embedding, k: usize, z_filter: u8) -> Result<Vec<RecordId>> {
        if k == 0 {
            return Err(Error::Argument("query needs k >= 1".into()));
        }
        let mut scored: Vec<(f64, RecordId)> = self
            .entries
            .iter()
            .filter(|e| e.z == z_filter)
            .map(|e| (cosine(&q.0, &e.vector), e.id))
            .collect();
        if scored.len() < k {
            return Err(Error::InsufficientSupport {
                z_filter,
                needed: k,
                available: scored.len(),
            });
        }
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite similarity").then(a.1.cmp(&b.1)));
        Ok(scored.into_iter().take(k).map(|(_, id)| id).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec(self).map_err(|e| Error::Schema(e.to_string()))?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<VectorStore> {
        let bytes = std::fs::read(path)?;
        let store: VectorStore =
            serde_json::from_slice(&bytes).map_err(|e| Error::Schema(e.to_string()))?;
        if store.version != STORE_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "vector store format version {} (supported: {STORE_FORMAT_VERSION})",
                store.version
            )));
        }
        Ok(store)
    }
}

/// Cosine similarity; either vector having zero norm yields 0 so degenerate
/// rows rank last instead of dividing by zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let norm = na.sqrt() * nb.sqrt();
    if norm == 0.0 {
        0.0
    } else {
        dot / norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy_store(vectors: &[(u32, u8, Vec<f64>)]) -> VectorStore {
        VectorStore {
            version: STORE_FORMAT_VERSION,
            dimension: vectors[0].2.len(),
            entries: vectors
                .iter()
                .map(|(id, z, v)| StoreEntry {
                    id: RecordId(*id),
                    z: *z,
                    vector: v.clone(),
                })
                .collect(),
        }
    }

    #[test]
    fn self_similarity_ranks_first() {
        let store = toy_store(&[
            (0, 1, vec![1.0, 0.0]),
            (1, 1, vec![0.0, 1.0]),
            (2, 1, vec![0.7, 0.7]),
        ]);
        let hits = store.query(&Embedding(vec![0.0, 1.0]), 1, 1).unwrap();
        assert_eq!(hits, vec![RecordId(1)]);
    }

    #[test]
    fn filter_mismatch_is_insufficient_support() {
        let store = toy_store(&[(0, 0, vec![1.0, 0.0]), (1, 0, vec![0.0, 1.0])]);
        let err = store.query(&Embedding(vec![1.0, 0.0]), 1, 1).unwrap_err();
        match err {
            Error::InsufficientSupport {
                z_filter,
                needed,
                available,
            } => {
                assert_eq!((z_filter, needed, available), (1, 1, 0));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn five_point_ranking_matches_hand_cosines() {
        // q = (1, 0):
        //   id 0: (1, 0)   -> cos = 1.0
        //   id 1: (2, 0)   -> cos = 1.0      (tie with id 0, id order wins)
        //   id 2: (1, 1)   -> cos = 0.7071
        //   id 3: (0, 1)   -> cos = 0.0
        //   id 4: (-1, 0)  -> cos = -1.0
        let store = toy_store(&[
            (3, 1, vec![0.0, 1.0]),
            (1, 1, vec![2.0, 0.0]),
            (4, 1, vec![-1.0, 0.0]),
            (0, 1, vec![1.0, 0.0]),
            (2, 1, vec![1.0, 1.0]),
        ]);
        let hits = store.query(&Embedding(vec![1.0, 0.0]), 5, 1).unwrap();
        let ids: Vec<u32> = hits.iter().map(|id| id.0).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn zero_vectors_rank_last_not_crash() {
        let store = toy_store(&[(0, 1, vec![0.0, 0.0]), (1, 1, vec![1.0, 0.0])]);
        let hits = store.query(&Embedding(vec![1.0, 0.0]), 2, 1).unwrap();
        assert_eq!(hits[0], RecordId(1));
        assert_eq!(hits[1], RecordId(0));
        let zero_q = store.query(&Embedding(vec![0.0, 0.0]), 2, 1).unwrap();
        // all similarities 0 -> pure id order
        assert_eq!(zero_q, vec![RecordId(0), RecordId(1)]);
    }

    #[test]
    fn save_load_round_trip_is_byte_identical() {
        let store = toy_store(&[(0, 1, vec![0.25, -1.5]), (1, 0, vec![0.1, 0.3])]);
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        store.save(&a).unwrap();
        let reloaded = VectorStore::load(&a).unwrap();
        reloaded.save(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(
            reloaded.query(&Embedding(vec![0.25, -1.5]), 1, 1).unwrap(),
            vec![RecordId(0)]
        );
    }

    #[test]
    fn version_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.json");
        std::fs::write(&path, r#"{"version":99,"dimension":1,"entries":[]}"#).unwrap();
        assert!(matches!(VectorStore::load(&path), Err(Error::Schema(_))));
    }

    fn vector_strategy() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, 4)
    }

    proptest! {
        #[test]
        fn query_respects_filter_and_prefix(
            vectors in proptest::collection::vec((vector_strategy(), 0u8..2), 6..24),
            q in vector_strategy(),
        ) {
            let entries: Vec<(u32, u8, Vec<f64>)> = vectors
                .into_iter()
                .enumerate()
                .map(|(i, (v, z))| (i as u32, z, v))
                .collect();
            let store = toy_store(&entries);
            let available = entries.iter().filter(|(_, z, _)| *z == 1).count();
            prop_assume!(available >= 2);
            let q = Embedding(q);
            let k_hits = store.query(&q, available - 1, 1).unwrap();
            let k1_hits = store.query(&q, available, 1).unwrap();
            prop_assert_eq!(&k1_hits[..k_hits.len()], &k_hits[..]);
            for id in &k1_hits {
                prop_assert_eq!(entries[id.0 as usize].1, 1);
            }
        }

        #[test]
        fn query_is_scale_invariant(
            vectors in proptest::collection::vec(vector_strategy(), 4..12),
            q in vector_strategy(),
            scale in 0.001f64..1000.0,
        ) {
            let entries: Vec<(u32, u8, Vec<f64>)> = vectors
                .into_iter()
                .enumerate()
                .map(|(i, v)| (i as u32, 1, v))
                .collect();
            let store = toy_store(&entries);
            let k = entries.len();
            let base = store.query(&Embedding(q.clone()), k, 1).unwrap();
            let scaled_q: Vec<f64> = q.iter().map(|x| x * scale).collect();
            let scaled = store.query(&Embedding(scaled_q), k, 1).unwrap();
            prop_assert_eq!(base, scaled);
        }
    }
}
