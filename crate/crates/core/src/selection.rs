//! Batch construction: per test batch, the same-group support sets, the
//! proxy (dynamic validation) set, and the candidate pool.
//!
//! Each test example's support set holds its `k` nearest same-`z` training
//! records. The proxy set is positional: entry `j` is position `j`'s rank-1
//! neighbor, standing in for the label-hidden test example when candidate
//! in-context sets are scored. The candidate pool is the union of all
//! support entries minus every proxy member, so the two sets never overlap.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::{to_text, Dataset, Record, RecordId};
use crate::error::{Error, Result};
use crate::vectorstore::{Embedder, VectorStore};

/// One test batch: contiguous slice of the (shuffled) test order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub index: usize,
    pub test_ids: Vec<RecordId>,
}

/// Splits the test set into `|test| / batch_size` contiguous batches.
pub fn partition(test: &Dataset, batch_size: usize) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Argument("batch size must be positive".into()));
    }
    if !test.len().is_multiple_of(batch_size) {
        return Err(Error::Argument(format!(
            "test size {} is not divisible by batch size {batch_size}",
            test.len()
        )));
    }
    Ok(test
        .records()
        .chunks(batch_size)
        .enumerate()
        .map(|(index, chunk)| Batch {
            index,
            test_ids: chunk.iter().map(|r| r.id).collect(),
        })
        .collect())
}

/// Ranked same-group neighbors of one test position (rank 1 first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportSet {
    pub batch_index: usize,
    pub position: usize,
    pub ranked_ids: Vec<RecordId>,
}

impl SupportSet {
    /// 1-based rank lookup.
    pub fn at_rank(&self, rank: usize) -> Option<RecordId> {
        self.ranked_ids.get(rank.checked_sub(1)?).copied()
    }
}

/// Retrieves the `support_size` nearest training records sharing the test
/// example's sensitive attribute. The query embeds the unlabeled text.
pub fn build_support(
    store: &VectorStore,
    embedder: &dyn Embedder,
    schema: &crate::dataset::Schema,
    test_example: &Record,
    support_size: usize,
    batch_index: usize,
    position: usize,
) -> Result<SupportSet> {
    let text = to_text(test_example, schema, false);
    let query = embedder.embed(&text)?;
    let ranked_ids = store.query(&query, support_size, test_example.z)?;
    Ok(SupportSet {
        batch_index,
        position,
        ranked_ids,
    })
}

/// One batch plus everything selection needs: positional proxies, per-
/// position support sets, and the proxy-disjoint candidate pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchContext {
    pub batch_index: usize,
    pub test_ids: Vec<RecordId>,
    /// Positional: entry `j` is the rank-1 neighbor of test position `j`.
    /// Two positions sharing a nearest neighbor repeat its id here.
    pub proxy: Vec<RecordId>,
    pub support: Vec<SupportSet>,
    pub candidate_pool: BTreeSet<RecordId>,
}

impl BatchContext {
    pub fn proxy_id_set(&self) -> BTreeSet<RecordId> {
        self.proxy.iter().copied().collect()
    }

    fn check_invariants(&self) -> Result<()> {
        let proxy_ids = self.proxy_id_set();
        if self.candidate_pool.intersection(&proxy_ids).next().is_some() {
            return Err(Error::Invariant(format!(
                "batch {}: candidate pool overlaps proxy set",
                self.batch_index
            )));
        }
        for (j, support) in self.support.iter().enumerate() {
            if support.at_rank(1) != Some(self.proxy[j]) {
                return Err(Error::Invariant(format!(
                    "batch {} position {j}: proxy is not the rank-1 support entry",
                    self.batch_index
                )));
            }
        }
        Ok(())
    }
}

/// Builds the batch's support sets, proxy list, and candidate pool.
pub fn build_batch_context(
    batch: &Batch,
    test: &Dataset,
    store: &VectorStore,
    embedder: &dyn Embedder,
    support_size: usize,
) -> Result<BatchContext> {
    let schema = &test.schema;
    let mut support = Vec::with_capacity(batch.test_ids.len());
    for (position, &test_id) in batch.test_ids.iter().enumerate() {
        let record = test.record(test_id)?;
        let s = build_support(
            store,
            embedder,
            schema,
            record,
            support_size,
            batch.index,
            position,
        )
        .map_err(|e| e.at_position(batch.index, position))?;
        support.push(s);
    }

    let proxy: Vec<RecordId> = support
        .iter()
        .map(|s| s.at_rank(1).expect("support sets are non-empty"))
        .collect();
    let proxy_ids: BTreeSet<RecordId> = proxy.iter().copied().collect();
    let candidate_pool: BTreeSet<RecordId> = support
        .iter()
        .flat_map(|s| s.ranked_ids.iter().copied())
        .filter(|id| !proxy_ids.contains(id))
        .collect();

    let ctx = BatchContext {
        batch_index: batch.index,
        test_ids: batch.test_ids.clone(),
        proxy,
        support,
        candidate_pool,
    };
    ctx.check_invariants()?;
    Ok(ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Record, RecordId, Schema};
    use crate::vectorstore::LocalEmbedder;

    fn schema() -> Schema {
        Schema {
            feature_names: vec!["x".into(), "grp".into()],
            label_name: "label".into(),
            label_positive_value: "yes".into(),
            label_negative_value: "no".into(),
            sensitive_name: "grp".into(),
            sensitive_reference_value: "m".into(),
            task_instruction: "t".into(),
        }
    }

    fn record(id: u32, x: f64, z: u8, y: u8) -> Record {
        Record {
            id: RecordId(id),
            features: [
                ("x".to_string(), format!("{x:.2}")),
                ("grp".to_string(), if z == 1 { "m".into() } else { "f".into() }),
            ]
            .into_iter()
            .collect(),
            y,
            z,
        }
    }

    fn dataset(records: Vec<Record>) -> Dataset {
        Dataset::new(schema(), records).unwrap()
    }

    #[test]
    fn partition_yields_contiguous_batches() {
        let test = dataset((0..1000).map(|i| record(i, f64::from(i), 1, 0)).collect());
        let batches = partition(&test, 20).unwrap();
        assert_eq!(batches.len(), 50);
        assert_eq!(batches[0].test_ids.len(), 20);
        assert_eq!(batches[0].test_ids[0], RecordId(0));
        assert_eq!(batches[49].test_ids[19], RecordId(999));
    }

    #[test]
    fn single_batch_preserves_order() {
        let test = dataset((0..20).map(|i| record(i, f64::from(i), 1, 0)).collect());
        let batches = partition(&test, 20).unwrap();
        assert_eq!(batches.len(), 1);
        let ids: Vec<u32> = batches[0].test_ids.iter().map(|i| i.0).collect();
        assert_eq!(ids, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn indivisible_test_size_is_rejected() {
        let test = dataset((0..30).map(|i| record(i, f64::from(i), 1, 0)).collect());
        assert!(matches!(partition(&test, 20), Err(Error::Argument(_))));
    }

    /// Train rows on a line; same-z filtering plus distance ordering are
    /// easy to verify by hand.
    fn line_world() -> (Dataset, VectorStore, LocalEmbedder) {
        // z=1: ids 0..5 at x = 0.0, 0.1, 0.2, 0.3, 0.4
        // z=0: ids 5..8 at x = 0.05, 0.15, 0.25
        let mut records: Vec<Record> = (0..5)
            .map(|i| record(i, 0.1 * f64::from(i), 1, (i % 2) as u8))
            .collect();
        records.extend((0..3).map(|i| record(5 + i, 0.05 + 0.1 * f64::from(i), 0, 1)));
        let train = dataset(records);
        let embedder = LocalEmbedder::fit(&train).unwrap();
        let store = VectorStore::build(&train, &embedder).unwrap();
        (train, store, embedder)
    }

    #[test]
    fn support_respects_group_filter() {
        let (train, store, embedder) = line_world();
        let probe = record(100, 0.12, 1, 0);
        let support =
            build_support(&store, &embedder, &train.schema, &probe, 3, 0, 0).unwrap();
        assert_eq!(support.ranked_ids.len(), 3);
        for id in &support.ranked_ids {
            assert_eq!(train.record(*id).unwrap().z, 1, "same-z constraint");
        }
    }

    #[test]
    fn support_k_one_is_nearest_same_group() {
        let (train, store, embedder) = line_world();
        let probe = record(100, 0.31, 1, 0);
        let support =
            build_support(&store, &embedder, &train.schema, &probe, 1, 0, 0).unwrap();
        assert_eq!(support.ranked_ids, vec![RecordId(3)]); // x = 0.3
        let _ = train;
    }

    #[test]
    fn support_matches_brute_force_ordering() {
        let (train, store, embedder) = line_world();
        let probe = record(100, 0.18, 0, 0);
        let support =
            build_support(&store, &embedder, &train.schema, &probe, 3, 0, 0).unwrap();

        // brute force: embed everything, sort by cosine desc then id
        let q = embedder
            .embed(&to_text(&probe, &train.schema, false))
            .unwrap();
        let mut scored: Vec<(f64, RecordId)> = train
            .records()
            .iter()
            .filter(|r| r.z == 0)
            .map(|r| {
                let v = embedder.embed(&to_text(r, &train.schema, false)).unwrap();
                (crate::vectorstore::cosine(&q.0, &v.0), r.id)
            })
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let expected: Vec<RecordId> = scored.into_iter().take(3).map(|(_, id)| id).collect();
        assert_eq!(support.ranked_ids, expected);
    }

    #[test]
    fn shared_nearest_neighbor_duplicates_in_proxy_but_not_pool() {
        // two z=1 test rows at the same x share their nearest neighbor
        let (train, store, embedder) = line_world();
        let test = dataset(vec![record(200, 0.1, 1, 0), record(201, 0.1, 1, 0)]);
        let batch = partition(&test, 2).unwrap().remove(0);
        let ctx = build_batch_context(&batch, &test, &store, &embedder, 3).unwrap();
        assert_eq!(ctx.proxy.len(), 2);
        assert_eq!(ctx.proxy[0], ctx.proxy[1], "positional duplication");
        assert!(!ctx.candidate_pool.contains(&ctx.proxy[0]));
        let _ = train;
    }

    #[test]
    fn minimal_batch_splits_rank_one_and_two() {
        let (_, store, embedder) = line_world();
        let test = dataset(vec![record(200, 0.0, 1, 0)]);
        let batch = partition(&test, 1).unwrap().remove(0);
        let ctx = build_batch_context(&batch, &test, &store, &embedder, 2).unwrap();
        let support = &ctx.support[0];
        assert_eq!(ctx.proxy, vec![support.at_rank(1).unwrap()]);
        assert_eq!(
            ctx.candidate_pool.iter().copied().collect::<Vec<_>>(),
            vec![support.at_rank(2).unwrap()]
        );
    }

    #[test]
    fn context_serializes_for_audit_dumps() {
        let (_, store, embedder) = line_world();
        let test = dataset(vec![record(200, 0.0, 1, 0)]);
        let batch = partition(&test, 1).unwrap().remove(0);
        let ctx = build_batch_context(&batch, &test, &store, &embedder, 2).unwrap();
        let json = serde_json::to_string(&ctx).unwrap();
        let back: BatchContext = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ctx);
    }

    #[test]
    fn pool_is_support_union_minus_proxies() {
        let (_, store, embedder) = line_world();
        let test = dataset(vec![
            record(200, 0.0, 1, 0),
            record(201, 0.2, 1, 0),
            record(202, 0.4, 1, 0),
        ]);
        let batch = partition(&test, 3).unwrap().remove(0);
        let ctx = build_batch_context(&batch, &test, &store, &embedder, 4).unwrap();

        let union: BTreeSet<RecordId> = ctx
            .support
            .iter()
            .flat_map(|s| s.ranked_ids.iter().copied())
            .collect();
        let proxies = ctx.proxy_id_set();
        let expected: BTreeSet<RecordId> =
            union.difference(&proxies).copied().collect();
        assert_eq!(ctx.candidate_pool, expected);
        assert!(ctx.candidate_pool.len() <= 3 * 3);
        assert!(ctx.candidate_pool.intersection(&proxies).next().is_none());
    }

    #[test]
    fn insufficient_support_is_annotated_with_position() {
        let (_, store, embedder) = line_world();
        // z=0 side has only 3 train rows; asking for 4 must fail at position 0
        let test = dataset(vec![record(200, 0.1, 0, 0)]);
        let batch = partition(&test, 1).unwrap().remove(0);
        let err = build_batch_context(&batch, &test, &store, &embedder, 4).unwrap_err();
        match err {
            Error::AtPosition {
                batch: 0,
                position: 0,
                source,
            } => assert!(matches!(*source, Error::InsufficientSupport { .. })),
            other => panic!("unexpected error {other}"),
        }
    }
}
