//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use smite_core::dataset::synthetic::synthetic_dataset;
use smite_core::dataset::{split, Dataset};
use smite_core::predictor::{MockKnnBackend, PredictionCache};
use smite_core::selection::{build_batch_context, partition, BatchContext};
use smite_core::vectorstore::{LocalEmbedder, VectorStore};
use smite_core::Engine;

pub struct BenchWorld {
    pub train: Dataset,
    pub store: VectorStore,
    pub embedder: Arc<LocalEmbedder>,
    pub contexts: Vec<BatchContext>,
    pub engine: Engine,
}

/// A ready-to-query world: seeded synthetic data, fitted embedder, built
/// store, and batch contexts with the mock backend behind an engine.
pub fn bench_world(rows: usize, n_test: usize, batch_size: usize, k: usize) -> BenchWorld {
    let dataset = synthetic_dataset(rows, 7);
    let (train, test) = split(&dataset, 20, n_test).expect("split");
    let embedder = Arc::new(LocalEmbedder::fit(&train).expect("fit"));
    let store = VectorStore::build(&train, embedder.as_ref()).expect("store");
    let contexts = partition(&test, batch_size)
        .expect("partition")
        .iter()
        .map(|b| build_batch_context(b, &test, &store, embedder.as_ref(), k).expect("context"))
        .collect();
    let backend = MockKnnBackend::new(&train.schema, embedder.clone(), 3);
    let engine = Engine::new(Arc::new(backend), PredictionCache::in_memory());
    BenchWorld {
        train,
        store,
        embedder,
        contexts,
        engine,
    }
}
