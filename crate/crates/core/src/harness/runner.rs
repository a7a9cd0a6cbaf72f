//! Runs the configured methods over every (seed, repeat) cell.
//!
//! Selection never sees test labels: candidate scoring queries only proxy
//! records from the train set, and the final inference prompt carries the
//! batch's unlabeled test texts. Each cell's report and prediction dump is
//! written as soon as the cell finishes; wall-clock timings go to a
//! sidecar file so report bytes stay deterministic.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{
    clean, derive_seed, load_csv, split, to_text, Dataset, RecordId,
};
use crate::error::{Error, Result};
use crate::harness::config::{BackendChoice, ExperimentConfig, Method};
use crate::harness::report::{
    cell_stem, dump_path, trace_path, write_dump, write_report, CallReport, DumpRow, ReportParams,
    RunReport,
};
use crate::metrics::{classification_report, LabeledOutcomes};
use crate::predictor::{
    predict_positional, Backend, Engine, HttpBackend, HttpBackendConfig, MockKnnBackend,
    PredictionCache, PromptObserver, Purpose,
};
use crate::selection::{build_batch_context, partition, BatchContext};
use crate::smite::{icd_select, SmiteParams};
use crate::vectorstore::{LocalEmbedder, VectorStore};

/// Environment variables consulted for the HTTP backend.
pub const ENDPOINT_ENV: &str = "SMITE_ENDPOINT";
pub const API_KEY_ENV: &str = "SMITE_API_KEY";

#[derive(Debug)]
pub struct RunOutput {
    pub out_dir: std::path::PathBuf,
    pub reports: Vec<RunReport>,
    /// Cells aborted by backend failures (everything else ran to
    /// completion); non-empty failures should surface as exit code 2.
    pub failures: Vec<CellFailure>,
}

#[derive(Debug, Clone)]
pub struct CellFailure {
    pub cell: String,
    pub message: String,
    pub exit_code: i32,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    run_experiment_observed(config, &[])
}

/// Like [`run_experiment`], with observers attached to every prediction
/// engine (used for leak and budget instrumentation).
pub fn run_experiment_observed(
    config: &ExperimentConfig,
    observers: &[Arc<dyn PromptObserver>],
) -> Result<RunOutput> {
    config.validate()?;
    let schema = config.dataset.schema()?;
    let loaded = load_csv(&config.dataset.data, &schema)?;
    let cleaned = clean(&loaded.dataset);
    if cleaned.len() < config.n_test {
        return Err(Error::Config(format!(
            "dataset has {} usable rows, fewer than n_test={}",
            cleaned.len(),
            config.n_test
        )));
    }

    let out_dir = config.out.clone();
    for sub in ["reports", "dumps", "traces"] {
        std::fs::create_dir_all(out_dir.join(sub))?;
    }
    let cache = match &config.cache {
        Some(path) => PredictionCache::open(path)?,
        None => PredictionCache::in_memory(),
    };
    let http_backend: Option<Arc<dyn Backend>> = match &config.backend {
        BackendChoice::Mock => None,
        BackendChoice::Http { endpoint, model } => {
            let endpoint = std::env::var(ENDPOINT_ENV).unwrap_or_else(|_| endpoint.clone());
            Some(Arc::new(HttpBackend::new(HttpBackendConfig {
                endpoint,
                model: model.clone(),
                api_key: std::env::var(API_KEY_ENV).ok(),
                max_retries: 3,
            })))
        }
    };

    let dataset_name = config.dataset.name();
    let mut reports = Vec::new();
    let mut failures: Vec<CellFailure> = Vec::new();
    let mut timings = String::new();

    for &seed in &config.seeds {
        let (train, test) = split(&cleaned, seed, config.n_test)?;
        let embedder = Arc::new(LocalEmbedder::fit(&train)?);
        let store = VectorStore::build(&train, embedder.as_ref())?;
        let batches = partition(&test, config.m)?;

        let needs_contexts = config
            .methods
            .iter()
            .any(|m| matches!(m, Method::Rag | Method::Smite));
        let contexts: Vec<Option<BatchContext>> = if needs_contexts {
            batches
                .iter()
                .map(|b| build_batch_context(b, &test, &store, embedder.as_ref(), config.k).map(Some))
                .collect::<Result<_>>()?
        } else {
            batches.iter().map(|_| None).collect()
        };

        let backend: Arc<dyn Backend> = match &http_backend {
            Some(backend) => backend.clone(),
            None => Arc::new(MockKnnBackend::new(&schema, embedder.clone(), config.vote_k)),
        };
        let mut engine = Engine::new(backend, cache.clone());
        for observer in observers {
            engine.add_observer(observer.clone());
        }

        for repeat in 0..config.repeats {
            for &method in &config.methods {
                let started = Instant::now();
                let outcome = run_cell(
                    config,
                    &dataset_name,
                    &out_dir,
                    method,
                    seed,
                    repeat,
                    &train,
                    &test,
                    &batches,
                    &contexts,
                    &engine,
                );
                timings.push_str(&format!(
                    "{}\t{:.3}s\n",
                    cell_stem(method, seed, repeat),
                    started.elapsed().as_secs_f64()
                ));
                match outcome {
                    Ok(report) => reports.push(report),
                    // a backend failure aborts only this cell
                    Err(err) if err.exit_code() == 2 => failures.push(CellFailure {
                        cell: cell_stem(method, seed, repeat),
                        message: err.to_string(),
                        exit_code: err.exit_code(),
                    }),
                    Err(err) => return Err(err),
                }
            }
        }
    }

    std::fs::write(out_dir.join("timings.txt"), timings)?;
    if !failures.is_empty() {
        let log: String = failures
            .iter()
            .map(|f| format!("{}\t{}\n", f.cell, f.message))
            .collect();
        std::fs::write(out_dir.join("failures.txt"), log)?;
    }
    Ok(RunOutput {
        out_dir,
        reports,
        failures,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    config: &ExperimentConfig,
    dataset_name: &str,
    out_dir: &Path,
    method: Method,
    seed: u64,
    repeat: usize,
    train: &Dataset,
    test: &Dataset,
    batches: &[crate::selection::Batch],
    contexts: &[Option<BatchContext>],
    engine: &Engine,
) -> Result<RunReport> {
    let schema = &train.schema;
    let stem = cell_stem(method, seed, repeat);
    let cell_start = engine.counters();

    let mut labels = Vec::with_capacity(test.len());
    let mut ice_sets = Vec::with_capacity(batches.len());
    let mut per_batch_selection = Vec::with_capacity(batches.len());
    let mut per_batch_total = Vec::with_capacity(batches.len());

    for (batch, ctx) in batches.iter().zip(contexts.iter()) {
        let batch_start = engine.counters();

        let ices: Vec<RecordId> = match method {
            Method::ZeroShot => Vec::new(),
            Method::RandomIce => {
                let tag = format!("random-ice/{repeat}/{}", batch.index);
                sample_ids(train, config.m, derive_seed(seed, &tag))?
            }
            Method::Rag => {
                let ctx = ctx.as_ref().expect("contexts built for rag");
                dedup_keep_order(&ctx.proxy)
            }
            Method::Smite => {
                let ctx = ctx.as_ref().expect("contexts built for smite");
                let params = SmiteParams {
                    alpha: config.alpha,
                    rho: config.rho,
                    iterations: config.l,
                };
                let (icd, trace) = icd_select(ctx, train, params, engine)?;
                let trace_file = trace_path(out_dir, &stem, batch.index);
                let json = serde_json::to_string_pretty(&trace)
                    .map_err(|e| Error::Invariant(e.to_string()))?;
                std::fs::write(trace_file, json + "\n")?;
                icd
            }
        };

        // In-context examples must come from the train split only.
        for id in &ices {
            if !train.contains(*id) {
                return Err(Error::Invariant(format!(
                    "batch {}: in-context example {id} is not a train record",
                    batch.index
                )));
            }
        }

        let after_selection = engine.counters();

        let ice_texts: Vec<String> = ices
            .iter()
            .map(|&id| Ok(to_text(train.record(id)?, schema, true)))
            .collect::<Result<_>>()?;
        let query_texts: Vec<String> = batch
            .test_ids
            .iter()
            .map(|&id| Ok(to_text(test.record(id)?, schema, false)))
            .collect::<Result<_>>()?;
        let (batch_labels, _) = predict_positional(
            engine,
            &schema.task_instruction,
            ice_texts,
            &query_texts,
            schema,
            Purpose::Inference,
        )?;

        let after_inference = engine.counters();
        per_batch_selection.push(after_selection.total() - batch_start.total());
        per_batch_total.push(after_inference.total() - batch_start.total());
        labels.extend(batch_labels);
        ice_sets.push(ices);
    }

    let outcomes = LabeledOutcomes::new(
        test.records().iter().map(|r| r.y).collect(),
        labels.clone(),
        test.records().iter().map(|r| r.z).collect(),
    )?;
    let overall = classification_report(&outcomes, config.alpha, config.rho)?;
    let per_batch = labels
        .chunks(config.m)
        .enumerate()
        .map(|(i, chunk)| {
            let slice = &test.records()[i * config.m..(i + 1) * config.m];
            let o = LabeledOutcomes::new(
                slice.iter().map(|r| r.y).collect(),
                chunk.to_vec(),
                slice.iter().map(|r| r.z).collect(),
            )?;
            classification_report(&o, config.alpha, config.rho)
        })
        .collect::<Result<Vec<_>>>()?;

    let dump_file = dump_path(out_dir, &stem);
    let rows: Vec<DumpRow> = test
        .records()
        .iter()
        .zip(labels.iter())
        .map(|(rec, &y_hat)| DumpRow {
            id: rec.id,
            y: rec.y,
            z: rec.z,
            y_hat,
            method,
            seed,
            repeat,
        })
        .collect();
    write_dump(&dump_file, &rows)?;

    let cell_end = engine.counters();
    let report = RunReport {
        dataset: dataset_name.to_string(),
        method,
        seed,
        repeat,
        backend_id: engine.backend_id(),
        params: ReportParams {
            n_test: config.n_test,
            m: config.m,
            k: config.k,
            l: config.l,
            alpha: config.alpha,
            rho: config.rho,
            vote_k: config.vote_k,
        },
        overall,
        per_batch,
        ice_sets,
        dump_file: format!("dumps/dump_{stem}.csv"),
        calls: CallReport {
            selection_calls: cell_end.selection - cell_start.selection,
            inference_calls: cell_end.inference - cell_start.inference,
            cache_hits: cell_end.cache_hits - cell_start.cache_hits,
            per_batch_selection,
            per_batch_total,
        },
    };
    write_report(out_dir, &report)?;
    Ok(report)
}

/// Samples `count` distinct train record ids (partial Fisher–Yates).
fn sample_ids(train: &Dataset, count: usize, seed: u64) -> Result<Vec<RecordId>> {
    if count > train.len() {
        return Err(Error::Argument(format!(
            "cannot sample {count} in-context examples from {} train rows",
            train.len()
        )));
    }
    let mut indices: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..count {
        let j = rng.random_range(i..indices.len());
        indices.swap(i, j);
    }
    Ok(indices[..count]
        .iter()
        .map(|&i| train.records()[i].id)
        .collect())
}

fn dedup_keep_order(ids: &[RecordId]) -> Vec<RecordId> {
    let mut seen = std::collections::BTreeSet::new();
    ids.iter().copied().filter(|id| seen.insert(*id)).collect()
}
