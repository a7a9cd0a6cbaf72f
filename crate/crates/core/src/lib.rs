//! Fairness-aware in-context example selection for tabular classification.
//!
//! The pipeline: load and clean a tabular dataset, split it with a seed,
//! embed the train set into a vector store, batch the test set, build each
//! batch's proxy (dynamic validation) set and candidate pool from same-group
//! nearest neighbors, then pick in-context examples per batch — either
//! trivially (zero-shot, random, retrieval) or with the greedy
//! individual/total-error selection loop — and score predictions with
//! combined performance/fairness error.

pub mod dataset;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod predictor;
pub mod selection;
pub mod smite;
pub mod vectorstore;

#[cfg(test)]
pub(crate) mod testhttp;

pub use dataset::{Dataset, Record, RecordId, Schema};
pub use error::{Error, Result};
pub use metrics::{LabeledOutcomes, MetricsBundle};
pub use predictor::{Backend, Engine, PredictedLabel, PredictionCache, PromptSpec};
pub use selection::{Batch, BatchContext, SupportSet};
pub use smite::{SmiteParams, SmiteTrace};
pub use vectorstore::{Embedder, Embedding, LocalEmbedder, VectorStore};
