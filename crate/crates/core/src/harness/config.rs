//! Experiment configuration, read from a TOML file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{builtin_schema, load_schema, Schema};
use crate::error::{Error, Result};

/// Which dataset to run on: a shipped preset (`adult`, `compas`) with its
/// CSV path, or `custom` with both a CSV and a schema TOML.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetChoice {
    pub preset: String,
    pub data: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
}

impl DatasetChoice {
    pub fn schema(&self) -> Result<Schema> {
        match self.preset.as_str() {
            "custom" => {
                let path = self.schema.as_ref().ok_or_else(|| {
                    Error::Config("custom dataset requires a schema path".into())
                })?;
                load_schema(path)
            }
            preset => builtin_schema(preset),
        }
    }

    /// Label used in reports and file names.
    pub fn name(&self) -> String {
        if self.preset == "custom" {
            self.data
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "custom".into())
        } else {
            self.preset.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ZeroShot,
    RandomIce,
    Rag,
    Smite,
}

impl Method {
    pub fn all() -> Vec<Method> {
        vec![Method::ZeroShot, Method::RandomIce, Method::Rag, Method::Smite]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::ZeroShot => "zero_shot",
            Method::RandomIce => "random_ice",
            Method::Rag => "rag",
            Method::Smite => "smite",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s {
            "zero_shot" | "zero-shot" => Ok(Method::ZeroShot),
            "random_ice" | "random-ice" | "random" => Ok(Method::RandomIce),
            "rag" => Ok(Method::Rag),
            "smite" => Ok(Method::Smite),
            other => Err(Error::Config(format!(
                "unknown method {other:?} (expected zero_shot, random_ice, rag, or smite)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendChoice {
    #[default]
    Mock,
    Http {
        endpoint: String,
        model: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetChoice,
    #[serde(default = "defaults::seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "defaults::repeats")]
    pub repeats: usize,
    #[serde(default = "defaults::n_test")]
    pub n_test: usize,
    /// Batch size.
    #[serde(default = "defaults::m")]
    pub m: usize,
    /// Support-set size per test example.
    #[serde(default = "defaults::k")]
    pub k: usize,
    /// Selection iteration budget.
    #[serde(default = "defaults::l")]
    pub l: usize,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::rho")]
    pub rho: f64,
    /// Vote size of the offline mock backend.
    #[serde(default = "defaults::vote_k")]
    pub vote_k: usize,
    #[serde(default = "Method::all")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub backend: BackendChoice,
    /// Optional on-disk prediction cache (JSON lines). Without it, each
    /// run uses a process-local cache.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
    #[serde(default = "defaults::out")]
    pub out: PathBuf,
}

mod defaults {
    use std::path::PathBuf;

    pub fn seeds() -> Vec<u64> {
        vec![20, 25, 42]
    }
    pub fn repeats() -> usize {
        3
    }
    pub fn n_test() -> usize {
        1000
    }
    pub fn m() -> usize {
        20
    }
    pub fn k() -> usize {
        15
    }
    pub fn l() -> usize {
        10
    }
    pub fn alpha() -> f64 {
        0.5
    }
    pub fn rho() -> f64 {
        1e-5
    }
    pub fn vote_k() -> usize {
        3
    }
    pub fn out() -> PathBuf {
        PathBuf::from("runs")
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("reading {path:?}: {e}")))?;
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{path:?}: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.m == 0 || self.n_test == 0 || !self.n_test.is_multiple_of(self.m) {
            return Err(Error::Config(format!(
                "n_test ({}) must be a positive multiple of m ({})",
                self.n_test, self.m
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha must lie in [0,1], got {}",
                self.alpha
            )));
        }
        if self.rho.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::Config(format!("rho must be positive, got {}", self.rho)));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let needs_support = self.methods.contains(&Method::Smite) || self.methods.contains(&Method::Rag);
        if needs_support && self.k < 2 {
            return Err(Error::Config(
                "k must be at least 2 when smite or rag is enabled".into(),
            ));
        }
        if self.methods.contains(&Method::Smite) && self.l == 0 {
            return Err(Error::Config("l must be at least 1 for smite".into()));
        }
        if self.vote_k == 0 {
            return Err(Error::Config("vote_k must be at least 1".into()));
        }
        Ok(())
    }
}
