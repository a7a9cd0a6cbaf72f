//! Tabular datasets with a binary label and a binary sensitive attribute:
//! CSV loading, null cleaning, seeded splitting, and text serialization.

mod presets;
pub mod synthetic;

pub use presets::{builtin_schema, load_schema, BUILTIN_PRESETS};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stable identifier of a row within one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordId(pub u32);

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Column layout and label/sensitive-value mapping for one dataset.
///
/// `label_positive_value` maps to y=1 and `label_negative_value` to y=0;
/// both surfaces are also what [`to_text`] emits and what response parsing
/// looks for. `sensitive_reference_value` maps to z=1, anything else to z=0.
/// The sensitive column may also appear in `feature_names` (it is both a
/// feature and the protected attribute).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub feature_names: Vec<String>,
    pub label_name: String,
    pub label_positive_value: String,
    pub label_negative_value: String,
    pub sensitive_name: String,
    pub sensitive_reference_value: String,
    pub task_instruction: String,
}

impl Schema {
    /// Surface form of a binary label under this schema.
    pub fn label_surface(&self, y: u8) -> &str {
        if y == 1 {
            &self.label_positive_value
        } else {
            &self.label_negative_value
        }
    }

    fn validate(&self) -> Result<()> {
        if self.feature_names.is_empty() {
            return Err(Error::Schema("feature_names must not be empty".into()));
        }
        if self.feature_names.contains(&self.label_name) {
            return Err(Error::Schema(format!(
                "label column {:?} must not be listed as a feature",
                self.label_name
            )));
        }
        if self.label_positive_value == self.label_negative_value {
            return Err(Error::Schema(
                "label positive and negative surface values must differ".into(),
            ));
        }
        Ok(())
    }
}

/// One tabular row: raw feature values plus the mapped binary label `y`
/// and binary sensitive attribute `z`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub id: RecordId,
    pub features: BTreeMap<String, String>,
    pub y: u8,
    pub z: u8,
}

/// An ordered collection of records under one schema, with id lookup.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: Schema,
    records: Vec<Record>,
    by_id: BTreeMap<RecordId, usize>,
}

impl Dataset {
    pub fn new(schema: Schema, records: Vec<Record>) -> Result<Self> {
        schema.validate()?;
        let mut by_id = BTreeMap::new();
        for (idx, rec) in records.iter().enumerate() {
            if rec.y > 1 || rec.z > 1 {
                return Err(Error::Invariant(format!(
                    "record {} has non-binary y={} or z={}",
                    rec.id, rec.y, rec.z
                )));
            }
            if by_id.insert(rec.id, idx).is_some() {
                return Err(Error::Invariant(format!("duplicate record id {}", rec.id)));
            }
        }
        Ok(Dataset {
            schema,
            records,
            by_id,
        })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, id: RecordId) -> Result<&Record> {
        self.by_id
            .get(&id)
            .map(|&idx| &self.records[idx])
            .ok_or_else(|| Error::Argument(format!("unknown record id {id}")))
    }

    pub fn contains(&self, id: RecordId) -> bool {
        self.by_id.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = RecordId> + '_ {
        self.records.iter().map(|r| r.id)
    }
}

/// A row skipped during loading, with the 0-based data-row index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowIssue {
    pub row: usize,
    pub column: String,
    pub value: String,
}

/// Result of [`load_csv`]: the mapped dataset plus any rows whose label
/// value matched neither surface form.
#[derive(Debug)]
pub struct LoadOutcome {
    pub dataset: Dataset,
    pub skipped: Vec<RowIssue>,
}

/// Loads a headered CSV, mapping the label and sensitive columns to {0,1}.
///
/// Ids are assigned in row order starting at 0. Rows with an unmappable
/// label are collected in `skipped` rather than aborting the load; the
/// sensitive column maps reference value to 1 and anything else to 0, so it
/// never skips. Feature cells are kept verbatim ("?" and empty values
/// survive until [`clean`]).
pub fn load_csv(path: &Path, schema: &Schema) -> Result<LoadOutcome> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column {name:?} missing from {path:?}")))
    };

    let label_col = col(&schema.label_name)?;
    let sensitive_col = col(&schema.sensitive_name)?;
    let feature_cols: Vec<(String, usize)> = schema
        .feature_names
        .iter()
        .map(|f| col(f).map(|idx| (f.clone(), idx)))
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut next_id = 0u32;
    for (row_idx, row) in reader.records().enumerate() {
        let row = row?;
        let label_raw = row.get(label_col).unwrap_or("");
        let y = if label_raw == schema.label_positive_value {
            1
        } else if label_raw == schema.label_negative_value {
            0
        } else {
            skipped.push(RowIssue {
                row: row_idx,
                column: schema.label_name.clone(),
                value: label_raw.to_string(),
            });
            continue;
        };
        let z = u8::from(row.get(sensitive_col).unwrap_or("") == schema.sensitive_reference_value);
        let features = feature_cols
            .iter()
            .map(|(name, idx)| (name.clone(), row.get(*idx).unwrap_or("").to_string()))
            .collect();
        records.push(Record {
            id: RecordId(next_id),
            features,
            y,
            z,
        });
        next_id += 1;
    }

    Ok(LoadOutcome {
        dataset: Dataset::new(schema.clone(), records)?,
        skipped,
    })
}

/// Drops rows containing an empty value or the "?" null sentinel in any
/// schema feature column, then reassigns ids densely in the surviving order.
pub fn clean(dataset: &Dataset) -> Dataset {
    let records = dataset
        .records
        .iter()
        .filter(|rec| {
            dataset.schema.feature_names.iter().all(|f| {
                let v = rec.features.get(f).map(String::as_str).unwrap_or("");
                !v.is_empty() && v != "?"
            })
        })
        .enumerate()
        .map(|(idx, rec)| Record {
            id: RecordId(idx as u32),
            ..rec.clone()
        })
        .collect();
    Dataset::new(dataset.schema.clone(), records).expect("cleaning preserves dataset invariants")
}

/// Splits deterministically: the seeded shuffle's first `n_test` records
/// form the test set, the remainder the train set. Ids are preserved, so
/// the two id sets are disjoint.
pub fn split(dataset: &Dataset, seed: u64, n_test: usize) -> Result<(Dataset, Dataset)> {
    if n_test > dataset.len() {
        return Err(Error::Argument(format!(
            "n_test={} exceeds dataset size {}",
            n_test,
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    fisher_yates(&mut order, seed);

    let take = |range: &[usize]| -> Vec<Record> {
        range.iter().map(|&i| dataset.records[i].clone()).collect()
    };
    let test = Dataset::new(dataset.schema.clone(), take(&order[..n_test]))?;
    let train = Dataset::new(dataset.schema.clone(), take(&order[n_test..]))?;
    Ok((train, test))
}

/// In-place seeded Fisher–Yates permutation (ChaCha8 keyed by `seed`).
pub(crate) fn fisher_yates<T>(items: &mut [T], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Serializes a record as `"<feature> is <value>, ..."` in schema feature
/// order, optionally appending `"<label> is <surface>"`. Injective over
/// (feature values, label) as long as no value contains the `", "` separator.
pub fn to_text(record: &Record, schema: &Schema, include_label: bool) -> String {
    let mut parts: Vec<String> = schema
        .feature_names
        .iter()
        .map(|f| {
            let v = record.features.get(f).map(String::as_str).unwrap_or("");
            format!("{f} is {v}")
        })
        .collect();
    if include_label {
        parts.push(format!(
            "{} is {}",
            schema.label_name,
            schema.label_surface(record.y)
        ));
    }
    parts.join(", ")
}

/// Derives a stream-specific sub-seed, used for per-batch sampling.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, folded with the base seed.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^ seed.wrapping_mul(0x9e3779b97f4a7c15)
}
