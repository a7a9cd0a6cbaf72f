//! Deterministic synthetic tabular data for offline runs and tests.
//!
//! Rows carry four label-correlated numeric features, two label-correlated
//! categorical features, and a sensitive `group` column with a mild
//! label/group skew, so nearest-neighbor retrieval is informative and
//! fairness errors are non-trivial.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, Record, RecordId, Schema};
use crate::error::Result;

pub fn synthetic_schema() -> Schema {
    Schema {
        feature_names: vec![
            "f1".into(),
            "f2".into(),
            "f3".into(),
            "f4".into(),
            "pattern".into(),
            "shade".into(),
            "group".into(),
        ],
        label_name: "outcome".into(),
        label_positive_value: "yes".into(),
        label_negative_value: "no".into(),
        sensitive_name: "group".into(),
        sensitive_reference_value: "m".into(),
        task_instruction: "You will be shown numbered profiles. For each one, predict whether \
                           the outcome is yes or no. Answer with exactly one label per line, \
                           either yes or no, and nothing else."
            .into(),
    }
}

/// Generates `rows` records under [`synthetic_schema`], keyed by `seed`.
pub fn synthetic_dataset(rows: usize, seed: u64) -> Dataset {
    let schema = synthetic_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(rows);
    for id in 0..rows {
        let z = u8::from(rng.random_bool(0.5));
        let p_pos = if z == 1 { 0.55 } else { 0.45 };
        let y = u8::from(rng.random_bool(p_pos));
        let base = if y == 1 { 0.68 } else { 0.32 };
        let numeric = |rng: &mut ChaCha8Rng| -> String {
            let v: f64 = base + rng.random_range(-0.22..0.22);
            format!("{:.4}", v.clamp(0.0, 1.0))
        };
        let pattern = pick(&mut rng, y == 1, 0.80, "alpha", "beta");
        let shade = pick(&mut rng, y == 1, 0.75, "dark", "light");
        let features = [
            ("f1", numeric(&mut rng)),
            ("f2", numeric(&mut rng)),
            ("f3", numeric(&mut rng)),
            ("f4", numeric(&mut rng)),
            ("pattern", pattern),
            ("shade", shade),
            ("group", if z == 1 { "m".into() } else { "f".into() }),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        records.push(Record {
            id: RecordId(id as u32),
            features,
            y,
            z,
        });
    }
    Dataset::new(schema, records).expect("generator emits valid records")
}

fn pick(rng: &mut ChaCha8Rng, positive: bool, fidelity: f64, pos: &str, neg: &str) -> String {
    let keep = rng.random_bool(fidelity);
    let surface = if positive == keep { pos } else { neg };
    surface.to_string()
}

/// Writes the generated rows as a headered CSV usable with the `custom`
/// dataset preset, plus a sibling schema TOML when `schema_path` is given.
pub fn write_synthetic_csv(
    csv_path: &Path,
    schema_path: Option<&Path>,
    rows: usize,
    seed: u64,
) -> Result<()> {
    let dataset = synthetic_dataset(rows, seed);
    let schema = &dataset.schema;
    let mut writer = csv::Writer::from_path(csv_path)?;

    let mut header: Vec<&str> = schema.feature_names.iter().map(String::as_str).collect();
    header.push(&schema.label_name);
    writer.write_record(&header)?;
    for rec in dataset.records() {
        let mut row: Vec<&str> = schema
            .feature_names
            .iter()
            .map(|f| rec.features[f].as_str())
            .collect();
        row.push(schema.label_surface(rec.y));
        writer.write_record(&row)?;
    }
    writer.flush()?;

    if let Some(path) = schema_path {
        let text = toml::to_string_pretty(schema)
            .map_err(|e| crate::error::Error::Schema(format!("serialize schema: {e}")))?;
        std::fs::write(path, text)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{clean, load_csv, to_text};

    #[test]
    fn generation_is_deterministic() {
        let a = synthetic_dataset(50, 7);
        let b = synthetic_dataset(50, 7);
        assert_eq!(a.records(), b.records());
        let c = synthetic_dataset(50, 8);
        assert_ne!(a.records(), c.records());
    }

    #[test]
    fn both_groups_and_labels_present() {
        let ds = synthetic_dataset(200, 42);
        let zs: usize = ds.records().iter().map(|r| r.z as usize).sum();
        let ys: usize = ds.records().iter().map(|r| r.y as usize).sum();
        assert!(zs > 50 && zs < 150, "z balance off: {zs}");
        assert!(ys > 50 && ys < 150, "y balance off: {ys}");
    }

    #[test]
    fn csv_round_trip_matches_generator() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("synth.csv");
        let schema_path = dir.path().join("synth.schema.toml");
        write_synthetic_csv(&csv_path, Some(&schema_path), 30, 99).unwrap();

        let schema = crate::dataset::load_schema(&schema_path).unwrap();
        let loaded = load_csv(&csv_path, &schema).unwrap();
        assert!(loaded.skipped.is_empty());
        let cleaned = clean(&loaded.dataset);
        let generated = synthetic_dataset(30, 99);
        assert_eq!(cleaned.len(), generated.len());
        for (a, b) in cleaned.records().iter().zip(generated.records()) {
            assert_eq!(to_text(a, &schema, true), to_text(b, &schema, true));
            assert_eq!((a.y, a.z), (b.y, b.z));
        }
    }
}
