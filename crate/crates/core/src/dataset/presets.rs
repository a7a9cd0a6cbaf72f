//! Built-in schema presets and schema-file loading.

use std::path::Path;

use crate::dataset::Schema;
use crate::error::{Error, Result};

pub const BUILTIN_PRESETS: &[&str] = &["adult", "compas"];

const ADULT_TOML: &str = include_str!("../../presets/adult.toml");
const COMPAS_TOML: &str = include_str!("../../presets/compas.toml");

/// Returns a shipped schema preset by name.
pub fn builtin_schema(name: &str) -> Result<Schema> {
    let text = match name {
        "adult" => ADULT_TOML,
        "compas" => COMPAS_TOML,
        other => {
            return Err(Error::Config(format!(
                "unknown dataset preset {other:?} (expected one of {BUILTIN_PRESETS:?} or a custom schema path)"
            )))
        }
    };
    parse_schema(text)
}

/// Loads a schema from a TOML file with the same keys as the shipped presets.
pub fn load_schema(path: &Path) -> Result<Schema> {
    let text = std::fs::read_to_string(path)?;
    parse_schema(&text)
}

fn parse_schema(text: &str) -> Result<Schema> {
    toml::from_str(text).map_err(|e| Error::Schema(format!("schema file: {e}")))
}
