use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// A bad flag or flag combination; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(message: impl Into<String>) -> Result<T> {
    Err(UsageError(message.into()).into())
}

/// Fills flags left unset on the command line from a JSON object whose keys
/// are flag names without the leading dashes.
pub fn merge_config<T: Serialize + DeserializeOwned>(flags: T, config: Option<&Path>) -> Result<T> {
    let Some(path) = config else {
        return Ok(flags);
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let file: Value = serde_json::from_str(&text).map_err(|e| {
        anyhow::anyhow!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column())
    })?;
    let Value::Object(file) = file else {
        return usage(format!("{}: config must be a JSON object", path.display()));
    };
    let Value::Object(mut merged) = serde_json::to_value(&flags)? else {
        unreachable!("argument structs serialize to objects");
    };
    overlay(&mut merged, file, path)?;
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}

fn overlay(merged: &mut Map<String, Value>, file: Map<String, Value>, path: &Path) -> Result<()> {
    for (key, value) in file {
        match merged.get(&key) {
            None => return usage(format!("{}: unknown key '{key}'", path.display())),
            Some(Value::Null | Value::Bool(false)) => {
                merged.insert(key, value);
            }
            Some(_) => {}
        }
    }
    Ok(())
}
