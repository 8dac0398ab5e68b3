//! Flag resolution: command-line flags override keys from an optional config
//! file, which override built-in defaults.
//!
//! The config file is TOML with flat `key = value` pairs named like the long
//! flags (`lr = 0.1`, `censor-frac = 0.3`). Keys the command does not accept
//! are rejected.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Overlays the non-empty fields of `flags` on the config file contents.
pub fn resolve<T>(flags: &T, config: Option<&Path>) -> Result<T, CliError>
where
    T: Serialize + DeserializeOwned + Default,
{
    let Some(path) = config else {
        return serde_json::from_value(to_object(flags)?.into()).map_err(internal);
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;

    let known = to_object(&T::default())?;
    let mut merged = Map::new();
    for (key, value) in table {
        if !known.contains_key(&key) {
            return Err(CliError::Usage(format!("config {}: unknown key `{key}`", path.display())));
        }
        merged.insert(key, serde_json::to_value(value).map_err(internal)?);
    }
    for (key, value) in to_object(flags)? {
        if !value.is_null() {
            merged.insert(key, value);
        }
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

fn to_object<T: Serialize>(value: &T) -> Result<Map<String, Value>, CliError> {
    match serde_json::to_value(value).map_err(internal)? {
        Value::Object(map) => Ok(map),
        _ => Err(CliError::Runtime(anyhow::anyhow!("flag set did not serialize to an object"))),
    }
}

fn internal(e: serde_json::Error) -> CliError {
    CliError::Runtime(e.into())
}

/// Takes a required value after resolution or reports a usage error.
pub fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing required --{flag} (flag or config key)")))
}
