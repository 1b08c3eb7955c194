//! Parameter resolution: flags override the JSON config file, which
//! overrides built-in defaults.
//!
//! A config file is a JSON object. Top-level keys apply to every subcommand
//! that knows them; an object under a subcommand's name applies only to that
//! subcommand and must not contain unknown keys.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

pub fn load_file(path: Option<&Path>) -> Result<Option<Map<String, Value>>> {
    let Some(path) = path else { return Ok(None) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(Some(m)),
        Ok(_) => Err(CliError::Usage(format!("{}: config must be a JSON object", path.display()))),
        Err(e) => Err(CliError::Usage(format!("{}: {e}", path.display()))),
    }
}

/// Merges `defaults`, the config file and the flags given on the command line
/// into `P`. `flags` must serialize only the options actually passed.
pub fn resolve<P, F>(command: &str, defaults: &P, file: Option<&Map<String, Value>>, flags: &F) -> Result<P>
where
    P: Serialize + DeserializeOwned,
    F: Serialize,
{
    let Value::Object(mut merged) = serde_json::to_value(defaults).expect("defaults serialize") else {
        unreachable!("parameter sets are structs")
    };
    if let Some(file) = file {
        for (k, v) in file {
            if merged.contains_key(k) {
                merged.insert(k.clone(), v.clone());
            }
        }
        if let Some(section) = file.get(command) {
            let Value::Object(section) = section else {
                return Err(CliError::Usage(format!("config section {command:?} must be an object")));
            };
            for (k, v) in section {
                if !merged.contains_key(k) {
                    return Err(CliError::Usage(format!("unknown key {k:?} in config section {command:?}")));
                }
                merged.insert(k.clone(), v.clone());
            }
        }
    }
    let Value::Object(given) = serde_json::to_value(flags).expect("flags serialize") else {
        unreachable!("flag sets are structs")
    };
    for (k, v) in given {
        if !v.is_null() {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Usage(format!("{command}: {e}")))
}

/// Fails with a usage error when a mandatory value was not supplied anywhere.
pub fn required<T: Clone>(value: &Option<T>, name: &str) -> Result<T> {
    value.clone().ok_or_else(|| CliError::Usage(format!("missing required value `{name}` (flag or config)")))
}
