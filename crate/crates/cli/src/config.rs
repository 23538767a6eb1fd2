//! JSON configuration files merged under the command line.
//!
//! A config file is a JSON object whose keys are long flag names, with either
//! dashes or underscores. Each key that is not already given on the command
//! line is appended as a flag, so explicit flags always win.

use std::path::Path;

use serde_json::Value;

use crate::CliError;

fn config_path(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

fn has_flag(args: &[String], flag: &str) -> bool {
    args.iter()
        .any(|a| a == flag || a.strip_prefix(flag).is_some_and(|rest| rest.starts_with('=')))
}

fn scalar(v: &Value) -> Result<String, String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(format!("unsupported config value {other}")),
    }
}

/// Returns `args` with the flags of the referenced config file appended.
pub fn merge_config(args: Vec<String>) -> Result<Vec<String>, CliError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| CliError::Core(vrnet_core::Error::Io(e)))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Core(vrnet_core::Error::CorruptFile(format!("config {path}: {e}"))))?;
    let Value::Object(map) = value else {
        return Err(CliError::Usage(format!("config {path} must hold a JSON object")));
    };
    let mut out = args;
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" || has_flag(&out, &flag) {
            continue;
        }
        match &v {
            Value::Bool(true) => out.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                let parts: Result<Vec<String>, String> = items.iter().map(scalar).collect();
                out.push(flag);
                out.push(parts.map_err(CliError::Usage)?.join(","));
            }
            other => {
                out.push(flag);
                out.push(scalar(other).map_err(CliError::Usage)?);
            }
        }
    }
    Ok(out)
}
