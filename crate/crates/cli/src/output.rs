use std::path::Path;

use robust_dpd::io::{format_sig, SIG_DIGITS};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;

fn output_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Output { path: path.display().to_string(), source }
}

/// Rounds every non-integer number to the output precision.
pub fn round_numbers(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            format_sig(x, SIG_DIGITS).parse::<f64>().ok().and_then(serde_json::Number::from_f64).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_numbers).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_numbers(v))).collect()),
        other => other,
    }
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let path = dir.join(name);
    let v = serde_json::to_value(value).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut text = serde_json::to_string_pretty(&round_numbers(v)).map_err(|e| CliError::Usage(e.to_string()))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(output_err(&path))
}

pub fn write_csv(dir: &Path, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let err = |e: csv::Error| CliError::Usage(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row).map_err(err)?;
    }
    w.flush().map_err(output_err(&path))
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(output_err(&path))
}

/// `manifest.json`: the effective configuration and seed. The timestamp is
/// the only field that changes between identical runs.
pub fn write_manifest<T: Serialize>(dir: &Path, command: &str, config: &T, seed: u64) -> Result<(), CliError> {
    let manifest = json!({
        "tool": "dpdtest",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": serde_json::to_value(config).map_err(|e| CliError::Usage(e.to_string()))?,
        "master_seed": seed,
        "timestamp": chrono::Utc::now().to_rfc3339(),
    });
    write_json(dir, "manifest.json", &manifest)
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(output_err(dir))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_floats_only() {
        let v = round_numbers(json!({"a": 1.0 / 3.0, "b": 7, "c": [0.1 + 0.2]}));
        assert_eq!(v, json!({"a": 0.333333333333, "b": 7, "c": [0.3]}));
    }
}
