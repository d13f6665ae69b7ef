//! Config-file merging and output locations.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use std::path::{Path, PathBuf};

use crate::CliError;

pub const OUTPUT_DIR_ENV: &str = "SPACS_OUTPUT_DIR";

pub fn load(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    if !value.is_object() {
        return Err(CliError::Parse(format!("{}: expected a JSON object", path.display())));
    }
    Ok(value)
}

fn strip_unset(v: &mut Value) {
    if let Value::Object(map) = v {
        map.retain(|_, x| !(x.is_null() || x.as_array().is_some_and(|a| a.is_empty())));
        for x in map.values_mut() {
            strip_unset(x);
        }
    }
}

fn overlay(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => overlay(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

/// Command-line values laid over the config file; flags win.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, file: Option<&Value>) -> Result<T, CliError> {
    let mut top = serde_json::to_value(flags).map_err(|e| CliError::Parse(e.to_string()))?;
    strip_unset(&mut top);
    let mut base = file.cloned().unwrap_or_else(|| Value::Object(Default::default()));
    overlay(&mut base, top);
    serde_json::from_value(base).map_err(|e| CliError::Parse(format!("config: {e}")))
}

/// `--output-dir`, else `$SPACS_OUTPUT_DIR`, else the working directory.
pub fn output_dir(flag: Option<&PathBuf>) -> PathBuf {
    flag.cloned()
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Parse(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, Default, Debug, PartialEq)]
    struct Args {
        alpha: Option<f64>,
        eta: Option<f64>,
        #[serde(default)]
        fix: Vec<String>,
    }

    #[test]
    fn flags_override_file() {
        let file = serde_json::json!({"alpha": 0.5, "eta": 0.9, "fix": ["eta=0.9"], "unrelated": 1});
        let flags = Args {
            alpha: Some(0.81),
            ..Default::default()
        };
        let m = merge(&flags, Some(&file)).unwrap();
        assert_eq!(m.alpha, Some(0.81));
        assert_eq!(m.eta, Some(0.9));
        assert_eq!(m.fix, vec!["eta=0.9".to_string()]);
    }

    #[test]
    fn no_file_keeps_flags() {
        let flags = Args {
            eta: Some(0.3),
            ..Default::default()
        };
        assert_eq!(merge(&flags, None).unwrap(), flags);
    }
}
