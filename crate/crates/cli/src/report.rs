//! Machine-readable run reports.
//!
//! A report is one JSON document. Object keys are emitted in sorted order and
//! floats in shortest round-trip form, so identical runs give identical bytes.
//! Wall-clock timings are included only when requested.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub type Row = BTreeMap<String, Value>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Subcommand followed by its arguments.
    pub command: Vec<String>,
    pub config: Value,
    pub seed: u64,
    pub metrics: Vec<Row>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, f64>>,
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn new(command: Vec<String>, config: Value, seed: u64) -> Self {
        Self {
            command,
            config,
            seed,
            metrics: Vec::new(),
            timings_ms: None,
            artifacts: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| CliError::usage(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_json()?).map_err(|e| CliError::io(path, e))
    }
}

/// Serializes any config struct to a key-sorted JSON object.
pub fn config_value<T: Serialize>(cfg: &T) -> Value {
    // Without the `preserve_order` feature, serde_json maps are sorted by key.
    serde_json::to_value(cfg).expect("config structs serialize")
}

pub fn row<const N: usize>(entries: [(&str, Value); N]) -> Row {
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        let mut r = RunReport::new(vec!["dist".into(), "a.xyz".into()], serde_json::json!({"b": 1, "a": 2.5}), 7);
        r.metrics.push(row([("name", Value::from("sw")), ("value", Value::from(0.1))]));
        r.artifacts.push("out/x".into());
        let text = r.to_json().unwrap();
        let back: RunReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert!(!text.contains("timings_ms"));
        assert!(text.find("\"a\"").unwrap() < text.find("\"b\"").unwrap());
    }
}
