//! Run manifests: a sorted-key JSON record of one command's config,
//! constants and check outcomes.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;

/// Outcome of one named check with its worst-case witness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub passed: bool,
    pub witness: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub exit_code: i32,
    /// Complete effective configuration; rerunning from it reproduces the
    /// manifest.
    pub config: Value,
    pub constants: BTreeMap<String, Value>,
    pub checks: BTreeMap<String, Check>,
    pub reports: BTreeMap<String, Value>,
    /// Set when the command stopped on an error instead of a verdict.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Non-finite floats have no JSON form and are written as `null`.
pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

impl RunManifest {
    pub fn new(command: &str, config: Value) -> Self {
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            exit_code: 0,
            config,
            constants: BTreeMap::new(),
            checks: BTreeMap::new(),
            reports: BTreeMap::new(),
            error: None,
        }
    }

    pub fn check<T: Serialize>(&mut self, name: &str, passed: bool, witness: &T) {
        self.checks.insert(name.into(), Check { passed, witness: to_value(witness) });
    }

    pub fn constant<T: Serialize>(&mut self, name: &str, v: &T) {
        self.constants.insert(name.into(), to_value(v));
    }

    pub fn report<T: Serialize>(&mut self, name: &str, v: &T) {
        self.reports.insert(name.into(), to_value(v));
    }

    pub fn all_passed(&self) -> bool {
        self.checks.values().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks.iter().filter(|(_, c)| !c.passed).map(|(k, _)| k.as_str()).collect()
    }

    /// Pretty JSON with sorted keys and a trailing newline.
    pub fn to_json(&self) -> String {
        // going through Value sorts every nested object
        let v = to_value(self);
        let mut s = serde_json::to_string_pretty(&v).expect("manifest serialises");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}
