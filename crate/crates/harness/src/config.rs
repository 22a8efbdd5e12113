//! Flat JSON experiment configuration:
//!
//! ```json
//! {"name": "coupling-limit", "root_seed": 7, "output_dir": "runs/cl", "theta": 1.0, "ns": [64, 256]}
//! ```
//!
//! Every key other than `name`, `root_seed` and `output_dir` is a parameter
//! and must appear in the experiment's schema.

use crate::error::{HarnessError, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const DEFAULT_ROOT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_seed")]
    pub root_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(flatten)]
    pub params: BTreeMap<String, Value>,
}

fn default_seed() -> u64 {
    DEFAULT_ROOT_SEED
}

impl ExperimentConfig {
    pub fn new(name: &str) -> Self {
        Self { name: name.to_string(), root_seed: DEFAULT_ROOT_SEED, output_dir: None, params: BTreeMap::new() }
    }

    pub fn with_param(mut self, key: &str, value: Value) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.root_seed = seed;
        self
    }

    pub fn with_output(mut self, dir: impl Into<PathBuf>) -> Self {
        self.output_dir = Some(dir.into());
        self
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&s)
    }

    /// Parses a `key=value` override; the value is read as JSON when it
    /// parses, otherwise kept as a string.
    pub fn set_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv.split_once('=').ok_or_else(|| HarnessError::param(kv, "expected key=value"))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        self.params.insert(k.trim().to_string(), value);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Float,
    Int,
    FloatList,
    IntList,
}

/// One schema entry; `default` is a JSON literal.
#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub key: &'static str,
    pub kind: ParamKind,
    pub default: &'static str,
    pub help: &'static str,
}

pub const fn param(key: &'static str, kind: ParamKind, default: &'static str, help: &'static str) -> ParamSpec {
    ParamSpec { key, kind, default, help }
}

fn check_kind(key: &str, kind: ParamKind, v: &Value) -> Result<()> {
    let is_int = |v: &Value| v.as_u64().is_some();
    let is_float = |v: &Value| v.as_f64().is_some();
    let ok = match kind {
        ParamKind::Float => is_float(v),
        ParamKind::Int => is_int(v),
        ParamKind::FloatList => v.as_array().is_some_and(|a| !a.is_empty() && a.iter().all(is_float)),
        ParamKind::IntList => v.as_array().is_some_and(|a| !a.is_empty() && a.iter().all(is_int)),
    };
    if ok {
        Ok(())
    } else {
        Err(HarnessError::param(key, format!("expected {kind:?}, got {v}")))
    }
}

/// Parameters resolved against a schema: defaults filled in, types checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params(pub BTreeMap<String, Value>);

impl Params {
    pub fn resolve(schema: &[ParamSpec], given: &BTreeMap<String, Value>) -> Result<Self> {
        for k in given.keys() {
            if !schema.iter().any(|s| s.key == k) {
                return Err(HarnessError::param(k, "not a parameter of this experiment"));
            }
        }
        let mut out = BTreeMap::new();
        for s in schema {
            let v = match given.get(s.key) {
                Some(v) => v.clone(),
                None => serde_json::from_str(s.default).expect("schema defaults are valid JSON"),
            };
            check_kind(s.key, s.kind, &v)?;
            out.insert(s.key.to_string(), v);
        }
        Ok(Self(out))
    }

    fn get(&self, key: &str) -> &Value {
        self.0.get(key).unwrap_or_else(|| panic!("parameter {key} is not in the schema"))
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.get(key).as_f64().expect("checked by resolve")
    }

    pub fn usize(&self, key: &str) -> usize {
        self.get(key).as_u64().expect("checked by resolve") as usize
    }

    pub fn u64(&self, key: &str) -> u64 {
        self.get(key).as_u64().expect("checked by resolve")
    }

    pub fn f64s(&self, key: &str) -> Vec<f64> {
        self.get(key).as_array().expect("checked by resolve").iter().map(|v| v.as_f64().expect("checked")).collect()
    }

    pub fn usizes(&self, key: &str) -> Vec<usize> {
        self.get(key)
            .as_array()
            .expect("checked by resolve")
            .iter()
            .map(|v| v.as_u64().expect("checked") as usize)
            .collect()
    }

    /// Fails unless `lo <= value <= hi`.
    pub fn f64_in(&self, key: &str, lo: f64, hi: f64) -> Result<f64> {
        let v = self.f64(key);
        if !(lo..=hi).contains(&v) {
            return Err(HarnessError::param(key, format!("{v} outside [{lo}, {hi}]")));
        }
        Ok(v)
    }

    /// Fails unless the value is at least `lo`.
    pub fn usize_min(&self, key: &str, lo: usize) -> Result<usize> {
        let v = self.usize(key);
        if v < lo {
            return Err(HarnessError::param(key, format!("{v} is below {lo}")));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    const SCHEMA: &[ParamSpec] = &[
        param("theta", ParamKind::Float, "1.0", "coupling"),
        param("ns", ParamKind::IntList, "[64, 256]", "rates"),
    ];

    #[test]
    fn flat_json_round_trip() {
        let c = ExperimentConfig::from_json(r#"{"name":"x","root_seed":3,"theta":2.5}"#).unwrap();
        assert_eq!(c.root_seed, 3);
        assert_eq!(c.params["theta"], json!(2.5));
        assert_eq!(ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap(), c);
        let d = ExperimentConfig::from_json(r#"{"name":"x"}"#).unwrap();
        assert_eq!(d.root_seed, DEFAULT_ROOT_SEED);
    }

    #[test]
    fn resolve_fills_defaults_and_checks_types() {
        let mut c = ExperimentConfig::new("x");
        c.set_override("theta=0.5").unwrap();
        let p = Params::resolve(SCHEMA, &c.params).unwrap();
        assert_eq!(p.f64("theta"), 0.5);
        assert_eq!(p.usizes("ns"), vec![64, 256]);
        c.set_override("ns=[1.5]").unwrap();
        assert!(Params::resolve(SCHEMA, &c.params).is_err());
        let bad = ExperimentConfig::new("x").with_param("nope", json!(1));
        assert!(matches!(Params::resolve(SCHEMA, &bad.params), Err(HarnessError::InvalidParam { .. })));
        assert!(c.set_override("novalue").is_err());
    }

    #[test]
    fn integers_are_accepted_as_floats() {
        let c = ExperimentConfig::new("x").with_param("theta", json!(2));
        assert_eq!(Params::resolve(SCHEMA, &c.params).unwrap().f64("theta"), 2.0);
    }
}
