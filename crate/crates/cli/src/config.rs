//! Experiment configuration: JSON file, dotted `--key value` overrides and
//! the canonical hash recorded in the run manifest.

use std::fs;
use std::path::Path;

use activescout::explorer::{ExperimentConfig, Method};
use anyhow::{anyhow, bail, Context, Result};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// A `--key value` pair; the value is JSON when it parses as JSON and a
/// plain string otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub key: String,
    pub value: Value,
}

/// Splits `--a.b 1 --c=x` style arguments into overrides.
pub fn parse_overrides(args: &[String]) -> Result<Vec<Override>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            bail!("expected --key value, found {arg:?}");
        };
        let (key, raw) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| anyhow!("missing value for --{body}"))?;
                (body.to_string(), v.clone())
            }
        };
        if key.is_empty() || key.split('.').any(str::is_empty) {
            bail!("malformed key {key:?}");
        }
        let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        out.push(Override { key, value });
    }
    Ok(out)
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| anyhow!("config key {key:?}: {:?} is not an object", parts[..i].join(".")))?;
        let slot = obj
            .get_mut(*part)
            .ok_or_else(|| anyhow!("unknown config key {key:?}"))?;
        if i + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        cur = slot;
    }
    unreachable!("keys have at least one segment")
}

/// The effective configuration of a command.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    /// Whether the file or an override set `method` explicitly.
    pub method_given: bool,
}

/// Reads `path` (or starts from defaults), applies `overrides` and
/// validates the result.
pub fn resolve(path: Option<&Path>, overrides: &[Override]) -> Result<Resolved> {
    let file: Value = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", p.display()))?
        }
        None => Value::Object(Map::new()),
    };
    let method_given = file.get("method").is_some() || overrides.iter().any(|o| o.key == "method");
    let base: ExperimentConfig =
        serde_json::from_value(file).context("config does not match the schema")?;
    let mut value = serde_json::to_value(&base).expect("config serializes");
    for o in overrides {
        set_path(&mut value, &o.key, o.value.clone())?;
    }
    let config: ExperimentConfig =
        serde_json::from_value(value).context("overrides do not match the schema")?;
    config.validate()?;
    Ok(Resolved { config, method_given })
}

/// Forces a baseline method: frequency unless one was requested.
pub fn as_baseline(mut r: Resolved) -> Result<ExperimentConfig> {
    if !r.method_given {
        r.config.method = Method::Frequency;
    }
    if r.config.method == Method::PredictiveInfo {
        bail!("baseline runs need method frequency or frontier");
    }
    Ok(r.config)
}

/// JSON with object keys sorted recursively and no whitespace.
pub fn canonical_json(v: &Value) -> String {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .iter()
                .map(|k| format!("{}:{}", Value::String((*k).clone()), canonical_json(&m[*k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(a) => format!("[{}]", a.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

/// SHA-256 of the canonical JSON of `config`, lowercase hex.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let v = serde_json::to_value(config).expect("config serializes");
    hex(&Sha256::digest(canonical_json(&v).as_bytes()))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(a: &[&str]) -> Vec<String> {
        a.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn overrides_parse_json_or_string() {
        let o = parse_overrides(&args(&["--seed", "7", "--method=frontier", "--schedule.distance_budget", "null"])).unwrap();
        assert_eq!(o[0].value, Value::from(7));
        assert_eq!(o[1].value, Value::from("frontier"));
        assert_eq!(o[2].value, Value::Null);
        assert!(parse_overrides(&args(&["seed", "7"])).is_err());
        assert!(parse_overrides(&args(&["--seed"])).is_err());
        assert!(parse_overrides(&args(&["--a..b", "1"])).is_err());
    }

    #[test]
    fn resolve_applies_nested_overrides() {
        let o = parse_overrides(&args(&["--seed", "3", "--schedule.init_steps", "10", "--method", "frontier"])).unwrap();
        let r = resolve(None, &o).unwrap();
        assert_eq!(r.config.seed, 3);
        assert_eq!(r.config.schedule.init_steps, 10);
        assert_eq!(r.config.method, Method::Frontier);
        assert!(r.method_given);
    }

    #[test]
    fn unknown_keys_rejected() {
        let o = parse_overrides(&args(&["--schedule.bogus", "1"])).unwrap();
        assert!(resolve(None, &o).is_err());
        let o = parse_overrides(&args(&["--seed.x", "1"])).unwrap();
        assert!(resolve(None, &o).is_err());
    }

    #[test]
    fn canonical_form_sorts_keys() {
        let a: Value = serde_json::from_str(r#"{"b":1,"a":{"d":[1,{"z":0,"y":2}],"c":"x"}}"#).unwrap();
        assert_eq!(canonical_json(&a), r#"{"a":{"c":"x","d":[1,{"y":2,"z":0}]},"b":1}"#);
    }

    #[test]
    fn baseline_defaults_to_frequency() {
        let r = resolve(None, &[]).unwrap();
        assert_eq!(as_baseline(r).unwrap().method, Method::Frequency);
        let o = parse_overrides(&args(&["--method", "predictive_info"])).unwrap();
        assert!(as_baseline(resolve(None, &o).unwrap()).is_err());
    }
}
