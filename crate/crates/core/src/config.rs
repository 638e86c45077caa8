// SPDX-License-Identifier: MIT OR Apache-2.0

//! Declarative command configs: a JSON file, `--key value` overrides on
//! top, then shape checks against the command's defaults so that every bad
//! path is reported at once.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Extra semantic checks after deserialization (required paths and such).
pub trait Validate {
    fn problems(&self) -> Vec<String> {
        Vec::new()
    }
}

/// Reads a config file; `None` gives an empty object.
pub fn load(path: Option<&Path>) -> Result<Value> {
    let Some(path) = path else {
        return Ok(Value::Object(Map::new()));
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::Config {
        paths: vec![format!("(file): {e}")],
    })?;
    if !v.is_object() {
        return Err(Error::Config {
            paths: vec!["(root): config must be a JSON object".into()],
        });
    }
    Ok(v)
}

/// Splits `--key value` / `--key=value` words into pairs. Dashes in keys
/// become underscores.
pub fn parse_overrides(words: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = words.iter();
    while let Some(w) = it.next() {
        let Some(flag) = w.strip_prefix("--") else {
            return Err(Error::arg(format!("expected --key, got {w:?}")));
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::arg(format!("--{flag} needs a value")))?;
                (flag.to_string(), v.clone())
            }
        };
        if key.is_empty() {
            return Err(Error::arg("empty override key"));
        }
        out.push((key.replace('-', "_"), value));
    }
    Ok(out)
}

/// Sets a dotted `key` in `cfg`. The value is read as JSON when it parses,
/// as a plain string otherwise.
pub fn apply_override(cfg: &mut Value, key: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = cfg;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let obj = match cur {
            Value::Object(m) => m,
            _ => {
                return Err(Error::Config {
                    paths: vec![format!("{}: not an object", parts[..i].join("."))],
                })
            }
        };
        if i + 1 == parts.len() {
            obj.insert(p.to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry(p.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

/// Unknown keys and type mismatches of `value` relative to `default`.
/// Null defaults (optional fields) accept anything here.
fn shape_problems(value: &Value, default: &Value, path: &str, out: &mut Vec<String>) {
    match (value, default) {
        (Value::Object(v), Value::Object(d)) => {
            for (k, x) in v {
                match d.get(k) {
                    Some(dx) => shape_problems(x, dx, &join(path, k), out),
                    None => out.push(format!("{}: unknown field", join(path, k))),
                }
            }
        }
        (_, Value::Null) | (Value::Null, _) => {}
        (v, d) if kind(v) != kind(d) => out.push(format!(
            "{}: expected {}, got {}",
            if path.is_empty() { "(root)" } else { path },
            kind(d),
            kind(v)
        )),
        _ => {}
    }
}

/// Scalars given where the default is a string become strings, so that
/// `--name 7` works for text fields.
fn coerce_strings(value: &mut Value, default: &Value) {
    match (value, default) {
        (Value::Object(v), Value::Object(d)) => {
            for (k, x) in v.iter_mut() {
                if let Some(dx) = d.get(k) {
                    coerce_strings(x, dx);
                }
            }
        }
        (v @ (Value::Number(_) | Value::Bool(_)), Value::String(_)) => *v = Value::String(v.to_string()),
        _ => {}
    }
}

/// Validates `raw` against `T`, returning the typed config and its canonical
/// effective form (all defaults filled in).
pub fn resolve<T>(mut raw: Value) -> Result<(T, Value)>
where
    T: Serialize + DeserializeOwned + Default + Validate,
{
    let default = serde_json::to_value(T::default())?;
    coerce_strings(&mut raw, &default);
    let mut paths = Vec::new();
    shape_problems(&raw, &default, "", &mut paths);
    let cfg: Option<T> = match serde_json::from_value(raw) {
        Ok(c) => Some(c),
        Err(e) => {
            if !e.to_string().starts_with("unknown field") {
                paths.push(format!("(value): {e}"));
            }
            None
        }
    };
    let Some(cfg) = cfg.filter(|_| paths.is_empty()) else {
        return Err(Error::Config { paths });
    };
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(Error::Config { paths: problems });
    }
    let effective = serde_json::to_value(&cfg)?;
    Ok((cfg, effective))
}

/// `load`, overrides, `resolve`.
pub fn build<T>(file: Option<&Path>, overrides: &[String]) -> Result<(T, Value)>
where
    T: Serialize + DeserializeOwned + Default + Validate,
{
    let mut raw = load(file)?;
    for (k, v) in parse_overrides(overrides)? {
        apply_override(&mut raw, &k, &v)?;
    }
    resolve(raw)
}

/// Problem text for an empty required path.
pub fn required(name: &str, value: &str) -> Option<String> {
    value.trim().is_empty().then(|| format!("{name}: required"))
}
