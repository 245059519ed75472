//! Config resolution: defaults, then a JSON file, then flag and `--set`
//! overrides, in that order.
//!
//! Keys are dot paths into the JSON form of a subcommand's config, e.g.
//! `grid.trials` or `train.lambda_cm`. Only leaves and whole arrays or
//! enums can be overridden. Seed fields below the top level are derived
//! from the master seed and are never accepted as keys.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::CliError;

/// Leaf paths of `v`, dot-joined. Arrays and tagged enums count as leaves.
pub fn keys(v: &Value) -> Vec<String> {
    let mut out = Vec::new();
    collect(v, String::new(), &mut out);
    out.retain(|k| !is_derived_seed(k));
    out
}

fn collect(v: &Value, prefix: String, out: &mut Vec<String>) {
    match v {
        Value::Object(m) if !m.contains_key("type") => {
            for (k, child) in m {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                collect(child, path, out);
            }
        }
        _ => out.push(prefix),
    }
}

fn is_derived_seed(key: &str) -> bool {
    key.ends_with(".seed")
}

/// Parses `key=value`; the value is read as JSON when possible and as a
/// bare string otherwise, so `variant=complementary` works unquoted.
pub fn parse_override(raw: &str) -> Result<(String, Value), CliError> {
    let (k, v) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {raw:?} is not key=value")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(CliError::Usage(format!("override {raw:?} has an empty key")));
    }
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

fn unknown_key(key: &str, valid: &[String]) -> CliError {
    CliError::Config(format!("unknown config key {key:?}; valid keys: {}", valid.join(", ")))
}

fn set(root: &mut Value, key: &str, value: Value, valid: &[String]) -> Result<(), CliError> {
    if !valid.iter().any(|k| k == key) {
        return Err(unknown_key(key, valid));
    }
    let mut node = root;
    for part in key.split('.') {
        node = node
            .get_mut(part)
            .ok_or_else(|| unknown_key(key, valid))?;
    }
    *node = value;
    Ok(())
}

/// Overlays a file object onto the defaults. Unknown keys are rejected the
/// same way as unknown overrides.
fn merge(base: &mut Value, file: &Map<String, Value>, prefix: &str, valid: &[String]) -> Result<(), CliError> {
    for (k, v) in file {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        let slot = base.get_mut(k).ok_or_else(|| unknown_key(&path, valid))?;
        match (slot.is_object() && !slot.as_object().is_some_and(|m| m.contains_key("type")), v) {
            (true, Value::Object(inner)) => merge(slot, inner, &path, valid)?,
            _ => {
                if is_derived_seed(&path) {
                    return Err(CliError::Config(format!("{path} is derived from the master seed")));
                }
                *slot = v.clone();
            }
        }
    }
    Ok(())
}

/// Resolves a config of type `C` from its defaults, an optional JSON file
/// and ordered overrides.
pub fn resolve<C>(file: Option<&Path>, overrides: &[(String, Value)]) -> Result<C, CliError>
where
    C: Serialize + DeserializeOwned + Default,
{
    let mut value = serde_json::to_value(C::default()).map_err(|e| CliError::Runtime(e.to_string()))?;
    let valid = keys(&value);
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
        let parsed: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("parsing {}: {e}", path.display())))?;
        let obj = parsed
            .as_object()
            .ok_or_else(|| CliError::Config(format!("{} must hold a JSON object", path.display())))?;
        merge(&mut value, obj, "", &valid)?;
    }
    for (k, v) in overrides {
        set(&mut value, k, v.clone(), &valid)?;
    }
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("invalid config: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    struct Inner {
        a: f64,
        seed: u64,
    }

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    struct Outer {
        seed: u64,
        inner: Inner,
        list: Vec<usize>,
    }

    #[test]
    fn keys_skip_nested_seeds() {
        let v = serde_json::to_value(Outer::default()).unwrap();
        assert_eq!(keys(&v), vec!["inner.a", "list", "seed"]);
    }

    #[test]
    fn overrides_apply_in_order() {
        let o = vec![
            parse_override("inner.a=2.5").unwrap(),
            parse_override("list=[1,2]").unwrap(),
            parse_override("inner.a=3").unwrap(),
        ];
        let c: Outer = resolve(None, &o).unwrap();
        assert_eq!(c.inner.a, 3.0);
        assert_eq!(c.list, vec![1, 2]);
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let o = vec![parse_override("inner.b=1").unwrap()];
        let err = resolve::<Outer>(None, &o).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("inner.b") && msg.contains("inner.a") && msg.contains("list"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn nested_seed_is_not_a_key() {
        let o = vec![parse_override("inner.seed=4").unwrap()];
        assert!(resolve::<Outer>(None, &o).is_err());
    }

    #[test]
    fn bare_strings_are_accepted() {
        assert_eq!(parse_override("x=abc").unwrap().1, Value::String("abc".into()));
        assert_eq!(parse_override("x=0.5").unwrap().1, serde_json::json!(0.5));
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn file_values_are_merged_then_overridden() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"inner": {"a": 7}, "list": [9]}"#).unwrap();
        let c: Outer = resolve(Some(&path), &[parse_override("list=[4]").unwrap()]).unwrap();
        assert_eq!(c.inner.a, 7.0);
        assert_eq!(c.list, vec![4]);
        std::fs::write(&path, r#"{"inner": {"zzz": 1}}"#).unwrap();
        assert!(resolve::<Outer>(Some(&path), &[]).is_err());
    }
}
