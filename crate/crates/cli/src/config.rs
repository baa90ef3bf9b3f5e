//! JSON config files merged with command-line flags.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Reads a config object. A `command` key, if present, must name `command`.
pub fn load(path: &Path, command: &str) -> Result<Map<String, Value>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let Value::Object(mut m) = v else {
        return Err(format!("{}: top level must be an object", path.display()));
    };
    match m.remove("command") {
        None => {}
        Some(Value::String(c)) if c == command => {}
        Some(other) => return Err(format!("config is for command {other}, not {command:?}")),
    }
    Ok(m)
}

/// Overlays the flags that were given on top of `file`, then validates the
/// result against `T` (unknown keys are rejected there).
pub fn resolve<T: Serialize + DeserializeOwned>(flags: &T, mut file: Map<String, Value>) -> Result<(T, Value), String> {
    let given = serde_json::to_value(flags).map_err(|e| e.to_string())?;
    if let Value::Object(m) = given {
        for (k, v) in m {
            if !v.is_null() {
                file.insert(k, v);
            }
        }
    }
    let merged = Value::Object(file);
    let args = serde_json::from_value(merged.clone()).map_err(|e| format!("config: {e}"))?;
    Ok((args, merged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields)]
    struct A {
        n: Option<usize>,
        p: Option<f64>,
    }

    fn obj(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn flags_win() {
        let flags = A { n: Some(4), p: None };
        let (a, echo) = resolve(&flags, obj(serde_json::json!({"n": 3, "p": 2.0}))).unwrap();
        assert_eq!(
            a,
            A {
                n: Some(4),
                p: Some(2.0)
            }
        );
        assert_eq!(echo, serde_json::json!({"n": 4, "p": 2.0}));
    }

    #[test]
    fn unknown_key_rejected() {
        let flags = A { n: None, p: None };
        let e = resolve(&flags, obj(serde_json::json!({"q": 1}))).unwrap_err();
        assert!(e.contains("unknown field"), "{e}");
    }

    #[test]
    fn command_must_match() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.json");
        fs::write(&f, r#"{"command": "flow", "n": 3}"#).unwrap();
        assert!(load(&f, "extremal").is_err());
        assert_eq!(load(&f, "flow").unwrap().len(), 1);
        fs::write(&f, "[1]").unwrap();
        assert!(load(&f, "flow").is_err());
    }

    proptest::proptest! {
        #[test]
        fn merge_prefers_flags(fn_ in proptest::option::of(0usize..100), cn in 0usize..100, fp in proptest::option::of(-1e3f64..1e3)) {
            let flags = A { n: fn_, p: fp };
            let (a, _) = resolve(&flags, obj(serde_json::json!({"n": cn}))).unwrap();
            proptest::prop_assert_eq!(a.n, Some(fn_.unwrap_or(cn)));
            proptest::prop_assert_eq!(a.p, fp);
        }
    }
}
