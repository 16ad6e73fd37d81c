//! Dotted-path parameter replacement over a parsed configuration tree.
//!
//! A path such as `regions.china.land.protection_fraction` walks tables by key. When a segment
//! meets an array, elements are selected by their `name` field, by numeric index, or all of them
//! with `*`.

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};

/// One named parameter replacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Override {
    pub path: String,
    pub value: Value,
}

impl Override {
    pub fn new(path: impl Into<String>, value: impl Into<Value>) -> Self {
        Override {
            path: path.into(),
            value: value.into(),
        }
    }
}

fn unresolved(path: &str, detail: String) -> Error {
    Error::Schema {
        file: "<overrides>".into(),
        key: path.to_string(),
        line: None,
        message: detail,
    }
}

/// Applies one override in place. Intermediate segments must already exist; the final key may
/// be new (optional fields), and unknown keys are caught when the tree is deserialized.
pub fn apply_override(root: &mut Table, ov: &Override) -> Result<()> {
    let segments: Vec<&str> = ov.path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(unresolved(&ov.path, "empty path segment".into()));
    }
    let applied = apply_in_table(root, &segments, &ov.value, &ov.path)?;
    if applied == 0 {
        return Err(unresolved(&ov.path, "wildcard matched no elements".into()));
    }
    Ok(())
}

fn apply_in_table(table: &mut Table, segs: &[&str], value: &Value, path: &str) -> Result<usize> {
    let (head, rest) = (segs[0], &segs[1..]);
    if rest.is_empty() {
        table.insert(head.to_string(), value.clone());
        return Ok(1);
    }
    match table.get_mut(head) {
        Some(child) => apply_in_value(child, rest, value, path),
        None => Err(unresolved(path, format!("no key `{head}`"))),
    }
}

fn apply_in_value(node: &mut Value, segs: &[&str], value: &Value, path: &str) -> Result<usize> {
    match node {
        Value::Table(t) => apply_in_table(t, segs, value, path),
        Value::Array(items) => {
            let (head, rest) = (segs[0], &segs[1..]);
            let mut picked: Vec<&mut Value> = if head == "*" {
                items.iter_mut().collect()
            } else if let Ok(i) = head.parse::<usize>() {
                items.get_mut(i).into_iter().collect()
            } else {
                items
                    .iter_mut()
                    .filter(|v| v.get("name").and_then(Value::as_str) == Some(head))
                    .collect()
            };
            if picked.is_empty() {
                return Err(unresolved(path, format!("no array element `{head}`")));
            }
            if rest.is_empty() {
                for slot in picked.iter_mut() {
                    **slot = value.clone();
                }
                return Ok(picked.len());
            }
            let mut n = 0;
            for slot in picked {
                n += apply_in_value(slot, rest, value, path)?;
            }
            Ok(n)
        }
        _ => Err(unresolved(path, format!("`{}` is not a table", segs[0]))),
    }
}

/// Dotted paths of every leaf that differs between two configuration trees. Arrays of named
/// tables are compared element-wise by name.
pub fn value_diff(a: &Value, b: &Value) -> Vec<String> {
    let mut out = Vec::new();
    diff_into(a, b, String::new(), &mut out);
    out
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn element_key(v: &Value, index: usize) -> String {
    v.get("name")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| index.to_string())
}

fn diff_into(a: &Value, b: &Value, prefix: String, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Table(ta), Value::Table(tb)) => {
            let keys: std::collections::BTreeSet<&String> = ta.keys().chain(tb.keys()).collect();
            for key in keys {
                match (ta.get(key), tb.get(key)) {
                    (Some(x), Some(y)) => diff_into(x, y, join(&prefix, key), out),
                    _ => out.push(join(&prefix, key)),
                }
            }
        }
        (Value::Array(xa), Value::Array(xb))
            if xa.len() == xb.len() && xa.iter().all(|v| v.get("name").is_some()) =>
        {
            for (i, (x, y)) in xa.iter().zip(xb).enumerate() {
                let (kx, ky) = (element_key(x, i), element_key(y, i));
                if kx == ky {
                    diff_into(x, y, join(&prefix, &kx), out);
                } else {
                    out.push(join(&prefix, &kx));
                }
            }
        }
        _ => {
            if a != b {
                out.push(prefix);
            }
        }
    }
}

/// True when the concrete dotted path `changed` is covered by the override path `declared`
/// (equal, or nested below it, with `*` matching any element name).
pub fn path_covers(declared: &str, changed: &str) -> bool {
    let d: Vec<&str> = declared.split('.').collect();
    let c: Vec<&str> = changed.split('.').collect();
    d.len() <= c.len() && d.iter().zip(&c).all(|(x, y)| *x == "*" || x == y)
}
