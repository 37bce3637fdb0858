//! Canonical JSON rendering: object keys sorted, floats printed with 17
//! significant digits in scientific notation, no NaN or infinities. Two runs
//! that produce the same report value produce the same bytes.

use serde::Serialize;
use serde_json::Value;

/// Errors from canonical serialization.
#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("serialization failed: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("non-finite number at {path}")]
    NonFinite { path: String },
}

/// Serializes any value to canonical JSON text (no trailing newline).
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String, ReportError> {
    let tree = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&tree, "$", &mut out)?;
    Ok(out)
}

fn write_value(value: &Value, path: &str, out: &mut String) -> Result<(), ReportError> {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                let f = n.as_f64().ok_or_else(|| ReportError::NonFinite {
                    path: path.to_string(),
                })?;
                if !f.is_finite() {
                    return Err(ReportError::NonFinite {
                        path: path.to_string(),
                    });
                }
                out.push_str(&format_float(f));
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string serialization"));
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, &format!("{path}[{i}]"), out)?;
            }
            out.push(']');
        }
        Value::Object(map) => {
            // serde_json's default map preserves sorted key order (BTreeMap),
            // but sort defensively in case the feature set changes.
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("string serialization"));
                out.push(':');
                write_value(&map[*key], &format!("{path}.{key}"), out)?;
            }
            out.push('}');
        }
    }
    Ok(())
}

/// 17 significant digits, scientific notation; round-trips exactly through
/// any correct f64 parser.
pub fn format_float(f: f64) -> String {
    format!("{f:.16e}")
}
