//! Canonical JSON encoding and content hashing.
//!
//! Objects are written with lexicographically sorted keys and no insignificant
//! whitespace. Integral floats are written without a fractional part so that
//! `38`, `38.0` and `38e0` all hash identically; other numbers use the shortest
//! representation that round-trips.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Largest magnitude at which every integer is exactly representable in an f64.
const EXACT_INT_LIMIT: f64 = 9_007_199_254_740_992.0;

pub fn to_canonical_string(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, &mut out);
    out
}

/// Canonical encoding of any serializable value.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    Ok(to_canonical_string(&serde_json::to_value(value)?))
}

/// Hex SHA-256 over the canonical encoding of `value` with its top-level `id`
/// field removed, so that a document can carry its own content id.
pub fn content_id(value: &Value) -> String {
    let stripped = match value {
        Value::Object(map) if map.contains_key("id") => {
            let mut map = map.clone();
            map.remove("id");
            Value::Object(map)
        }
        other => other.clone(),
    };
    sha256_hex(to_canonical_string(&stripped).as_bytes())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Shortest decimal rendering of `x` that parses back to the same f64.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.fract() == 0.0 && x.abs() < EXACT_INT_LIMIT {
        return format!("{}", x as i64);
    }
    format!("{x}")
}

fn write_value(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                let f = n.as_f64().unwrap_or(0.0);
                if f.fract() == 0.0 && f.abs() < EXACT_INT_LIMIT {
                    out.push_str(&format_number(f));
                } else {
                    // serde_json formats floats with ryu, which is shortest round-trip.
                    out.push_str(&n.to_string());
                }
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(key.clone()).to_string());
                out.push(':');
                write_value(&map[key], out);
            }
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn sorts_keys_and_strips_whitespace() {
        let v = json!({"b": 1, "a": [true, null, "x"]});
        assert_eq!(to_canonical_string(&v), r#"{"a":[true,null,"x"],"b":1}"#);
    }

    #[test]
    fn integral_floats_drop_fraction() {
        assert_eq!(to_canonical_string(&json!(38.0)), "38");
        assert_eq!(to_canonical_string(&json!(37.5)), "37.5");
        assert_eq!(format_number(0.1), "0.1");
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(-2.0), "-2");
    }

    #[test]
    fn content_id_ignores_id_field() {
        let a = json!({"id": "abc", "name": "x"});
        let b = json!({"name": "x"});
        assert_eq!(content_id(&a), content_id(&b));
        assert_ne!(content_id(&b), content_id(&json!({"name": "y"})));
    }

    #[test]
    fn escapes_strings() {
        assert_eq!(to_canonical_string(&json!("a\"b\n")), r#""a\"b\n""#);
    }
}
