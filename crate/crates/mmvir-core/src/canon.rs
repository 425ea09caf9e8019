//! Canonical JSON text form: UTF-8, keys sorted, two-space indentation,
//! floats fixed at six decimal places. Two writes of the same value are
//! byte-identical, which is what document persistence and all the
//! reproducibility checks lean on.

use serde::Serialize;

/// Quantum used for time-like floats stored in documents: one microsecond.
pub const TIME_QUANTUM: f64 = 1e-6;

/// Round a seconds value to the microsecond grid so that the fixed
/// six-decimal text form round-trips bit-exactly.
pub fn quantize_s(t: f64) -> f64 {
    let q = (t * 1e6).round() / 1e6;
    if q == 0.0 {
        0.0 // normalize -0.0
    } else {
        q
    }
}

/// Serialize any value to the canonical text form.
pub fn to_canonical_string<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&v, 0, &mut out);
    out.push('\n');
    Ok(out)
}

fn write_value(v: &serde_json::Value, indent: usize, out: &mut String) {
    match v {
        serde_json::Value::Null => out.push_str("null"),
        serde_json::Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        serde_json::Value::Number(n) => write_number(n, out),
        serde_json::Value::String(s) => write_string(s, out),
        serde_json::Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(indent + 1, out);
                write_value(item, indent + 1, out);
            }
            newline(indent, out);
            out.push(']');
        }
        serde_json::Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_unstable();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(indent + 1, out);
                write_string(key, out);
                out.push_str(": ");
                write_value(&map[key.as_str()], indent + 1, out);
            }
            newline(indent, out);
            out.push('}');
        }
    }
}

fn write_number(n: &serde_json::Number, out: &mut String) {
    if let Some(u) = n.as_u64() {
        out.push_str(&u.to_string());
    } else if let Some(i) = n.as_i64() {
        out.push_str(&i.to_string());
    } else {
        // Finite by construction: serde_json cannot represent NaN/inf.
        let f = n.as_f64().unwrap_or(0.0);
        out.push_str(&format!("{f:.6}"));
    }
}

fn write_string(s: &str, out: &mut String) {
    // serde_json's escaping is already canonical for a given string.
    out.push_str(&serde_json::to_string(s).expect("string serialization is infallible"));
}

fn newline(indent: usize, out: &mut String) {
    out.push('\n');
    for _ in 0..indent {
        out.push_str("  ");
    }
}
