//! Deterministic JSON (sorted keys, 17 significant digits) and markdown
//! rendering.

use serde::Serialize;
use serde_json::Value;

use crate::chaplygin::ClassificationReport;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u64 = 1;

/// Formats a float with 17 significant digits; non-finite values become
/// strings so the output stays valid JSON.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "\"NaN\"".into()
    } else if x.is_infinite() {
        if x > 0.0 { "\"inf\"".into() } else { "\"-inf\"".into() }
    } else {
        format!("{x:.16e}")
    }
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                out.push_str(&fmt_float(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).unwrap_or_default()),
        Value::Array(a) => {
            if a.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(x, indent + 1, out);
                if i + 1 < a.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(o) => {
            if o.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = o.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(k).unwrap_or_default());
                out.push_str(": ");
                write_value(&o[*k], indent + 1, out);
                if i + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Serializes with sorted keys and fixed float formatting. Floats that
/// serde maps to `null` (non-finite) are kept as `null`.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut out = String::new();
    write_value(&v, 0, &mut out);
    out.push('\n');
    Ok(out)
}

/// Wraps a payload as `{schema, <key>: payload}` plus extra fields.
pub fn envelope<T: Serialize>(command: &str, payload: &T) -> Result<Value> {
    let mut map = serde_json::Map::new();
    map.insert("schema".into(), Value::from(SCHEMA_VERSION));
    map.insert("command".into(), Value::from(command));
    map.insert(
        "result".into(),
        serde_json::to_value(payload).map_err(|e| Error::Invalid(e.to_string()))?,
    );
    Ok(Value::Object(map))
}

pub fn classification_markdown(r: &ClassificationReport) -> String {
    let mut s = String::new();
    s.push_str(&format!("# Classification: {}\n\n", r.system));
    s.push_str(&format!("Level: **{}** (tolerance {:e}, {} points)\n\n", r.level, r.tolerance, r.points));
    if !r.labels.is_empty() {
        s.push_str(&format!("Labels: {}\n\n", r.labels.join(", ")));
    }
    s.push_str("| tier | condition | pass |\n|---|---|---|\n");
    let rows = [
        ("i", "β = 0, Ξ^G = 0"),
        ("ii", "dβ = 0, β/(m−1) ∧ θ_l = Ξ^G"),
        ("iii", "dβ = 0, β/(m−1) ∧ θ_l = γ^G"),
        ("iv", "dβ = 0"),
    ];
    for (k, c) in rows {
        let pass = r.tiers.get(k).copied().unwrap_or(false);
        s.push_str(&format!("| {k} | {c} | {} |\n", if pass { "yes" } else { "no" }));
    }
    s.push_str("\n| residual | value |\n|---|---|\n");
    for (k, v) in &r.residuals {
        let flag = if r.marginal.contains(k) { " (marginal)" } else { "" };
        s.push_str(&format!("| {k} | {v:.6e}{flag} |\n"));
    }
    s
}

/// Two-column markdown table.
pub fn table_markdown(title: &str, rows: &[(String, String)]) -> String {
    let mut s = format!("# {title}\n\n| item | value |\n|---|---|\n");
    for (k, v) in rows {
        s.push_str(&format!("| {k} | {v} |\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn keys_sorted_and_floats_fixed() {
        let mut m = BTreeMap::new();
        m.insert("b", 0.1);
        m.insert("a", 1.0 / 3.0);
        let s = to_json(&m).unwrap();
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
        assert!(s.contains("3.3333333333333331e-1"));
        assert!(s.contains("1.0000000000000001e-1"));
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["b"].as_f64().unwrap(), 0.1);
    }

    #[test]
    fn floats_round_trip_exactly() {
        for x in [std::f64::consts::PI, 1e-300, -2.5e17, 0.0] {
            let s = to_json(&x).unwrap();
            assert_eq!(s.trim().parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn integers_stay_integral() {
        let s = to_json(&serde_json::json!({"schema": 1})).unwrap();
        assert!(s.contains("\"schema\": 1\n"));
    }
}
