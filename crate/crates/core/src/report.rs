//! JSON report shaping: fixed-precision numbers and a versioned envelope.

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: &str = "1.0";

/// Rounds to `places` decimal places; `-0.0` becomes `0.0`.
pub fn round_places(x: f64, places: i32) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let scale = 10f64.powi(places);
    let r = (x * scale).round() / scale;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Rounds to `digits` significant figures.
pub fn round_significant(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    // through the decimal string so 5.32e-5 stays exactly 5.32e-5
    format!("{:.*e}", (digits.max(1) - 1) as usize, x).parse().expect("formatted float parses")
}

/// Keys carrying p-values get three significant figures instead of six
/// decimal places.
pub fn is_p_value_key(key: &str) -> bool {
    key == "p" || key == "p_value" || key.ends_with("_p")
}

fn tidy_number(x: f64, p_value: bool) -> Value {
    if p_value && x != 0.0 && x.abs() < 1e-3 {
        return format!("{x:.2e}").parse().map_or(Value::Null, Value::Number);
    }
    let v = if p_value { round_significant(x, 3) } else { round_places(x, 6) };
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

/// Applies the number formatting rules to every float in `value`.
pub fn tidy(value: Value) -> Value {
    tidy_in(value, false)
}

fn tidy_in(value: Value, p_value: bool) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => tidy_number(n.as_f64().unwrap(), p_value),
        Value::Array(items) => Value::Array(items.into_iter().map(|v| tidy_in(v, p_value)).collect()),
        Value::Object(map) => Value::Object(
            map.into_iter()
                .map(|(k, v)| {
                    let p = is_p_value_key(&k);
                    (k, tidy_in(v, p))
                })
                .collect(),
        ),
        other => other,
    }
}

/// Wraps a command's payload with version, command name and seed, then tidies
/// the numbers.
pub fn envelope<T: Serialize>(command: &str, seed: u64, body: &T) -> Result<Value> {
    let body = serde_json::to_value(body).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut map = Map::new();
    map.insert("schema_version".into(), SCHEMA_VERSION.into());
    map.insert("command".into(), command.into());
    map.insert("seed".into(), seed.into());
    match body {
        Value::Object(fields) => map.extend(fields),
        other => {
            map.insert("result".into(), other);
        }
    }
    Ok(tidy(Value::Object(map)))
}

pub fn render(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json values always serialise");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn fixed_places() {
        assert_eq!(round_places(0.03202846975, 6), 0.032028);
        assert_eq!(round_places(-1e-9, 6), 0.0);
        assert!(round_places(-1e-9, 6).is_sign_positive());
    }

    #[test]
    fn significant_figures() {
        assert_eq!(round_significant(5.3245e-5, 3), 5.32e-5);
        assert_eq!(round_significant(0.89734, 3), 0.897);
        assert_eq!(round_significant(0.0, 3), 0.0);
    }

    #[test]
    fn p_values_render_scientific() {
        let v = tidy(json!({"chi2": 16.33096085, "p": 5.3245e-5, "nested": {"mcnemar_p": 0.123456}}));
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"{"chi2":16.330961,"nested":{"mcnemar_p":0.123},"p":5.32e-5}"#);
    }

    #[test]
    fn envelope_fields() {
        let v = envelope("x", 7, &json!({"a": 1.0000004})).unwrap();
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
        assert_eq!(v["seed"], 7);
        assert_eq!(v["a"], 1.0);
        assert_eq!(envelope("x", 1, &json!([1, 2])).unwrap()["result"], json!([1, 2]));
    }
}
