//! Canonical JSON rendering with fixed float precision.

use serde::Serialize;
use serde_json::Value;

const SIGNIFICANT_DIGITS: usize = 6;

fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Round every non-integer number in `value` to six significant digits.
pub fn round_floats(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_sig).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Serialize with struct field order preserved and floats rounded.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("response types serialize");
    round_floats(&mut v);
    serde_json::to_string(&v).expect("JSON values serialize")
}
