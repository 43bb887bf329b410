//! Locale-independent number formatting for CSV and JSON output.
//!
//! Every float written out is first rounded to 12 significant digits, so
//! parsing the text back yields exactly the rounded value.

use serde::Serialize;
use serde_json::Value;

pub const SIGNIFICANT_DIGITS: usize = 12;

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits. Non-finite values
/// pass through.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .expect("formatted float parses")
}

/// Shortest decimal text for `round_sig(x)`, switching to exponent notation
/// for very small or large magnitudes.
pub fn fmt_num(x: f64) -> String {
    let r = round_sig(x);
    if !r.is_finite() {
        return if r.is_nan() {
            "nan".into()
        } else if r > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let a = r.abs();
    if r != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                if let Some(x) = n.as_f64() {
                    *v = serde_json::Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to 12 significant digits and
/// non-finite floats written as `null`.
pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn formats() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(1.5e-4), "0.00015");
        assert_eq!(fmt_num(1e-10), "1e-10");
        assert_eq!(fmt_num(3e9), "3000000000");
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
    }

    #[test]
    fn json_rounding() {
        #[derive(Serialize)]
        struct S {
            a: f64,
            b: Vec<f64>,
            n: u64,
            inf: f64,
        }
        let s = to_json(&S {
            a: 2.0 / 3.0,
            b: vec![0.1 + 0.2],
            n: u64::MAX,
            inf: f64::INFINITY,
        })
        .unwrap();
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["a"].as_f64().unwrap(), 0.666666666667);
        assert_eq!(v["b"][0].as_f64().unwrap(), 0.3);
        assert_eq!(v["n"].as_u64().unwrap(), u64::MAX);
        assert!(v["inf"].is_null());
    }

    proptest! {
        #[test]
        fn text_round_trips_at_twelve_digits(x in proptest::num::f64::NORMAL) {
            let r = round_sig(x);
            prop_assert_eq!(fmt_num(x).parse::<f64>().unwrap(), r);
            prop_assert!(((r - x) / x).abs() <= 5e-12);
            prop_assert_eq!(round_sig(r), r);
        }
    }
}
