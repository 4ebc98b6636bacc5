//! Fixed 9-significant-digit output so that reports are byte-stable.

use serde::Serialize;
use serde_json::Value;

pub const SIG_DIGITS: usize = 9;

/// Rounds to `SIG_DIGITS` significant digits; non-finite values pass through.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIG_DIGITS - 1, x)
        .parse()
        .expect("formatted float parses")
}

/// Text form used in tables and CSV cells.
pub fn fmt(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let r = round_sig(x);
    let a = r.abs();
    if r == 0.0 || (1e-4..1e9).contains(&a) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            *v = serde_json::Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to `SIG_DIGITS` digits.
pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    let mut text = serde_json::to_string_pretty(&v)?;
    text.push('\n');
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(round_sig(47.000000000001), 47.0);
        assert_eq!(round_sig(1.7300000000049e-5), 1.73e-5);
        assert_eq!(round_sig(123456789.4), 123456789.0);
        assert_eq!(round_sig(0.0), 0.0);
        assert!(round_sig(f64::NAN).is_nan());
    }

    #[test]
    fn text_forms() {
        assert_eq!(fmt(47.0), "47");
        assert_eq!(fmt(1.73e-5), "1.73e-5");
        assert_eq!(fmt(7.2e9), "7.2e9");
        assert_eq!(fmt(62627.3922), "62627.3922");
        assert_eq!(fmt(f64::NAN), "nan");
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn json_rounds_nested_floats() {
        #[derive(Serialize)]
        struct S {
            a: f64,
            b: Vec<f64>,
            n: u32,
            c: f64,
        }
        let text = to_json(&S {
            a: 0.1 + 0.2,
            b: vec![2.0 / 3.0],
            n: 7,
            c: f64::NAN,
        })
        .unwrap();
        assert!(text.contains("\"a\": 0.3,"), "{text}");
        assert!(text.contains("0.666666667"));
        assert!(text.contains("\"n\": 7"));
        assert!(text.contains("\"c\": null"));
    }
}
