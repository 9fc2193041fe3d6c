use chrono::{Days, NaiveDate};
use ordered_float::OrderedFloat;

use crate::datagen::NUMBER_WORDS;
use crate::error::{Error, Result};
use crate::value::{SemanticType, Value};

/// Integer for a number word (`zero` to `twenty`).
pub fn number_word(word: &str) -> Option<i64> {
    let w = word.trim().to_lowercase();
    NUMBER_WORDS.iter().position(|n| *n == w).map(|i| i as i64)
}

/// Date for `today`, `tonight` or `tomorrow` relative to `today`.
pub fn relative_date(word: &str, today: NaiveDate) -> Option<NaiveDate> {
    match word.trim().to_lowercase().as_str() {
        "today" | "tonight" => Some(today),
        "tomorrow" => today.checked_add_days(Days::new(1)),
        _ => None,
    }
}

/// Converts a raw mention to a typed value. Integers accept digits or number
/// words, dates accept ISO form or relative words, text is trimmed.
pub fn normalize_value(raw: &str, ty: SemanticType, today: NaiveDate) -> Result<Value> {
    let unparseable = || Error::Unparseable {
        raw: raw.to_string(),
        expected: ty.name().to_string(),
    };
    match ty {
        SemanticType::Integer => {
            if let Some(n) = number_word(raw) {
                return Ok(Value::Integer(n));
            }
            Value::parse(raw, ty)
        }
        SemanticType::Date => {
            if let Some(d) = relative_date(raw, today) {
                return Ok(Value::Date(d));
            }
            Value::parse(raw, ty)
        }
        SemanticType::Decimal => {
            let x: f64 = raw
                .trim()
                .trim_start_matches(['$', '€'])
                .parse()
                .map_err(|_| unparseable())?;
            if x.is_finite() {
                Ok(Value::Decimal(OrderedFloat(x)))
            } else {
                Err(unparseable())
            }
        }
        _ => Value::parse(raw, ty),
    }
    .map_err(|_| unparseable())
}
