use std::fmt;

use chrono::{NaiveDate, NaiveTime};
use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// Semantic type of a column, fixed when the schema is loaded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticType {
    Text,
    Integer,
    Decimal,
    Date,
    Time,
    Identifier,
}

impl SemanticType {
    pub fn name(self) -> &'static str {
        match self {
            SemanticType::Text => "text",
            SemanticType::Integer => "integer",
            SemanticType::Decimal => "decimal",
            SemanticType::Date => "date",
            SemanticType::Time => "time",
            SemanticType::Identifier => "identifier",
        }
    }

    pub fn is_textual(self) -> bool {
        matches!(self, SemanticType::Text | SemanticType::Identifier)
    }
}

impl fmt::Display for SemanticType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const DATE_FORMAT: &str = "%Y-%m-%d";
pub const TIME_FORMAT: &str = "%H:%M";

/// A typed, non-null cell value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Text(String),
    Integer(i64),
    Decimal(OrderedFloat<f64>),
    Date(NaiveDate),
    Time(NaiveTime),
    Identifier(String),
}

impl Value {
    /// Parses the canonical textual form of a value of the given type.
    pub fn parse(raw: &str, ty: SemanticType) -> Result<Value> {
        let unparseable = || Error::Unparseable {
            raw: raw.to_string(),
            expected: ty.name().to_string(),
        };
        let trimmed = raw.trim();
        Ok(match ty {
            SemanticType::Text => Value::Text(trimmed.to_string()),
            SemanticType::Identifier => {
                if trimmed.is_empty() {
                    return Err(unparseable());
                }
                Value::Identifier(trimmed.to_string())
            }
            SemanticType::Integer => Value::Integer(trimmed.parse().map_err(|_| unparseable())?),
            SemanticType::Decimal => {
                let x: f64 = trimmed.parse().map_err(|_| unparseable())?;
                if !x.is_finite() {
                    return Err(unparseable());
                }
                Value::Decimal(OrderedFloat(x))
            }
            SemanticType::Date => {
                Value::Date(NaiveDate::parse_from_str(trimmed, DATE_FORMAT).map_err(|_| unparseable())?)
            }
            SemanticType::Time => {
                Value::Time(NaiveTime::parse_from_str(trimmed, TIME_FORMAT).map_err(|_| unparseable())?)
            }
        })
    }

    pub fn semantic_type(&self) -> SemanticType {
        match self {
            Value::Text(_) => SemanticType::Text,
            Value::Integer(_) => SemanticType::Integer,
            Value::Decimal(_) => SemanticType::Decimal,
            Value::Date(_) => SemanticType::Date,
            Value::Time(_) => SemanticType::Time,
            Value::Identifier(_) => SemanticType::Identifier,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) | Value::Identifier(s) => Some(s),
            _ => None,
        }
    }

    /// Coerces the value to a column type where the conversion is lossless
    /// (text/identifier interchange, integer to decimal).
    pub fn coerce(self, ty: SemanticType) -> Option<Value> {
        match (self, ty) {
            (v, t) if v.semantic_type() == t => Some(v),
            (Value::Text(s), SemanticType::Identifier) => Some(Value::Identifier(s)),
            (Value::Identifier(s), SemanticType::Text) => Some(Value::Text(s)),
            (Value::Integer(i), SemanticType::Decimal) => Some(Value::Decimal(OrderedFloat(i as f64))),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) | Value::Identifier(s) => f.write_str(s),
            Value::Integer(i) => write!(f, "{i}"),
            Value::Decimal(x) => write!(f, "{}", x.0),
            Value::Date(d) => write!(f, "{}", d.format(DATE_FORMAT)),
            Value::Time(t) => write!(f, "{}", t.format(TIME_FORMAT)),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Value::Integer(i) => serializer.serialize_i64(*i),
            Value::Decimal(x) => serializer.serialize_f64(x.0),
            other => serializer.collect_str(other),
        }
    }
}
