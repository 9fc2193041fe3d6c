use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashSet};
use std::hash::{Hash, Hasher};

use serde::Serialize;

use crate::schema::Attribute;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PredicateOp {
    Eq,
    /// Case-insensitive match against the nearest stored values within
    /// `max_edits` Damerau-Levenshtein edits. Text columns only.
    FuzzyEq {
        max_edits: usize,
    },
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Predicate {
    pub attribute: Attribute,
    pub op: PredicateOp,
    pub value: Value,
}

impl Predicate {
    pub fn eq(attribute: Attribute, value: Value) -> Self {
        Predicate {
            attribute,
            op: PredicateOp::Eq,
            value,
        }
    }

    pub fn fuzzy(attribute: Attribute, value: impl Into<String>, max_edits: usize) -> Self {
        Predicate {
            attribute,
            op: PredicateOp::FuzzyEq { max_edits },
            value: Value::Text(value.into()),
        }
    }
}

/// Compiled form of a predicate: fuzzy predicates are resolved to the set of
/// stored values they match.
pub(crate) enum Matcher {
    Compare(PredicateOp, Value),
    OneOf(HashSet<Value>),
}

impl Matcher {
    pub(crate) fn matches(&self, v: &Value) -> bool {
        match self {
            Matcher::OneOf(set) => set.contains(v),
            Matcher::Compare(op, lit) => match op {
                PredicateOp::Eq => v == lit,
                PredicateOp::Lt => v < lit,
                PredicateOp::Le => v <= lit,
                PredicateOp::Gt => v > lit,
                PredicateOp::Ge => v >= lit,
                PredicateOp::FuzzyEq { .. } => unreachable!("fuzzy predicates compile to OneOf"),
            },
        }
    }
}

/// Base-table entities consistent with every predicate applied so far.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CandidateSet {
    pub(crate) base_table: String,
    pub(crate) predicates: Vec<Predicate>,
    pub(crate) joined_tables: BTreeSet<String>,
    pub(crate) row_ids: BTreeSet<Value>,
    pub(crate) max_join_depth: usize,
}

impl CandidateSet {
    pub fn base_table(&self) -> &str {
        &self.base_table
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.predicates
    }

    pub fn joined_tables(&self) -> &BTreeSet<String> {
        &self.joined_tables
    }

    pub fn row_ids(&self) -> &BTreeSet<Value> {
        &self.row_ids
    }

    pub fn len(&self) -> usize {
        self.row_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_ids.is_empty()
    }

    pub fn max_join_depth(&self) -> usize {
        self.max_join_depth
    }

    /// Hash of the base table and the ordered predicate list.
    pub fn signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.base_table.hash(&mut h);
        self.max_join_depth.hash(&mut h);
        self.predicates.hash(&mut h);
        h.finish()
    }
}
