//! Data-aware choice of the next attribute to request.
//!
//! An attribute's score is `p_known × entropy_bits × depth_decay^depth`,
//! multiplied by the avoid penalty for columns annotated `avoid`. Columns
//! annotated `never` are not considered at all.

mod awareness;
mod cache;

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use awareness::{AwarenessCounts, AwarenessModel, AwarenessOutcome};
pub use cache::StatsCache;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::schema::{Attribute, RequestPreference, Schema};
use crate::store::{CandidateSet, ColumnStats, Store};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig<F> {
    pub max_join_depth: usize,
    pub depth_decay: F,
    /// Largest candidate count offered as a list instead of asking further.
    pub list_threshold: usize,
    pub avoid_penalty: F,
}

impl<F: Scalar> Default for PolicyConfig<F> {
    fn default() -> Self {
        PolicyConfig {
            max_join_depth: 2,
            depth_decay: F::lit(0.8),
            list_threshold: 5,
            avoid_penalty: F::lit(0.1),
        }
    }
}

impl<F: Scalar> PolicyConfig<F> {
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if !(self.depth_decay > F::zero() && self.depth_decay <= F::one()) {
            errors.push(format!("depth_decay must be in (0, 1], got {:?}", self.depth_decay));
        }
        if self.list_threshold < 1 {
            errors.push("list_threshold must be at least 1".to_string());
        }
        if !(self.avoid_penalty >= F::zero() && self.avoid_penalty <= F::one()) {
            errors.push(format!("avoid_penalty must be in [0, 1], got {:?}", self.avoid_penalty));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(crate::Error::Validation(errors))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredAttribute<F> {
    pub attribute: Attribute,
    pub score: F,
    pub p_known: F,
    pub entropy_bits: F,
    pub depth: usize,
    pub distinct: usize,
}

/// Descending score, then shallower join depth, then `table.column`.
pub fn rank_order<F: Scalar>(a: &ScoredAttribute<F>, b: &ScoredAttribute<F>) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.depth.cmp(&b.depth))
        .then_with(|| a.attribute.to_string().cmp(&b.attribute.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CandidateSummary {
    pub key: Value,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyDecision<F> {
    Ask { attribute: Attribute, score: F },
    OfferList { rows: Vec<CandidateSummary> },
    Resolved { key: Value },
    Exhausted { remaining: usize },
}

/// Attributes that may be requested for a candidate set, with their join depth.
pub fn requestable_attributes(store: &Store, c: &CandidateSet, max_join_depth: usize) -> Vec<(Attribute, usize)> {
    requestable_for_table(store, c.base_table(), max_join_depth.min(c.max_join_depth()))
}

/// Attributes reachable from `table` within `max_join_depth` hops and not
/// annotated `never`, in breadth-first then declaration order.
pub fn requestable_for_table(store: &Store, table: &str, max_join_depth: usize) -> Vec<(Attribute, usize)> {
    let schema = store.schema();
    let Some(base) = schema.table_index(table) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for reach in store.graph().reachable(base, max_join_depth) {
        let table = &schema.tables[reach.table];
        for col in &table.columns {
            if col.annotation.request_preference != RequestPreference::Never {
                out.push((Attribute::new(table.name.clone(), col.name.clone()), reach.depth));
            }
        }
    }
    out
}

/// The slot policy: scoring configuration plus a statistics cache.
#[derive(Debug, Default)]
pub struct SlotPolicy<F: Scalar = f64> {
    config: PolicyConfig<F>,
    cache: StatsCache<F>,
}

impl<F: Scalar> SlotPolicy<F> {
    pub fn new(config: PolicyConfig<F>) -> Self {
        SlotPolicy {
            config,
            cache: StatsCache::new(),
        }
    }

    pub fn config(&self) -> &PolicyConfig<F> {
        &self.config
    }

    pub fn cache(&self) -> &StatsCache<F> {
        &self.cache
    }

    pub fn stats_cached(&self, store: &Store, c: &CandidateSet, attr: &Attribute) -> Result<Arc<ColumnStats<F>>> {
        self.cache.column_stats(store, c, attr)
    }

    /// Every requestable attribute ranked by score.
    pub fn score_attributes(
        &self,
        store: &Store,
        c: &CandidateSet,
        m: &AwarenessModel,
    ) -> Result<Vec<ScoredAttribute<F>>> {
        self.score_excluding(store, c, m, &BTreeSet::new())
    }

    /// Like [`Self::score_attributes`], leaving out `excluded` attributes
    /// (those the user already declined in this session).
    pub fn score_excluding(
        &self,
        store: &Store,
        c: &CandidateSet,
        m: &AwarenessModel,
        excluded: &BTreeSet<Attribute>,
    ) -> Result<Vec<ScoredAttribute<F>>> {
        let schema = store.schema();
        let mut out = Vec::new();
        for (attribute, depth) in requestable_attributes(store, c, self.config.max_join_depth) {
            if excluded.contains(&attribute) {
                continue;
            }
            let stats = self.stats_cached(store, c, &attribute)?;
            let p_known: F = m.p_known(&attribute);
            let mut score = p_known * stats.entropy_bits * self.config.depth_decay.powi(depth as i32);
            if preference(schema, &attribute) == RequestPreference::Avoid {
                score = score * self.config.avoid_penalty;
            }
            out.push(ScoredAttribute {
                attribute,
                score,
                p_known,
                entropy_bits: stats.entropy_bits,
                depth,
                distinct: stats.distinct,
            });
        }
        out.sort_by(rank_order);
        Ok(out)
    }

    pub fn next_request(&self, store: &Store, c: &CandidateSet, m: &AwarenessModel) -> Result<PolicyDecision<F>> {
        self.next_request_excluding(store, c, m, &BTreeSet::new())
    }

    /// Decides the next step for a candidate set. Only attributes with a
    /// positive score are asked: a zero score means asking cannot narrow the
    /// candidates (or the user is certain not to know).
    pub fn next_request_excluding(
        &self,
        store: &Store,
        c: &CandidateSet,
        m: &AwarenessModel,
        excluded: &BTreeSet<Attribute>,
    ) -> Result<PolicyDecision<F>> {
        let n = c.len();
        if n == 0 {
            return Ok(PolicyDecision::Exhausted { remaining: 0 });
        }
        if n == 1 {
            let key = c.row_ids().iter().next().expect("one candidate").clone();
            return Ok(PolicyDecision::Resolved { key });
        }
        if n <= self.config.list_threshold {
            return Ok(PolicyDecision::OfferList {
                rows: summarize(store, c.base_table(), c.row_ids().iter()),
            });
        }
        let ranked = self.score_excluding(store, c, m, excluded)?;
        Ok(match ranked.into_iter().next() {
            Some(top) if top.score > F::zero() => PolicyDecision::Ask {
                attribute: top.attribute,
                score: top.score,
            },
            _ => PolicyDecision::Exhausted { remaining: n },
        })
    }
}

fn preference(schema: &Schema, attr: &Attribute) -> RequestPreference {
    schema
        .column(attr)
        .map(|c| c.annotation.request_preference)
        .unwrap_or_default()
}

/// Human-readable one-line descriptions of entities, for list offers.
pub fn summarize<'a>(store: &Store, table: &str, keys: impl Iterator<Item = &'a Value>) -> Vec<CandidateSummary> {
    keys.map(|k| CandidateSummary {
        key: k.clone(),
        label: describe(store, table, k),
    })
    .collect()
}

/// Describes one entity by its requestable columns; foreign keys are replaced
/// by the first requestable column of the referenced row.
pub fn describe(store: &Store, table: &str, key: &Value) -> String {
    let schema = store.schema();
    let (Some(spec), Ok(Some(row))) = (schema.table(table), store.row_by_key(table, key)) else {
        return key.to_string();
    };
    let mut parts = Vec::new();
    for (i, col) in spec.columns.iter().enumerate() {
        let Some(v) = &row[i] else { continue };
        let attr = Attribute::new(table, col.name.clone());
        if let Some(fk) = schema.foreign_key_of(&attr) {
            let parent = schema.table(&fk.parent.table).expect("validated schema");
            let shown = parent
                .columns
                .iter()
                .find(|c| c.annotation.request_preference != RequestPreference::Never)
                .and_then(|c| store.value_of(&parent.name, v, &c.name).ok().flatten());
            if let Some(s) = shown {
                parts.push(s.to_string());
            }
        } else if col.annotation.request_preference != RequestPreference::Never {
            parts.push(v.to_string());
        }
    }
    if parts.is_empty() {
        key.to_string()
    } else {
        parts.join(", ")
    }
}

#[cfg(test)]
mod tests;
