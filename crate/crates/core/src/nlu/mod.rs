//! Intent classification and slot extraction.
//!
//! Entity values are found by scanning the text against gazetteers built from
//! the store (tolerating small misspellings), numbers, dates and times by
//! pattern rules. Both are replaced by placeholder tokens before the intent
//! classifier sees the text, so the classifier generalizes over values.

mod classifier;
mod gazetteer;
mod normalize;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::NaiveDate;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

pub use classifier::{features, IntentClassifier, NaiveBayes};
pub use gazetteer::{scan_scalars, EntityMention, Gazetteers, ScalarMention, STOPWORDS};
pub use normalize::{normalize_value, number_word, relative_date};

use crate::datagen::AnnotatedUtterance;
use crate::dialogue::dm::{self, informed_slot};
use crate::error::{Error, Result};
use crate::schema::{Attribute, Schema};
use crate::store::Store;
use crate::tasks::TaskDefinition;
use crate::text::{fold, tokenize};
use crate::value::{SemanticType, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NluConfig {
    /// Additive smoothing constant.
    pub smoothing: f64,
    /// Below this posterior the intent is reported as `fallback`.
    pub confidence_floor: f64,
    pub bigrams: bool,
}

impl Default for NluConfig {
    fn default() -> Self {
        NluConfig {
            smoothing: 0.5,
            confidence_floor: 0.3,
            bigrams: true,
        }
    }
}

impl NluConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if !(self.smoothing > 0.0 && self.smoothing.is_finite()) {
            errors.push(format!("smoothing must be positive, got {}", self.smoothing));
        }
        if !(0.0..=1.0).contains(&self.confidence_floor) {
            errors.push(format!(
                "confidence_floor must be in [0, 1], got {}",
                self.confidence_floor
            ));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errors))
        }
    }
}

/// Semantic type of every slot name: attribute slots (`table_column`), then
/// task slots (entity slots are identifiers).
pub fn slot_types(schema: &Schema, tasks: &[TaskDefinition]) -> BTreeMap<String, SemanticType> {
    let mut out = BTreeMap::new();
    for a in schema.attributes() {
        out.insert(a.slot_name(), schema.column(&a).expect("listed").semantic_type);
    }
    for t in tasks {
        for s in &t.slots {
            out.entry(s.name.clone())
                .or_insert(s.scalar_type().unwrap_or(SemanticType::Identifier));
        }
    }
    out
}

/// Placeholder token for a slot value: `<slot>` for text slots, `<type>` for
/// numbers, dates and times.
pub fn placeholder_token(slot: &str, slot_types: &BTreeMap<String, SemanticType>) -> String {
    match slot_types.get(slot) {
        Some(t) if !t.is_textual() => format!("<{t}>"),
        _ => format!("<{slot}>"),
    }
}

/// Lowercased tokens with each `(start, end, token)` byte span replaced by its
/// placeholder token.
fn tokens_with(text: &str, spans: &[(usize, usize, String)]) -> Vec<String> {
    let mut out = Vec::new();
    let mut used = vec![false; spans.len()];
    for (s, e) in tokenize(text) {
        match spans.iter().position(|(a, b, _)| s < *b && *a < e) {
            Some(i) => {
                if !used[i] {
                    used[i] = true;
                    out.push(spans[i].2.clone());
                }
            }
            None => out.push(fold(&text[s..e])),
        }
    }
    out
}

fn byte_offset(text: &str, chars: usize) -> usize {
    text.char_indices().nth(chars).map_or(text.len(), |(b, _)| b)
}

fn char_offset(text: &str, bytes: usize) -> usize {
    text[..bytes].chars().count()
}

/// Classifier tokens of an annotated training utterance.
pub fn training_tokens(u: &AnnotatedUtterance, slot_types: &BTreeMap<String, SemanticType>) -> Vec<String> {
    let spans: Vec<(usize, usize, String)> = u
        .slots
        .iter()
        .map(|s| {
            (
                byte_offset(&u.text, s.start),
                byte_offset(&u.text, s.end),
                placeholder_token(&s.slot, slot_types),
            )
        })
        .collect();
    tokens_with(&u.text, &spans)
}

/// Trains the default classifier on a corpus.
pub fn train_intent_classifier(
    corpus: &[AnnotatedUtterance],
    schema: &Schema,
    tasks: &[TaskDefinition],
    config: &NluConfig,
) -> Result<NaiveBayes> {
    NaiveBayes::train(corpus, &slot_types(schema, tasks), config)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotMatch {
    pub slot: String,
    pub value: Value,
    /// The text as written; `start..end` are character offsets.
    pub raw: String,
    pub start: usize,
    pub end: usize,
    /// Edit distance between the text and the stored value.
    pub distance: usize,
    /// Source column for entity values found in a gazetteer.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attribute: Option<Attribute>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NluResult {
    pub intent: String,
    pub confidence: f64,
    pub slots: Vec<SlotMatch>,
}

/// Dialogue context used to name scalar mentions and break ties.
#[derive(Debug, Clone)]
pub struct ParseContext {
    pub today: NaiveDate,
    pub active_task: Option<String>,
    /// Slot the agent just asked for, if any.
    pub expected_slot: Option<String>,
    /// Column behind `expected_slot` when the agent asked for an attribute.
    pub expected_attribute: Option<Attribute>,
}

impl ParseContext {
    pub fn new(today: NaiveDate) -> Self {
        ParseContext {
            today,
            active_task: None,
            expected_slot: None,
            expected_attribute: None,
        }
    }
}

/// A trained classifier together with gazetteers over the live store.
#[derive(Debug)]
pub struct Nlu {
    classifier: Arc<dyn IntentClassifier>,
    slot_types: BTreeMap<String, SemanticType>,
    confidence_floor: f64,
    tasks: Vec<TaskDefinition>,
    max_join_depth: usize,
    gazetteers: RwLock<Arc<Gazetteers>>,
}

impl Nlu {
    pub fn new(model: NaiveBayes, tasks: Vec<TaskDefinition>, store: &Store, max_join_depth: usize) -> Result<Self> {
        let slot_types = model.slot_types.clone();
        let floor = model.config.confidence_floor;
        Self::with_classifier(Arc::new(model), slot_types, floor, tasks, store, max_join_depth)
    }

    pub fn with_classifier(
        classifier: Arc<dyn IntentClassifier>,
        slot_types: BTreeMap<String, SemanticType>,
        confidence_floor: f64,
        tasks: Vec<TaskDefinition>,
        store: &Store,
        max_join_depth: usize,
    ) -> Result<Self> {
        let g = Gazetteers::build(store, &tasks, max_join_depth)?;
        Ok(Nlu {
            classifier,
            slot_types,
            confidence_floor,
            tasks,
            max_join_depth,
            gazetteers: RwLock::new(Arc::new(g)),
        })
    }

    pub fn classifier(&self) -> &Arc<dyn IntentClassifier> {
        &self.classifier
    }

    pub fn slot_types(&self) -> &BTreeMap<String, SemanticType> {
        &self.slot_types
    }

    pub fn confidence_floor(&self) -> f64 {
        self.confidence_floor
    }

    pub fn set_confidence_floor(&mut self, floor: f64) {
        self.confidence_floor = floor;
    }

    pub fn gazetteers(&self) -> Arc<Gazetteers> {
        self.gazetteers.read().clone()
    }

    /// Rebuilds the gazetteers if the store changed since they were built.
    pub fn refresh(&self, store: &Store) -> Result<Arc<Gazetteers>> {
        let current = self.gazetteers();
        if current.version() == store.version() {
            return Ok(current);
        }
        let fresh = Arc::new(Gazetteers::build(store, &self.tasks, self.max_join_depth)?);
        *self.gazetteers.write() = fresh.clone();
        Ok(fresh)
    }

    /// Intent and confidence; `fallback` below the confidence floor.
    pub fn classify(&self, text: &str, today: NaiveDate) -> (String, f64) {
        let r = self.parse(text, &ParseContext::new(today));
        (r.intent, r.confidence)
    }

    /// Full posterior over the intent set for `text`.
    pub fn distribution(&self, text: &str, today: NaiveDate) -> Vec<(String, f64)> {
        let (ents, scalars) = self.mentions(text, &ParseContext::new(today), &self.gazetteers());
        let dist = self
            .classifier
            .distribution(&self.runtime_tokens(text, &ents, &scalars));
        self.classifier.intents().iter().cloned().zip(dist).collect()
    }

    fn mentions(&self, text: &str, ctx: &ParseContext, g: &Gazetteers) -> (Vec<EntityMention>, Vec<ScalarMention>) {
        let preferred: Vec<Attribute> = ctx.expected_attribute.iter().cloned().collect();
        let is_common = |t: &str| self.classifier.knows(t);
        let ents = g.extract(text, &is_common, &preferred);
        let taken: Vec<(usize, usize)> = ents.iter().map(|m| (m.start, m.end)).collect();
        let scalars = scan_scalars(text, ctx.today, &taken);
        (ents, scalars)
    }

    fn runtime_tokens(&self, text: &str, ents: &[EntityMention], scalars: &[ScalarMention]) -> Vec<String> {
        let mut spans: Vec<(usize, usize, String)> = ents
            .iter()
            .map(|m| (m.start, m.end, format!("<{}>", m.attribute.slot_name())))
            .collect();
        spans.extend(
            scalars
                .iter()
                .map(|m| (m.start, m.end, format!("<{}>", m.semantic_type))),
        );
        tokens_with(text, &spans)
    }

    pub fn parse(&self, text: &str, ctx: &ParseContext) -> NluResult {
        let g = self.gazetteers();
        let (ents, scalars) = self.mentions(text, ctx, &g);
        let dist = self
            .classifier
            .distribution(&self.runtime_tokens(text, &ents, &scalars));
        let (best, confidence) =
            dist.iter().copied().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, p)| if p > acc.1 { (i, p) } else { acc },
            );
        let intent = if confidence < self.confidence_floor {
            dm::FALLBACK.to_string()
        } else {
            self.classifier.intents()[best].clone()
        };
        let informed = informed_slot(&intent).map(str::to_string);

        let mut slots = Vec::new();
        for m in ents {
            let (mut attribute, mut value) = (m.attribute, m.value);
            if let Some(x) = &informed {
                if attribute.slot_name() != *x {
                    if let Some((a, v)) = m.alternatives.into_iter().find(|(a, _)| a.slot_name() == *x) {
                        attribute = a;
                        value = v;
                    }
                }
            }
            slots.push(SlotMatch {
                slot: attribute.slot_name(),
                value,
                raw: text[m.start..m.end].to_string(),
                start: char_offset(text, m.start),
                end: char_offset(text, m.end),
                distance: m.distance,
                attribute: Some(attribute),
            });
        }

        let task = self.tasks.iter().find(|t| t.request_intent() == intent).or_else(|| {
            ctx.active_task
                .as_ref()
                .and_then(|n| self.tasks.iter().find(|t| t.name == *n))
        });
        let mut assigned: BTreeSet<String> = slots.iter().map(|s| s.slot.clone()).collect();
        for m in scalars {
            let ty = m.semantic_type;
            let fits =
                |s: &str, assigned: &BTreeSet<String>| !assigned.contains(s) && self.slot_types.get(s) == Some(&ty);
            let mut slot = informed
                .clone()
                .filter(|x| fits(x, &assigned))
                .or_else(|| ctx.expected_slot.clone().filter(|x| fits(x, &assigned)));
            if slot.is_none() {
                if let Some(t) = task {
                    slot = t
                        .slots
                        .iter()
                        .find(|s| s.scalar_type() == Some(ty) && !assigned.contains(&s.name))
                        .map(|s| s.name.clone());
                    if slot.is_none() {
                        let names: BTreeSet<&String> = g
                            .task_attributes(&t.name)
                            .iter()
                            .filter(|(n, t)| *t == ty && !assigned.contains(n))
                            .map(|(n, _)| n)
                            .collect();
                        if names.len() == 1 {
                            slot = names.into_iter().next().cloned();
                        }
                    }
                }
            }
            let Some(slot) = slot else { continue };
            assigned.insert(slot.clone());
            slots.push(SlotMatch {
                slot,
                value: m.value,
                raw: text[m.start..m.end].to_string(),
                start: char_offset(text, m.start),
                end: char_offset(text, m.end),
                distance: 0,
                attribute: None,
            });
        }
        slots.sort_by_key(|s| s.start);
        NluResult {
            intent,
            confidence,
            slots,
        }
    }
}

#[cfg(test)]
mod tests;
