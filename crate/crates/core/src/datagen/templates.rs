use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveTime};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dialogue::dm;
use crate::error::{Error, Result};
use crate::schema::{Attribute, RequestPreference, Schema};
use crate::store::Store;
use crate::tasks::TaskDefinition;
use crate::value::{SemanticType, Value};

use super::{AnnotatedUtterance, SlotSpan};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DateFormat {
    Iso,
    Relative,
    #[default]
    Any,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Binding {
    /// Values drawn from a store column; the slot name defaults to `table_column`.
    Column {
        column: Attribute,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        slot: Option<String>,
    },
    /// Values synthesized for a scalar slot.
    Scalar {
        scalar: SemanticType,
        slot: String,
        #[serde(default)]
        format: DateFormat,
    },
}

impl Binding {
    pub fn slot_name(&self) -> String {
        match self {
            Binding::Column { column, slot } => slot.clone().unwrap_or_else(|| column.slot_name()),
            Binding::Scalar { slot, .. } => slot.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceTemplate {
    pub text: String,
    pub intent: String,
    #[serde(default)]
    pub bindings: BTreeMap<String, Binding>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    Placeholder(String),
}

/// Splits template text into literal text and `{name}` placeholders.
pub fn segments(text: &str) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let Some(close) = rest[open..].find('}') else { break };
        if open > 0 {
            out.push(Segment::Literal(rest[..open].to_string()));
        }
        out.push(Segment::Placeholder(rest[open + 1..open + close].to_string()));
        rest = &rest[open + close + 1..];
    }
    if !rest.is_empty() {
        out.push(Segment::Literal(rest.to_string()));
    }
    out
}

pub fn placeholders(text: &str) -> Vec<String> {
    segments(text)
        .into_iter()
        .filter_map(|s| match s {
            Segment::Placeholder(p) => Some(p),
            Segment::Literal(_) => None,
        })
        .collect()
}

/// Closed intent label set: task request intents, `inform(<slot>)` for every
/// task slot and requestable attribute, and the fixed built-ins.
pub fn intent_labels(schema: &Schema, tasks: &[TaskDefinition]) -> BTreeSet<String> {
    let mut labels: BTreeSet<String> = [dm::AFFIRM, dm::DENY, dm::ABORT, dm::UNKNOWN_VALUE, dm::GREET, dm::BYE]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for t in tasks {
        labels.insert(t.request_intent());
        for s in &t.slots {
            labels.insert(dm::inform_intent(&s.name));
        }
    }
    for a in schema.attributes() {
        if schema.column(&a).expect("listed").annotation.request_preference != RequestPreference::Never {
            labels.insert(dm::inform_intent(&a.slot_name()));
        }
    }
    labels
}

pub fn validate_templates(templates: &[UtteranceTemplate], schema: &Schema, tasks: &[TaskDefinition]) -> Result<()> {
    let labels = intent_labels(schema, tasks);
    let mut errors = Vec::new();
    for t in templates {
        let used: BTreeSet<String> = placeholders(&t.text).into_iter().collect();
        for p in &used {
            if !t.bindings.contains_key(p) {
                return Err(Error::UnboundPlaceholder {
                    template: t.text.clone(),
                    placeholder: p.clone(),
                });
            }
        }
        for (name, b) in &t.bindings {
            if !used.contains(name) {
                errors.push(format!("template `{}`: binding `{name}` is not used", t.text));
            }
            if let Binding::Column { column, .. } = b {
                if schema.column(column).is_none() {
                    errors.push(format!("template `{}`: unknown column `{column}`", t.text));
                }
            }
            if let Binding::Scalar { scalar, .. } = b {
                if !matches!(scalar, SemanticType::Integer | SemanticType::Date | SemanticType::Time) {
                    errors.push(format!(
                        "template `{}`: scalar type {scalar} cannot be synthesized",
                        t.text
                    ));
                }
            }
        }
        if !labels.contains(&t.intent) {
            errors.push(format!("template `{}`: unknown intent `{}`", t.text, t.intent));
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(errors))
    }
}

pub fn templates_from_json_str(
    source: &str,
    origin: &str,
    schema: &Schema,
    tasks: &[TaskDefinition],
) -> Result<Vec<UtteranceTemplate>> {
    let templates: Vec<UtteranceTemplate> = serde_json::from_str(source).map_err(|e| Error::json(origin, e))?;
    validate_templates(&templates, schema, tasks)?;
    Ok(templates)
}

pub fn load_templates(
    path: impl AsRef<Path>,
    schema: &Schema,
    tasks: &[TaskDefinition],
) -> Result<Vec<UtteranceTemplate>> {
    let path = path.as_ref();
    let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    templates_from_json_str(&source, &path.display().to_string(), schema, tasks)
}

/// Ranges for synthesized scalar values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub integer_min: i64,
    pub integer_max: i64,
    /// Probability of writing a sampled integer (up to twenty) as a word.
    pub number_word_rate: f64,
    /// Date range for date slots with no matching store column.
    pub date_start: Option<NaiveDate>,
    pub date_days: i64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            integer_min: 1,
            integer_max: 10,
            number_word_rate: 0.3,
            date_start: None,
            date_days: 14,
        }
    }
}

pub const NUMBER_WORDS: &[&str] = &[
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
    "twenty",
];

pub const RELATIVE_DATES: &[&str] = &["today", "tonight", "tomorrow"];

/// Cycles through a shuffled list of values, reshuffling after each pass.
struct Pool {
    values: Vec<String>,
    next: usize,
}

impl Pool {
    fn draw(&mut self, rng: &mut ChaCha8Rng) -> String {
        if self.next == self.values.len() {
            self.values.shuffle(rng);
            self.next = 0;
        }
        self.next += 1;
        self.values[self.next - 1].clone()
    }
}

fn scalar_surface(
    ty: SemanticType,
    format: DateFormat,
    slot: &str,
    cfg: &SamplingConfig,
    store: &Store,
    rng: &mut ChaCha8Rng,
) -> String {
    match ty {
        SemanticType::Integer => {
            let n = rng.gen_range(cfg.integer_min..=cfg.integer_max);
            if (0..=20).contains(&n) && rng.gen_bool(cfg.number_word_rate) {
                NUMBER_WORDS[n as usize].to_string()
            } else {
                n.to_string()
            }
        }
        SemanticType::Date => {
            let relative = match format {
                DateFormat::Iso => false,
                DateFormat::Relative => true,
                DateFormat::Any => rng.gen_bool(0.5),
            };
            if relative {
                return RELATIVE_DATES.choose(rng).expect("non-empty").to_string();
            }
            let known = date_values(store, slot);
            if known.is_empty() {
                let start = cfg.date_start.unwrap_or_else(|| chrono::Local::now().date_naive());
                (start + Duration::days(rng.gen_range(0..cfg.date_days.max(1)))).to_string()
            } else {
                known.choose(rng).expect("non-empty").to_string()
            }
        }
        _ => {
            let minutes = rng.gen_range(40..96) * 15;
            NaiveTime::from_hms_opt(minutes / 60, minutes % 60, 0)
                .expect("valid time")
                .format("%H:%M")
                .to_string()
        }
    }
}

/// Stored values of the date column whose slot name equals `slot`, if any.
fn date_values(store: &Store, slot: &str) -> Vec<Value> {
    store
        .schema()
        .attributes()
        .find(|a| a.slot_name() == slot)
        .filter(|a| {
            store
                .schema()
                .column(a)
                .is_some_and(|c| c.semantic_type == SemanticType::Date)
        })
        .and_then(|a| store.distinct_values(&a).ok())
        .unwrap_or_default()
}

fn finish_sentence(s: &mut String) {
    let trimmed_len = s.trim_end().len();
    s.truncate(trimmed_len);
    if !s.ends_with(['.', '?', '!']) {
        s.push('.');
    }
}

/// Fills each template `n_per_template` times with values drawn without
/// replacement from the bound columns (cycling once exhausted). Templates
/// without placeholders yield one utterance. Duplicate texts are dropped.
pub fn expand_templates(
    templates: &[UtteranceTemplate],
    store: &Store,
    n_per_template: usize,
    seed: u64,
    cfg: &SamplingConfig,
) -> Result<Vec<AnnotatedUtterance>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pools: HashMap<Attribute, Pool> = HashMap::new();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for t in templates {
        let segs = segments(&t.text);
        let has_placeholders = segs.iter().any(|s| matches!(s, Segment::Placeholder(_)));
        let reps = if has_placeholders { n_per_template } else { 1 };
        for _ in 0..reps {
            let mut text = String::new();
            let mut chars = 0usize;
            let mut slots = Vec::new();
            for seg in &segs {
                match seg {
                    Segment::Literal(l) => {
                        text.push_str(l);
                        chars += l.chars().count();
                    }
                    Segment::Placeholder(p) => {
                        let binding = t.bindings.get(p).ok_or_else(|| Error::UnboundPlaceholder {
                            template: t.text.clone(),
                            placeholder: p.clone(),
                        })?;
                        let surface = match binding {
                            Binding::Column { column, .. } => {
                                if !pools.contains_key(column) {
                                    let mut values: Vec<String> =
                                        store.distinct_values(column)?.iter().map(Value::to_string).collect();
                                    if values.is_empty() {
                                        return Err(Error::EmptyColumn(column.to_string()));
                                    }
                                    values.shuffle(&mut rng);
                                    pools.insert(column.clone(), Pool { values, next: 0 });
                                }
                                pools.get_mut(column).expect("inserted").draw(&mut rng)
                            }
                            Binding::Scalar { scalar, slot, format } => {
                                scalar_surface(*scalar, *format, slot, cfg, store, &mut rng)
                            }
                        };
                        let len = surface.chars().count();
                        slots.push(SlotSpan {
                            slot: binding.slot_name(),
                            value: surface.clone(),
                            start: chars,
                            end: chars + len,
                        });
                        text.push_str(&surface);
                        chars += len;
                    }
                }
            }
            finish_sentence(&mut text);
            if seen.insert(text.clone()) {
                out.push(AnnotatedUtterance {
                    text,
                    intent: t.intent.clone(),
                    slots,
                });
            }
        }
    }
    Ok(out)
}
