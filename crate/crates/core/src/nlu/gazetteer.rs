use std::collections::{BTreeMap, HashMap};

use chrono::{NaiveDate, NaiveTime};

use crate::error::Result;
use crate::policy::requestable_for_table;
use crate::schema::{Attribute, RequestPreference};
use crate::store::Store;
use crate::tasks::TaskDefinition;
use crate::text::{edit_distance, fold, fuzzy_threshold, tokenize};
use crate::value::{SemanticType, Value, DATE_FORMAT};

use super::normalize::{number_word, relative_date};

/// Function words never treated as (misspelled) entity values.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "am", "an", "and", "any", "are", "as", "at", "be", "by", "can", "could", "do", "for", "from", "have",
    "he", "her", "his", "i", "i'd", "i'm", "in", "is", "it", "it's", "me", "my", "no", "not", "of", "on", "one", "or",
    "our", "please", "she", "so", "that", "the", "them", "then", "there", "they", "this", "to", "us", "was", "we",
    "what", "when", "which", "who", "will", "with", "would", "yes", "you", "your",
];

#[derive(Debug, Clone)]
struct Entry {
    attribute: usize,
    value: String,
    folded: String,
    chars: usize,
}

/// A gazetteer match; `start..end` are byte offsets into the text.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityMention {
    pub attribute: Attribute,
    pub value: Value,
    pub start: usize,
    pub end: usize,
    pub distance: usize,
    /// Other attributes holding a value at the same span and distance.
    pub alternatives: Vec<(Attribute, Value)>,
}

/// A number, date or time found by pattern rules; byte offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMention {
    pub semantic_type: SemanticType,
    pub value: Value,
    pub start: usize,
    pub end: usize,
}

/// Entity value lists built from the text columns of a store snapshot.
#[derive(Debug, Clone, Default)]
pub struct Gazetteers {
    version: u64,
    attributes: Vec<Attribute>,
    entries: Vec<Entry>,
    exact: HashMap<String, Vec<usize>>,
    /// Entries by (first char, token count), sorted by length in chars.
    buckets: HashMap<(char, usize), Vec<usize>>,
    max_tokens: usize,
    /// Per task: requestable attribute slots of its entity slots, with types.
    task_attributes: BTreeMap<String, Vec<(String, SemanticType)>>,
}

impl Gazetteers {
    pub fn build(store: &Store, tasks: &[TaskDefinition], max_join_depth: usize) -> Result<Self> {
        let schema = store.schema();
        let mut g = Gazetteers {
            version: store.version(),
            ..Default::default()
        };
        for attr in schema.attributes() {
            let col = schema.column(&attr).expect("listed");
            if col.semantic_type != SemanticType::Text || col.annotation.request_preference == RequestPreference::Never
            {
                continue;
            }
            let a = g.attributes.len();
            for v in store.distinct_values(&attr)? {
                let Value::Text(s) = v else { continue };
                let folded = fold(&s);
                let ntok = tokenize(&folded).len();
                if ntok == 0 {
                    continue;
                }
                let idx = g.entries.len();
                let first = folded.chars().next().expect("non-empty");
                g.exact.entry(folded.clone()).or_default().push(idx);
                g.buckets.entry((first, ntok)).or_default().push(idx);
                g.max_tokens = g.max_tokens.max(ntok);
                g.entries.push(Entry {
                    attribute: a,
                    chars: folded.chars().count(),
                    value: s,
                    folded,
                });
            }
            g.attributes.push(attr);
        }
        let entries = &g.entries;
        for b in g.buckets.values_mut() {
            b.sort_by_key(|&i| entries[i].chars);
        }
        for t in tasks {
            let mut attrs = Vec::new();
            for s in &t.slots {
                let Some(table) = s.entity_table() else { continue };
                for (a, _) in requestable_for_table(store, table, max_join_depth) {
                    let ty = schema.column(&a).expect("reachable").semantic_type;
                    attrs.push((a.slot_name(), ty));
                }
            }
            g.task_attributes.insert(t.name.clone(), attrs);
        }
        Ok(g)
    }

    /// Store version the gazetteers were built from.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn task_attributes(&self, task: &str) -> &[(String, SemanticType)] {
        self.task_attributes.get(task).map_or(&[], Vec::as_slice)
    }

    /// Longest-match scan for entity values. An n-gram matches a value with
    /// the same token count if their edit distance is within
    /// [`fuzzy_threshold`] of the value's length. Inexact matches must share
    /// the first character, span at least three characters and contain a
    /// token that is not common (stopwords and training vocabulary), so that
    /// ordinary words are not read as misspelled values. Overlaps resolve by
    /// lower distance, then longer value, then earlier position, then the
    /// order of `preferred` attributes.
    pub fn extract(&self, text: &str, is_common: &dyn Fn(&str) -> bool, preferred: &[Attribute]) -> Vec<EntityMention> {
        let toks = tokenize(text);
        let folded_toks: Vec<String> = toks.iter().map(|&(s, e)| fold(&text[s..e])).collect();
        let mut found: Vec<(usize, usize, usize, usize)> = Vec::new();
        for i in 0..toks.len() {
            for n in 1..=self.max_tokens.min(toks.len() - i) {
                let (start, end) = (toks[i].0, toks[i + n - 1].1);
                let ngram = fold(&text[start..end]);
                let all_stop = folded_toks[i..i + n].iter().all(|t| STOPWORDS.contains(&t.as_str()));
                if all_stop {
                    continue;
                }
                if let Some(hits) = self.exact.get(&ngram) {
                    found.extend(hits.iter().map(|&e| (start, end, e, 0)));
                }
                let len = ngram.chars().count();
                if len < 3
                    || folded_toks[i..i + n]
                        .iter()
                        .all(|t| is_common(t) || STOPWORDS.contains(&t.as_str()))
                {
                    continue;
                }
                let first = ngram.chars().next().expect("non-empty");
                let Some(bucket) = self.buckets.get(&(first, n)) else {
                    continue;
                };
                let lo = bucket.partition_point(|&e| self.entries[e].chars + 2 < len);
                for &e in &bucket[lo..] {
                    let entry = &self.entries[e];
                    if entry.chars > len + 2 {
                        break;
                    }
                    let bound = fuzzy_threshold(entry.chars);
                    if entry.chars.abs_diff(len) > bound {
                        continue;
                    }
                    let d = edit_distance(&ngram, &entry.folded);
                    if d > 0 && d <= bound {
                        found.push((start, end, e, d));
                    }
                }
            }
        }
        let rank = |attr: usize| {
            preferred
                .iter()
                .position(|p| *p == self.attributes[attr])
                .unwrap_or(preferred.len())
        };
        found.sort_by(|a, b| {
            let (ea, eb) = (&self.entries[a.2], &self.entries[b.2]);
            a.3.cmp(&b.3)
                .then(eb.chars.cmp(&ea.chars))
                .then(a.0.cmp(&b.0))
                .then(rank(ea.attribute).cmp(&rank(eb.attribute)))
                .then(ea.attribute.cmp(&eb.attribute))
                .then(ea.value.cmp(&eb.value))
        });
        let mut out: Vec<EntityMention> = Vec::new();
        for &(start, end, e, d) in &found {
            let entry = &self.entries[e];
            let attribute = &self.attributes[entry.attribute];
            if let Some(m) = out.iter_mut().find(|m| m.start == start && m.end == end) {
                let same_rank = m.distance == d;
                if same_rank && m.attribute != *attribute && m.alternatives.iter().all(|(a, _)| a != attribute) {
                    m.alternatives
                        .push((attribute.clone(), Value::Text(entry.value.clone())));
                }
                continue;
            }
            if out.iter().any(|m| start < m.end && m.start < end) {
                continue;
            }
            out.push(EntityMention {
                attribute: attribute.clone(),
                value: Value::Text(entry.value.clone()),
                start,
                end,
                distance: d,
                alternatives: Vec::new(),
            });
        }
        out.sort_by_key(|m| m.start);
        out
    }
}

/// Numbers (digits or words up to twenty), ISO or relative dates, and
/// `H:MM` times, outside the `taken` byte ranges.
pub fn scan_scalars(text: &str, today: NaiveDate, taken: &[(usize, usize)]) -> Vec<ScalarMention> {
    let mut out = Vec::new();
    for (start, end) in tokenize(text) {
        if taken.iter().any(|&(s, e)| start < e && s < end) {
            continue;
        }
        let tok = &text[start..end];
        let found = if let Ok(d) = NaiveDate::parse_from_str(tok, DATE_FORMAT) {
            Some((SemanticType::Date, Value::Date(d)))
        } else if let Some(d) = relative_date(tok, today) {
            Some((SemanticType::Date, Value::Date(d)))
        } else if tok.contains(':') {
            NaiveTime::parse_from_str(tok, "%H:%M")
                .ok()
                .map(|t| (SemanticType::Time, Value::Time(t)))
        } else if tok.chars().all(|c| c.is_ascii_digit()) {
            tok.parse().ok().map(|n| (SemanticType::Integer, Value::Integer(n)))
        } else {
            number_word(tok).map(|n| (SemanticType::Integer, Value::Integer(n)))
        };
        if let Some((semantic_type, value)) = found {
            out.push(ScalarMention {
                semantic_type,
                value,
                start,
                end,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn cinema() -> &'static (Store, Gazetteers) {
        static CELL: OnceLock<(Store, Gazetteers)> = OnceLock::new();
        CELL.get_or_init(|| {
            let store = fixture::cinema_store(1000, 1);
            let tasks = fixture::cinema_tasks(store.schema());
            let g = Gazetteers::build(&store, &tasks, 2).unwrap();
            (store, g)
        })
    }

    fn extract(text: &str) -> Vec<EntityMention> {
        cinema().1.extract(text, &|_| false, &[])
    }

    #[test]
    fn misspelled_title_is_corrected() {
        let m = extract("I want to watch Forest Gump tonight");
        assert_eq!(m.len(), 1, "{m:?}");
        assert_eq!(m[0].attribute, Attribute::new("movie", "title"));
        assert_eq!(m[0].value, Value::Text("Forrest Gump".into()));
        assert_eq!(m[0].distance, 1);
    }

    #[test]
    fn exact_value_found_at_distance_zero() {
        let (store, g) = cinema();
        for v in store.distinct_values(&Attribute::new("movie", "title")).unwrap() {
            let text = format!("The movie title is {v}.");
            let m = g.extract(&text, &|_| false, &[]);
            assert!(m.iter().any(|m| m.value == v && m.distance == 0), "{text}: {m:?}");
        }
    }

    #[test]
    fn common_words_are_not_corrected() {
        let (_, g) = cinema();
        assert!(g
            .extract("I was born in", &|t| t == "born", &[])
            .iter()
            .all(|m| m.distance == 0));
    }

    #[test]
    fn scalars_by_pattern() {
        let today = NaiveDate::from_ymd_opt(2024, 5, 1).unwrap();
        let got: Vec<String> = scan_scalars("four seats at 19:30 on 2024-05-03, 12 or tomorrow", today, &[])
            .iter()
            .map(|m| format!("{}={}", m.semantic_type, m.value))
            .collect();
        assert_eq!(
            got,
            vec![
                "integer=4",
                "time=19:30",
                "date=2024-05-03",
                "integer=12",
                "date=2024-05-02"
            ]
        );
        assert!(scan_scalars("Hall 3", today, &[(0, 6)]).is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn matches_respect_bound_and_exist(idx in 0usize..1000, edits in proptest::collection::vec((0usize..40, 0u8..3, proptest::char::range('a', 'z')), 0..4)) {
            let (store, g) = cinema();
            let attr = [Attribute::new("movie", "title"), Attribute::new("customer", "last_name"), Attribute::new("actor", "name")][idx % 3].clone();
            let values = store.distinct_values(&attr).unwrap();
            let mut chars: Vec<char> = values[idx % values.len()].to_string().chars().collect();
            for (pos, op, c) in edits {
                let p = pos % (chars.len() + 1);
                match op {
                    0 => chars.insert(p, c),
                    1 if p < chars.len() => { chars.remove(p); }
                    _ if p < chars.len() => chars[p] = c,
                    _ => {}
                }
            }
            let text: String = format!("it is {}", chars.iter().collect::<String>());
            for m in g.extract(&text, &|_| false, &[]) {
                let stored = m.value.to_string();
                let span = fold(&text[m.start..m.end]);
                prop_assert!(m.distance <= fuzzy_threshold(stored.chars().count()));
                prop_assert_eq!(m.distance, edit_distance(&span, &fold(&stored)));
                prop_assert!(store.distinct_values(&m.attribute).unwrap().contains(&m.value));
            }
        }
    }
}
