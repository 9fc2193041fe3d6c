use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::templates::{segments, Segment, UtteranceTemplate};

/// Synonym groups: phrases within a group may replace one another.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    pub groups: Vec<Vec<String>>,
}

impl Lexicon {
    /// One group per line, phrases separated by commas. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn parse(source: &str) -> Result<Self> {
        let mut groups = Vec::new();
        let mut errors = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let group: Vec<String> = line
                .split(',')
                .map(|p| p.trim().to_lowercase())
                .filter(|p| !p.is_empty())
                .collect();
            if group.len() < 2 {
                errors.push(format!("line {}: a synonym group needs at least two phrases", i + 1));
            } else {
                groups.push(group);
            }
        }
        if errors.is_empty() {
            Ok(Lexicon { groups })
        } else {
            Err(Error::Validation(errors))
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&source)
    }
}

/// Declarative/desiderative rewrites applied to literal text.
const REWRITES: &[(&str, &str)] = &[
    ("i need", "i would like"),
    ("i want to", "i would like to"),
    ("i want", "i would like"),
    ("i would like", "i want"),
    ("can i", "could i"),
    ("i can not", "i cannot"),
    ("what is", "what's"),
    ("my name is", "i am"),
    ("the movie title is", "the title is"),
];

const PREFIXES: &[&str] = &["Hi, ", "Hello, ", "Excuse me, "];
const SUFFIXES: &[&str] = &[", please", " please", ", thanks"];

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

/// Byte offset of `phrase` in `text` at word boundaries, ignoring ASCII case.
fn find_phrase(text: &str, phrase: &str) -> Option<usize> {
    let lower = text.to_ascii_lowercase();
    let mut from = 0;
    while let Some(pos) = lower[from..].find(phrase) {
        let start = from + pos;
        let end = start + phrase.len();
        let before = lower[..start].chars().next_back();
        let after = lower[end..].chars().next();
        if !before.is_some_and(is_word_char) && !after.is_some_and(is_word_char) {
            return Some(start);
        }
        from = start + 1;
    }
    None
}

/// Replaces the first occurrence of `from` outside placeholders, keeping an
/// initial capital.
fn substitute(segs: &[Segment], from: &str, to: &str) -> Option<Vec<Segment>> {
    for (i, seg) in segs.iter().enumerate() {
        let Segment::Literal(l) = seg else { continue };
        let Some(pos) = find_phrase(l, from) else { continue };
        let original = &l[pos..pos + from.len()];
        let mut replacement = to
            .split(' ')
            .map(|w| {
                if w == "i" || w.starts_with("i'") {
                    capitalize(w)
                } else {
                    w.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join(" ");
        if original.starts_with(|c: char| c.is_uppercase()) {
            replacement = capitalize(&replacement);
        }
        let mut out = segs.to_vec();
        out[i] = Segment::Literal(format!("{}{}{}", &l[..pos], replacement, &l[pos + from.len()..]));
        return Some(out);
    }
    None
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn join(segs: &[Segment]) -> String {
    segs.iter()
        .map(|s| match s {
            Segment::Literal(l) => l.clone(),
            Segment::Placeholder(p) => format!("{{{p}}}"),
        })
        .collect()
}

fn with_prefix(text: &str, prefix: &str) -> String {
    let keep_case = text.starts_with('{') || text.starts_with("I ") || text.starts_with("I'");
    let body = if keep_case {
        text.to_string()
    } else {
        let mut c = text.chars();
        c.next()
            .map(|f| f.to_lowercase().chain(c).collect())
            .unwrap_or_default()
    };
    format!("{prefix}{body}")
}

fn with_suffix(text: &str, suffix: &str) -> String {
    format!("{}{suffix}", text.trim_end_matches(['.', '!', '?']))
}

/// Up to `k` distinct rule-based variants of a template. Placeholders and the
/// intent are preserved verbatim; the template itself is not among the
/// variants.
pub fn paraphrase(template: &UtteranceTemplate, lexicon: &Lexicon, k: usize, seed: u64) -> Vec<UtteranceTemplate> {
    let base = segments(&template.text);
    let mut rewritten = vec![base.clone()];
    for (from, to) in REWRITES {
        if let Some(v) = substitute(&base, from, to) {
            rewritten.push(v);
        }
    }
    let mut bodies = Vec::new();
    for r in &rewritten {
        bodies.push(r.clone());
        for group in &lexicon.groups {
            for from in group {
                for to in group.iter().filter(|t| *t != from) {
                    if let Some(v) = substitute(r, from, to) {
                        bodies.push(v);
                    }
                }
            }
        }
    }
    let mut seen = HashSet::from([template.text.clone()]);
    let mut variants = Vec::new();
    for body in bodies {
        let body = join(&body);
        let mut forms = vec![body.clone()];
        forms.extend(PREFIXES.iter().map(|p| with_prefix(&body, p)));
        forms.extend(SUFFIXES.iter().map(|s| with_suffix(&body, s)));
        for p in PREFIXES {
            forms.extend(SUFFIXES.iter().map(|s| with_suffix(&with_prefix(&body, p), s)));
        }
        for f in forms {
            if seen.insert(f.clone()) {
                variants.push(f);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    variants.shuffle(&mut rng);
    variants.truncate(k);
    variants
        .into_iter()
        .map(|text| UtteranceTemplate {
            text,
            intent: template.intent.clone(),
            bindings: template.bindings.clone(),
        })
        .collect()
}
