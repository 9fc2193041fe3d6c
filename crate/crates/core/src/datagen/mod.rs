//! Training data synthesis: utterances from templates filled with database
//! values and paraphrased, and dialogue flows from self-play.

mod paraphrase;
mod selfplay;
mod templates;

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use paraphrase::{paraphrase, Lexicon};
pub use selfplay::{
    check_flow, derive_dm_policy, simulate_dialogues, state_action_counts, Actor, DialogueFlow, FlowMeta, FlowTurn,
    ProfileMix, UserProfile,
};
pub use templates::{
    expand_templates, intent_labels, load_templates, placeholders, segments, templates_from_json_str,
    validate_templates, Binding, DateFormat, SamplingConfig, Segment, UtteranceTemplate, NUMBER_WORDS, RELATIVE_DATES,
};

use crate::error::{Error, Result};
use crate::store::Store;

/// A slot value inside an utterance; `start..end` are character offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpan {
    pub slot: String,
    pub value: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedUtterance {
    pub text: String,
    pub intent: String,
    pub slots: Vec<SlotSpan>,
}

impl AnnotatedUtterance {
    /// The text covered by a span.
    pub fn span_text(&self, s: &SlotSpan) -> String {
        self.text
            .chars()
            .skip(s.start)
            .take(s.end.saturating_sub(s.start))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub n_per_template: usize,
    pub paraphrases_per_template: usize,
    pub seed: u64,
    pub sampling: SamplingConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_per_template: 10,
            paraphrases_per_template: 8,
            seed: 7,
            sampling: SamplingConfig::default(),
        }
    }
}

/// Paraphrases every template, then fills the originals and their variants.
pub fn generate_corpus(
    templates: &[UtteranceTemplate],
    lexicon: &Lexicon,
    store: &Store,
    cfg: &CorpusConfig,
) -> Result<Vec<AnnotatedUtterance>> {
    let mut all = Vec::new();
    for (i, t) in templates.iter().enumerate() {
        all.push(t.clone());
        all.extend(paraphrase(
            t,
            lexicon,
            cfg.paraphrases_per_template,
            cfg.seed.wrapping_add(i as u64),
        ));
    }
    expand_templates(&all, store, cfg.n_per_template, cfg.seed, &cfg.sampling)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).expect("serializable");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}
