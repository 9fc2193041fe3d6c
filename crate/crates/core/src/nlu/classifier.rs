use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::AnnotatedUtterance;
use crate::error::{Error, Result};
use crate::value::SemanticType;

use super::{training_tokens, NluConfig};

/// A trained intent classifier over placeholder-substituted tokens.
pub trait IntentClassifier: Debug + Send + Sync {
    /// The closed intent set, in a fixed order.
    fn intents(&self) -> &[String];
    /// Posterior over [`Self::intents`], aligned by index; sums to one.
    fn distribution(&self, tokens: &[String]) -> Vec<f64>;
    /// Whether a token was seen in training.
    fn knows(&self, token: &str) -> bool;
}

const MODEL_VERSION: u32 = 1;

/// Multinomial naive Bayes over unigrams and bigrams with additive smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    pub version: u32,
    pub config: NluConfig,
    pub intents: Vec<String>,
    /// Training utterances per intent (the priors).
    pub doc_counts: Vec<u64>,
    pub vocabulary: BTreeSet<String>,
    /// Feature counts per intent, aligned with `intents`.
    pub feature_counts: Vec<BTreeMap<String, u64>>,
    pub totals: Vec<u64>,
    /// Slot name to semantic type, used to pick placeholder tokens.
    pub slot_types: BTreeMap<String, SemanticType>,
}

/// Unigram features plus adjacent-pair features.
pub fn features(tokens: &[String], bigrams: bool) -> Vec<String> {
    let mut out = tokens.to_vec();
    if bigrams {
        out.extend(tokens.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    }
    out
}

impl NaiveBayes {
    pub fn train(
        corpus: &[AnnotatedUtterance],
        slot_types: &BTreeMap<String, SemanticType>,
        config: &NluConfig,
    ) -> Result<Self> {
        config.validate()?;
        let intents: Vec<String> = corpus
            .iter()
            .map(|u| u.intent.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if intents.len() < 2 {
            return Err(Error::InsufficientCorpus(format!(
                "{} utterances with {} distinct intents; at least two intents are needed",
                corpus.len(),
                intents.len()
            )));
        }
        let index: BTreeMap<String, usize> = intents.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let mut model = NaiveBayes {
            version: MODEL_VERSION,
            config: config.clone(),
            doc_counts: vec![0; intents.len()],
            vocabulary: BTreeSet::new(),
            feature_counts: vec![BTreeMap::new(); intents.len()],
            totals: vec![0; intents.len()],
            slot_types: slot_types.clone(),
            intents,
        };
        for u in corpus {
            let c = index[&u.intent];
            model.doc_counts[c] += 1;
            for f in features(&training_tokens(u, slot_types), config.bigrams) {
                *model.feature_counts[c].entry(f.clone()).or_insert(0) += 1;
                model.totals[c] += 1;
                model.vocabulary.insert(f);
            }
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json_str(source: &str, origin: &str) -> Result<Self> {
        let m: NaiveBayes = serde_json::from_str(source).map_err(|e| Error::json(origin, e))?;
        let n = m.intents.len();
        let mut errors = Vec::new();
        if m.version != MODEL_VERSION {
            errors.push(format!("unsupported model version {}", m.version));
        }
        if n < 2 {
            errors.push("a model needs at least two intents".to_string());
        }
        if m.doc_counts.len() != n || m.feature_counts.len() != n || m.totals.len() != n {
            errors.push("per-intent arrays must match the intent list".to_string());
        }
        if m.doc_counts.contains(&0) {
            errors.push("every intent needs at least one training utterance".to_string());
        }
        if let Err(Error::Validation(e)) = m.config.validate() {
            errors.extend(e);
        }
        if errors.is_empty() {
            Ok(m)
        } else {
            Err(Error::Validation(errors))
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&source, &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

impl IntentClassifier for NaiveBayes {
    fn intents(&self) -> &[String] {
        &self.intents
    }

    fn distribution(&self, tokens: &[String]) -> Vec<f64> {
        let alpha = self.config.smoothing;
        let v = self.vocabulary.len() as f64;
        let docs: u64 = self.doc_counts.iter().sum();
        let feats: Vec<String> = features(tokens, self.config.bigrams)
            .into_iter()
            .filter(|f| self.vocabulary.contains(f))
            .collect();
        let log: Vec<f64> = (0..self.intents.len())
            .map(|c| {
                let denom = (self.totals[c] as f64 + alpha * v).ln();
                let prior = (self.doc_counts[c] as f64 / docs as f64).ln();
                prior
                    + feats
                        .iter()
                        .map(|f| {
                            let n = self.feature_counts[c].get(f).copied().unwrap_or(0) as f64;
                            (n + alpha).ln() - denom
                        })
                        .sum::<f64>()
            })
            .collect();
        let max = log.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = log.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / z).collect()
    }

    fn knows(&self, token: &str) -> bool {
        self.vocabulary.contains(token)
    }
}
