use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schema::{Attribute, AwarenessPrior, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AwarenessOutcome {
    Provided,
    Unknown,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AwarenessCounts {
    pub asked: u64,
    pub answered: u64,
    #[serde(flatten)]
    pub prior: AwarenessPrior,
}

impl AwarenessCounts {
    /// `(answered + pseudo_known + 1) / (asked + pseudo_asked + 2)`.
    pub fn p_known<F: Scalar>(&self) -> F {
        let known = self.answered + u64::from(self.prior.pseudo_known) + 1;
        let asked = self.asked + u64::from(self.prior.pseudo_asked) + 2;
        F::from_count(known) / F::from_count(asked)
    }
}

/// How likely users are to know each column when asked, learned globally
/// across sessions on top of the schema's annotation priors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AwarenessModel {
    columns: BTreeMap<Attribute, AwarenessCounts>,
}

#[derive(Serialize, Deserialize)]
struct AwarenessFile {
    version: u32,
    columns: BTreeMap<Attribute, AwarenessCounts>,
}

impl AwarenessModel {
    pub fn from_schema(schema: &Schema) -> Self {
        let mut m = AwarenessModel::default();
        m.sync_priors(schema);
        m
    }

    /// Takes priors from the schema annotations, keeping learned counts for
    /// columns that still exist and dropping the rest.
    pub fn sync_priors(&mut self, schema: &Schema) {
        let mut columns = BTreeMap::new();
        for attr in schema.attributes() {
            let prior = schema
                .column(&attr)
                .expect("listed attribute")
                .annotation
                .awareness_prior;
            let mut counts = self.columns.get(&attr).copied().unwrap_or_default();
            counts.prior = prior;
            columns.insert(attr, counts);
        }
        self.columns = columns;
    }

    pub fn counts(&self, attr: &Attribute) -> Option<&AwarenessCounts> {
        self.columns.get(attr)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Attribute, &AwarenessCounts)> {
        self.columns.iter()
    }

    /// Estimated probability that a user knows `attr`; 1/2 for columns the
    /// model has never seen.
    pub fn p_known<F: Scalar>(&self, attr: &Attribute) -> F {
        self.columns.get(attr).copied().unwrap_or_default().p_known()
    }

    pub fn update(&mut self, attr: &Attribute, outcome: AwarenessOutcome) -> Result<()> {
        let counts = self
            .columns
            .get_mut(attr)
            .ok_or_else(|| Error::UnknownColumn(attr.to_string()))?;
        counts.asked += 1;
        if outcome == AwarenessOutcome::Provided {
            counts.answered += 1;
        }
        Ok(())
    }

    /// Forgets learned counts, keeping priors.
    pub fn reset(&mut self) {
        for c in self.columns.values_mut() {
            c.asked = 0;
            c.answered = 0;
        }
    }

    pub fn to_json(&self) -> String {
        let file = AwarenessFile {
            version: 1,
            columns: self.columns.clone(),
        };
        serde_json::to_string_pretty(&file).expect("awareness serializes") + "\n"
    }

    pub fn from_json_str(source: &str, origin: &str, schema: &Schema) -> Result<Self> {
        let file: AwarenessFile = serde_json::from_str(source).map_err(|e| Error::json(origin, e))?;
        let mut errors = Vec::new();
        for (attr, counts) in &file.columns {
            if schema.column(attr).is_none() {
                errors.push(format!("awareness entry for unknown column `{attr}`"));
            }
            if counts.answered > counts.asked {
                errors.push(format!(
                    "`{attr}`: answered ({}) exceeds asked ({})",
                    counts.answered, counts.asked
                ));
            }
        }
        if !errors.is_empty() {
            return Err(Error::Validation(errors));
        }
        let mut m = AwarenessModel { columns: file.columns };
        m.sync_priors(schema);
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>, schema: &Schema) -> Result<Self> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&source, &path.display().to_string(), schema)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}
