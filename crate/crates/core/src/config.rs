//! Project configuration, read from `catforge.toml`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{CorpusConfig, ProfileMix};
use crate::dialogue::AgentConfig;
use crate::error::{Error, Result};
use crate::nlu::NluConfig;
use crate::PolicyConfig;

pub const CONFIG_FILE: &str = "catforge.toml";

/// File locations, relative to the project directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub schema: PathBuf,
    pub tasks: PathBuf,
    pub templates: PathBuf,
    pub responses: PathBuf,
    pub lexicon: PathBuf,
    pub data_dir: PathBuf,
    pub artifacts_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            schema: "schema.json".into(),
            tasks: "tasks.json".into(),
            templates: "templates.json".into(),
            responses: "responses.json".into(),
            lexicon: "lexicon.txt".into(),
            data_dir: "data".into(),
            artifacts_dir: "artifacts".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelfPlayConfig {
    pub flows: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profiles: Option<ProfileMix>,
}

impl Default for SelfPlayConfig {
    fn default() -> Self {
        SelfPlayConfig {
            flows: 1000,
            seed: 11,
            profiles: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DialogueConfig {
    pub offer_factor: usize,
    pub max_chain: usize,
}

impl Default for DialogueConfig {
    fn default() -> Self {
        let a = AgentConfig::default();
        DialogueConfig {
            offer_factor: a.offer_factor,
            max_chain: a.max_chain,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub paths: PathsConfig,
    pub policy: PolicyConfig,
    pub corpus: CorpusConfig,
    pub nlu: NluConfig,
    pub selfplay: SelfPlayConfig,
    pub dialogue: DialogueConfig,
}

impl Config {
    pub fn from_toml_str(source: &str, origin: &str) -> Result<Self> {
        let config: Config = toml::from_str(source).map_err(|e| {
            let (line, column) = e.span().map(|s| line_col(source, s.start)).unwrap_or((0, 0));
            Error::Parse {
                path: origin.to_string(),
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&source, &path.display().to_string())
    }

    /// `<dir>/catforge.toml` if present, defaults otherwise.
    pub fn for_project(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(CONFIG_FILE);
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Config::default())
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        for r in [self.policy.validate(), self.nlu.validate()] {
            if let Err(Error::Validation(e)) = r {
                errors.extend(e);
            }
        }
        let s = &self.corpus.sampling;
        if s.integer_min > s.integer_max {
            errors.push(format!(
                "sampling: integer_min {} exceeds integer_max {}",
                s.integer_min, s.integer_max
            ));
        }
        if !(0.0..=1.0).contains(&s.number_word_rate) {
            errors.push(format!(
                "sampling: number_word_rate {} is not a probability",
                s.number_word_rate
            ));
        }
        if s.date_days < 1 {
            errors.push("sampling: date_days must be at least 1".into());
        }
        if self.corpus.n_per_template == 0 {
            errors.push("corpus: n_per_template must be at least 1".into());
        }
        if self.selfplay.flows == 0 {
            errors.push("selfplay: flows must be at least 1".into());
        }
        if self.dialogue.offer_factor == 0 || self.dialogue.max_chain == 0 {
            errors.push("dialogue: offer_factor and max_chain must be at least 1".into());
        }
        if let Some(mix) = &self.selfplay.profiles {
            if mix.profiles.is_empty() {
                errors.push("selfplay: profiles must not be empty".into());
            }
            for (w, p) in &mix.profiles {
                if !(*w >= 0.0 && w.is_finite()) {
                    errors.push(format!("selfplay: profile `{}` has invalid weight {w}", p.name));
                }
                if let Err(Error::Validation(e)) = p.validate() {
                    errors.extend(e);
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errors))
        }
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            policy: self.policy,
            offer_factor: self.dialogue.offer_factor,
            max_chain: self.dialogue.max_chain,
        }
    }

    pub fn profile_mix(&self) -> ProfileMix {
        self.selfplay.profiles.clone().unwrap_or_default()
    }
}

fn line_col(source: &str, offset: usize) -> (usize, usize) {
    let before = &source[..offset.min(source.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        assert_eq!(Config::from_toml_str(&c.to_toml(), "c").unwrap(), c);
        assert_eq!(Config::from_toml_str("", "c").unwrap(), c);
    }

    #[test]
    fn partial_file_overrides() {
        let c = Config::from_toml_str(
            "[policy]\nlist_threshold = 3\n\n[nlu]\nconfidence_floor = 0.5\n\n[corpus.sampling]\ninteger_max = 8\n",
            "c",
        )
        .unwrap();
        assert_eq!(c.policy.list_threshold, 3);
        assert_eq!(c.policy.max_join_depth, 2);
        assert_eq!(c.nlu.confidence_floor, 0.5);
        assert_eq!(c.corpus.sampling.integer_max, 8);
        assert_eq!(c.agent_config().policy.list_threshold, 3);
    }

    #[test]
    fn profile_mix_from_toml() {
        let c = Config::from_toml_str(
            "[selfplay]\nflows = 50\nprofiles = { profiles = [\n  [0.7, { name = \"calm\", p_abort = 0.0, p_overanswer = 0.5, p_change_mind = 0.0 }],\n  [0.3, { name = \"rushed\", p_abort = 0.8, p_overanswer = 0.0, p_change_mind = 0.0 }],\n] }\n",
            "c",
        )
        .unwrap();
        let mix = c.profile_mix();
        assert_eq!(mix.profiles.len(), 2);
        assert_eq!(mix.profiles[1].1.name, "rushed");
        assert!(Config::from_toml_str(
            "[selfplay]\nprofiles = { profiles = [[0.5, { name = \"x\", p_abort = 2.0, p_overanswer = 0.0, p_change_mind = 0.0 }]] }\n",
            "c"
        )
        .is_err());
    }

    #[test]
    fn invalid_values_are_reported() {
        let err =
            Config::from_toml_str("[policy]\ndepth_decay = 1.5\n[nlu]\nconfidence_floor = 2.0\n", "c").unwrap_err();
        match err {
            Error::Validation(v) => assert_eq!(v.len(), 2, "{v:?}"),
            e => panic!("{e}"),
        }
        assert!(matches!(
            Config::from_toml_str("[policy]\nlist_threshold = \"x\"\n", "c"),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
