//! Offline pipeline over a project directory: load schema, tasks and data,
//! generate training data, train the NLU and dialogue models, and assemble
//! the runtime agent.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{Local, NaiveDateTime};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::datagen::{
    derive_dm_policy, generate_corpus, load_templates, read_jsonl, simulate_dialogues, write_jsonl, AnnotatedUtterance,
    DialogueFlow, Lexicon,
};
use crate::dialogue::{Agent, DMPolicy, Responses};
use crate::error::{Error, Result};
use crate::nlu::{train_intent_classifier, NaiveBayes, Nlu};
use crate::schema::Schema;
use crate::store::Store;
use crate::tasks::{load_tasks, TaskDefinition};

pub const CORPUS_FILE: &str = "nlu.jsonl";
pub const FLOWS_FILE: &str = "flows.jsonl";
pub const NLU_MODEL_FILE: &str = "nlu_model.json";
pub const DM_POLICY_FILE: &str = "dm_policy.json";
pub const MANIFEST_FILE: &str = "pipeline.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Idle,
    Generating,
    Training,
    Ready,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineStatus {
    pub stage: Stage,
    pub utterances: usize,
    pub flows: usize,
    pub generated_at: Option<NaiveDateTime>,
    pub trained_at: Option<NaiveDateTime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

/// Persisted record of the last completed stages.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Manifest {
    utterances: usize,
    flows: usize,
    generated_at: Option<NaiveDateTime>,
    trained_at: Option<NaiveDateTime>,
}

/// Everything the pipeline reads from a project directory.
#[derive(Debug, Clone)]
pub struct ProjectInputs {
    pub schema: Arc<Schema>,
    pub tasks: Vec<TaskDefinition>,
    pub responses: Responses,
}

#[derive(Debug, Clone)]
pub struct Project {
    dir: PathBuf,
    config: Config,
}

/// Tables ordered so that every table follows the tables it references.
pub fn load_order(schema: &Schema) -> Vec<String> {
    let mut done: BTreeSet<&str> = BTreeSet::new();
    let mut order = Vec::new();
    while order.len() < schema.tables.len() {
        let before = order.len();
        for t in &schema.tables {
            if done.contains(t.name.as_str()) {
                continue;
            }
            let ready = schema
                .foreign_keys
                .iter()
                .filter(|fk| fk.child.table == t.name && fk.parent.table != t.name)
                .all(|fk| done.contains(fk.parent.table.as_str()));
            if ready {
                done.insert(&t.name);
                order.push(t.name.clone());
            }
        }
        if order.len() == before {
            // Reference cycle; keep declaration order for the rest.
            order.extend(
                schema
                    .tables
                    .iter()
                    .filter(|t| !done.contains(t.name.as_str()))
                    .map(|t| t.name.clone()),
            );
            break;
        }
    }
    order
}

/// Trains both models from generated data.
pub fn train_models(
    corpus: &[AnnotatedUtterance],
    flows: &[DialogueFlow],
    schema: &Schema,
    tasks: &[TaskDefinition],
    config: &Config,
) -> Result<(NaiveBayes, DMPolicy)> {
    let model = train_intent_classifier(corpus, schema, tasks, &config.nlu)?;
    let policy = derive_dm_policy(flows)?;
    Ok((model, policy))
}

impl Project {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let config = Config::for_project(&dir)?;
        Ok(Project { dir, config })
    }

    pub fn with_config(dir: impl AsRef<Path>, config: Config) -> Self {
        Project {
            dir: dir.as_ref().to_path_buf(),
            config,
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }

    pub fn schema_path(&self) -> PathBuf {
        self.resolve(&self.config.paths.schema)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.data_dir)
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.resolve(&self.config.paths.artifacts_dir).join(name)
    }

    pub fn load_inputs(&self) -> Result<ProjectInputs> {
        let schema = Schema::load(self.schema_path())?;
        let tasks = load_tasks(self.resolve(&self.config.paths.tasks), &schema)?;
        let responses = Responses::load(self.resolve(&self.config.paths.responses))?;
        Ok(ProjectInputs {
            schema: Arc::new(schema),
            tasks,
            responses,
        })
    }

    /// Loads `<data_dir>/<table>.csv` for every table that has one.
    pub fn load_store(&self, schema: Arc<Schema>) -> Result<Store> {
        let mut store = Store::new(schema.clone());
        let data = self.data_dir();
        for table in load_order(&schema) {
            let path = data.join(format!("{table}.csv"));
            if path.exists() {
                store.ingest_csv(&table, &path)?;
            }
        }
        Ok(store)
    }

    /// Ingests one CSV file into `table` and copies it into the data directory
    /// so later loads see it. Returns the number of rows added.
    pub fn ingest(&self, store: &mut Store, table: &str, csv: &Path) -> Result<usize> {
        let added = store.ingest_csv(table, csv)?;
        let dir = self.data_dir();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let all: Vec<_> = store.scan(table)?;
        crate::fixture::write_table_csv(store.schema(), table, &all, &dir.join(format!("{table}.csv")))?;
        Ok(added)
    }

    pub fn save_schema(&self, schema: &Schema) -> Result<()> {
        schema.save(self.schema_path())
    }

    /// Writes the utterance corpus and the self-play flows.
    pub fn generate(&self, store: &Store, tasks: &[TaskDefinition]) -> Result<(usize, usize)> {
        let templates = load_templates(self.resolve(&self.config.paths.templates), store.schema(), tasks)?;
        let lexicon_path = self.resolve(&self.config.paths.lexicon);
        let lexicon = if lexicon_path.exists() {
            Lexicon::load(&lexicon_path)?
        } else {
            Lexicon::default()
        };
        let corpus = generate_corpus(&templates, &lexicon, store, &self.config.corpus)?;
        let sp = &self.config.selfplay;
        let flows = simulate_dialogues(tasks, store, &self.config.profile_mix(), sp.flows, sp.seed)?;
        let dir = self.resolve(&self.config.paths.artifacts_dir);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_jsonl(self.artifact(CORPUS_FILE), &corpus)?;
        write_jsonl(self.artifact(FLOWS_FILE), &flows)?;
        let manifest = Manifest {
            utterances: corpus.len(),
            flows: flows.len(),
            generated_at: Some(Local::now().naive_local()),
            trained_at: None,
        };
        self.write_manifest(&manifest)?;
        Ok((corpus.len(), flows.len()))
    }

    /// Trains from the generated files and writes both model files.
    pub fn train(&self, schema: &Schema, tasks: &[TaskDefinition]) -> Result<(NaiveBayes, DMPolicy)> {
        let corpus: Vec<AnnotatedUtterance> = read_jsonl(self.artifact(CORPUS_FILE))?;
        let flows: Vec<DialogueFlow> = read_jsonl(self.artifact(FLOWS_FILE))?;
        let (model, policy) = train_models(&corpus, &flows, schema, tasks, &self.config)?;
        model.save(self.artifact(NLU_MODEL_FILE))?;
        policy.save(self.artifact(DM_POLICY_FILE))?;
        let mut manifest = self.read_manifest().unwrap_or_default();
        manifest.utterances = corpus.len();
        manifest.flows = flows.len();
        manifest.trained_at = Some(Local::now().naive_local());
        self.write_manifest(&manifest)?;
        Ok((model, policy))
    }

    /// The trained models, if both files exist and load.
    pub fn load_models(&self) -> Result<Option<(NaiveBayes, DMPolicy)>> {
        let (m, p) = (self.artifact(NLU_MODEL_FILE), self.artifact(DM_POLICY_FILE));
        if !m.exists() || !p.exists() {
            return Ok(None);
        }
        Ok(Some((NaiveBayes::load(m)?, DMPolicy::load(p)?)))
    }

    /// Status as recorded on disk: `ready` when both models load, else `idle`.
    pub fn status(&self) -> PipelineStatus {
        let manifest = self.read_manifest().unwrap_or_default();
        let (stage, last_error) = match self.load_models() {
            Ok(Some(_)) => (Stage::Ready, None),
            Ok(None) => (Stage::Idle, None),
            Err(e) => (Stage::Idle, Some(e.to_string())),
        };
        PipelineStatus {
            stage,
            utterances: manifest.utterances,
            flows: manifest.flows,
            generated_at: manifest.generated_at,
            trained_at: manifest.trained_at,
            last_error,
        }
    }

    /// Builds the agent over `store`, with models attached when trained.
    pub fn build_agent(&self, store: Arc<RwLock<Store>>, inputs: &ProjectInputs) -> Result<Agent> {
        let mut agent = Agent::new(
            store.clone(),
            inputs.tasks.clone(),
            inputs.responses.clone(),
            self.config.agent_config(),
        )?;
        if let Some((model, policy)) = self.load_models()? {
            let nlu = Nlu::new(
                model,
                inputs.tasks.clone(),
                &store.read(),
                self.config.policy.max_join_depth,
            )?;
            agent.set_models(Arc::new(nlu), Arc::new(policy));
        }
        Ok(agent)
    }

    fn read_manifest(&self) -> Option<Manifest> {
        let s = std::fs::read_to_string(self.artifact(MANIFEST_FILE)).ok()?;
        serde_json::from_str(&s).ok()
    }

    fn write_manifest(&self, m: &Manifest) -> Result<()> {
        let path = self.artifact(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(m).expect("serializable")).map_err(|e| Error::io(&path, e))
    }
}

/// Row counts per table, for status displays.
pub fn table_counts(store: &Store) -> BTreeMap<String, usize> {
    store
        .schema()
        .tables
        .iter()
        .map(|t| (t.name.clone(), store.row_count(&t.name).unwrap_or(0)))
        .collect()
}
