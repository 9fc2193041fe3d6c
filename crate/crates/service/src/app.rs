//! Shared service state: project files, the live store, the agent and the
//! open sessions.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::NaiveDateTime;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use catforge::bench::BenchmarkReport;
use catforge::dialogue::{Agent, AgentResponse, DialogueState, TranscriptTurn};
use catforge::pipeline::{table_counts, PipelineStatus, Project, ProjectInputs, Stage};
use catforge::{AwarenessModel, ColumnAnnotation, Schema, Store};

use crate::ops::{self, BenchmarkRequest};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] catforge::Error),
    #[error("pipeline is busy: {0:?} in progress")]
    PipelineBusy(Stage),
    #[error("no session `{0}`")]
    SessionNotFound(String),
    #[error("no benchmark `{0}`")]
    BenchmarkNotFound(String),
}

pub type ServiceResult<T> = Result<T, ServiceError>;

#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    /// Fixed clock for the agent; the local time when absent.
    pub now: Option<NaiveDateTime>,
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationEntry {
    pub table: String,
    pub column: String,
    pub annotation: ColumnAnnotation,
}

#[derive(Debug, Clone, Serialize)]
pub struct StatusView {
    #[serde(flatten)]
    pub status: PipelineStatus,
    /// Whether chat endpoints accept sessions.
    pub agent_ready: bool,
    pub tables: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BenchmarkJob {
    Running,
    Done { report: BenchmarkReport },
    Failed { error: String },
}

#[derive(Debug, Default)]
struct Activity {
    running: Option<Stage>,
    last_error: Option<String>,
}

pub struct AppState {
    project: Project,
    options: ServeOptions,
    store: Arc<RwLock<Store>>,
    inputs: RwLock<ProjectInputs>,
    agent: RwLock<Arc<Agent>>,
    sessions: Mutex<HashMap<String, Arc<Mutex<DialogueState>>>>,
    next_session: AtomicU64,
    activity: Mutex<Activity>,
    benchmarks: Mutex<HashMap<String, BenchmarkJob>>,
    next_benchmark: AtomicU64,
}

impl AppState {
    pub fn open(project: Project, options: ServeOptions) -> ServiceResult<Arc<Self>> {
        let inputs = project.load_inputs()?;
        let store = Arc::new(RwLock::new(project.load_store(inputs.schema.clone())?));
        let agent = build_agent(&project, &options, &store, &inputs, None)?;
        Ok(Arc::new(AppState {
            project,
            options,
            store,
            inputs: RwLock::new(inputs),
            agent: RwLock::new(Arc::new(agent)),
            sessions: Mutex::new(HashMap::new()),
            next_session: AtomicU64::new(0),
            activity: Mutex::new(Activity::default()),
            benchmarks: Mutex::new(HashMap::new()),
            next_benchmark: AtomicU64::new(0),
        }))
    }

    pub fn project(&self) -> &Project {
        &self.project
    }

    pub fn options(&self) -> &ServeOptions {
        &self.options
    }

    pub fn agent(&self) -> Arc<Agent> {
        self.agent.read().clone()
    }

    /// Rebuilds the agent from the current inputs and model files, keeping
    /// what it has learned about user awareness.
    fn reload_agent(&self) -> ServiceResult<()> {
        let awareness = self.agent().awareness().clone();
        awareness.lock().sync_priors(&self.inputs.read().schema);
        let agent = build_agent(
            &self.project,
            &self.options,
            &self.store,
            &self.inputs.read(),
            Some(awareness),
        )?;
        *self.agent.write() = Arc::new(agent);
        Ok(())
    }

    pub fn create_session(&self) -> ServiceResult<String> {
        let mut state = self.agent().new_session()?;
        let id = format!("s{}", self.next_session.fetch_add(1, Ordering::Relaxed) + 1);
        state.session_id = id.clone();
        self.sessions.lock().insert(id.clone(), Arc::new(Mutex::new(state)));
        Ok(id)
    }

    fn session(&self, id: &str) -> ServiceResult<Arc<Mutex<DialogueState>>> {
        self.sessions
            .lock()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::SessionNotFound(id.to_string()))
    }

    pub fn message(&self, id: &str, text: &str) -> ServiceResult<AgentResponse> {
        let session = self.session(id)?;
        let agent = self.agent();
        if !agent.is_ready() {
            return Err(catforge::Error::AgentNotReady("models are not trained".into()).into());
        }
        let mut state = session.lock();
        Ok(agent.step(&mut state, text))
    }

    pub fn transcript(&self, id: &str) -> ServiceResult<Vec<TranscriptTurn>> {
        Ok(self.session(id)?.lock().transcript.clone())
    }

    pub fn schema(&self) -> Arc<Schema> {
        self.store.read().schema().clone()
    }

    pub fn annotations(&self) -> Vec<AnnotationEntry> {
        let schema = self.schema();
        schema
            .tables
            .iter()
            .flat_map(|t| {
                t.columns.iter().map(|c| AnnotationEntry {
                    table: t.name.clone(),
                    column: c.name.clone(),
                    annotation: c.annotation.clone(),
                })
            })
            .collect()
    }

    /// Applies all updates or none, persists the schema and swaps it into the
    /// running store and agent.
    pub fn set_annotations(&self, updates: &[AnnotationEntry]) -> ServiceResult<Vec<AnnotationEntry>> {
        let mut schema = (*self.schema()).clone();
        for u in updates {
            schema = schema.annotate(&u.table, &u.column, u.annotation.clone())?;
        }
        let schema = Arc::new(schema);
        self.project.save_schema(&schema)?;
        self.store.write().set_schema(schema.clone())?;
        self.inputs.write().schema = schema;
        self.reload_agent()?;
        Ok(self.annotations())
    }

    pub fn status(&self) -> StatusView {
        let mut status = self.project.status();
        let activity = self.activity.lock();
        if let Some(stage) = activity.running {
            status.stage = stage;
        }
        if activity.last_error.is_some() {
            status.last_error = activity.last_error.clone();
        }
        StatusView {
            status,
            agent_ready: self.agent().is_ready(),
            tables: table_counts(&self.store.read()),
        }
    }

    /// Marks `stage` as running, rejecting overlapping starts.
    pub fn begin_stage(&self, stage: Stage) -> ServiceResult<()> {
        let mut activity = self.activity.lock();
        if let Some(running) = activity.running {
            return Err(ServiceError::PipelineBusy(running));
        }
        activity.running = Some(stage);
        activity.last_error = None;
        Ok(())
    }

    /// Runs a stage started with [`Self::begin_stage`]. Blocking.
    pub fn run_stage(&self, stage: Stage) -> ServiceResult<()> {
        let result = match stage {
            Stage::Generating => ops::generate(&self.project).map(|_| ()).map_err(ServiceError::from),
            Stage::Training => ops::train(&self.project)
                .map_err(ServiceError::from)
                .and_then(|_| self.reload_agent()),
            Stage::Idle | Stage::Ready => Ok(()),
        };
        let mut activity = self.activity.lock();
        activity.running = None;
        activity.last_error = result.as_ref().err().map(|e| e.to_string());
        result
    }

    pub fn begin_benchmark(&self) -> String {
        let id = format!("b{}", self.next_benchmark.fetch_add(1, Ordering::Relaxed) + 1);
        self.benchmarks.lock().insert(id.clone(), BenchmarkJob::Running);
        id
    }

    /// Runs a benchmark registered with [`Self::begin_benchmark`]. Blocking.
    pub fn run_benchmark(&self, id: &str, req: &BenchmarkRequest) {
        let job = match ops::benchmark(Some(&self.project), req) {
            Ok(report) => BenchmarkJob::Done { report },
            Err(e) => BenchmarkJob::Failed { error: e.to_string() },
        };
        self.benchmarks.lock().insert(id.to_string(), job);
    }

    pub fn benchmark(&self, id: &str) -> ServiceResult<BenchmarkJob> {
        self.benchmarks
            .lock()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::BenchmarkNotFound(id.to_string()))
    }
}

fn build_agent(
    project: &Project,
    options: &ServeOptions,
    store: &Arc<RwLock<Store>>,
    inputs: &ProjectInputs,
    awareness: Option<Arc<Mutex<AwarenessModel>>>,
) -> catforge::Result<Agent> {
    let mut agent = project.build_agent(store.clone(), inputs)?;
    if let Some(now) = options.now {
        agent = agent.with_clock(Arc::new(move || now));
    }
    if let Some(a) = awareness {
        agent = agent.with_awareness(a);
    }
    Ok(agent)
}
