use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::NaiveDateTime;
use parking_lot::{Mutex, RwLock};
use serde::Serialize;

use crate::datagen::Actor;
use crate::error::{Error, Result};
use crate::nlu::{normalize_value, number_word, Nlu, NluResult, ParseContext, SlotMatch};
use crate::policy::{
    describe, requestable_for_table, summarize, AwarenessModel, AwarenessOutcome, CandidateSummary, PolicyDecision,
    SlotPolicy,
};
use crate::schema::Attribute;
use crate::store::{CandidateSet, Outcome, Predicate, Store, TransactionResult};
use crate::tasks::{SlotKind, TaskDefinition};
use crate::text::{fold, fuzzy_threshold, tokenize};
use crate::value::Value;
use crate::PolicyConfig;

use super::dm::{self, abstract_intent, decide_action, next_phase, ActionContext, DMPolicy, Phase};
use super::responses::Responses;

/// What the agent is waiting for from the user.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pending {
    Ask { slot: String, attribute: Attribute },
    Offer { slot: String, keys: Vec<Value> },
    Request { slot: String },
    Confirm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranscriptTurn {
    pub actor: Actor,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intent: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub slots: Vec<SlotMatch>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub actions: Vec<String>,
    /// Phase after the turn.
    pub phase: Phase,
    /// Internal cause of a clarification response, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// One conversation. Steps are applied serially by [`Agent::step`].
#[derive(Debug, Clone, Serialize)]
pub struct DialogueState {
    pub session_id: String,
    pub task: Option<String>,
    pub phase: Phase,
    pub filled: BTreeMap<String, Value>,
    /// Candidate sets per entity slot of the active task.
    #[serde(skip)]
    pub candidates: BTreeMap<String, CandidateSet>,
    /// Attributes already requested per entity slot in this identification.
    pub asked: BTreeMap<String, BTreeSet<Attribute>>,
    pub pending: Option<Pending>,
    /// Last dialogue-level user intent of the task episode.
    pub last_user: Option<String>,
    pub confirm_pending: bool,
    #[serde(skip)]
    pub result: Option<TransactionResult>,
    pub transcript: Vec<TranscriptTurn>,
}

impl DialogueState {
    fn new(session_id: String) -> Self {
        DialogueState {
            session_id,
            task: None,
            phase: Phase::Idle,
            filled: BTreeMap::new(),
            candidates: BTreeMap::new(),
            asked: BTreeMap::new(),
            pending: None,
            last_user: None,
            confirm_pending: false,
            result: None,
            transcript: Vec::new(),
        }
    }

    /// Candidate set of the slot being identified, if any.
    pub fn active_candidates(&self) -> Option<&CandidateSet> {
        match &self.phase {
            Phase::Identifying(slot) => self.candidates.get(slot),
            _ => None,
        }
    }

    pub fn candidate_counts(&self) -> BTreeMap<String, usize> {
        self.candidates.iter().map(|(k, c)| (k.clone(), c.len())).collect()
    }

    fn reset_task(&mut self) {
        self.task = None;
        self.phase = Phase::Idle;
        self.filled.clear();
        self.candidates.clear();
        self.asked.clear();
        self.pending = None;
        self.last_user = None;
        self.confirm_pending = false;
        self.result = None;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentResponse {
    /// The last action taken in this turn.
    pub action: String,
    pub actions: Vec<String>,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<CandidateSummary>>,
    /// Present exactly when `action` is `inform_result`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transaction: Option<TransactionResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub policy: PolicyConfig,
    /// When no attribute can narrow the candidates any further, up to
    /// `list_threshold × offer_factor` of them are still offered as a list.
    pub offer_factor: usize,
    /// Bound on bot actions chained within one turn.
    pub max_chain: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            policy: PolicyConfig::default(),
            offer_factor: 3,
            max_chain: 12,
        }
    }
}

pub type Clock = Arc<dyn Fn() -> NaiveDateTime + Send + Sync>;

#[derive(Default)]
struct Out {
    actions: Vec<String>,
    texts: Vec<String>,
    choices: Option<Vec<CandidateSummary>>,
    transaction: Option<TransactionResult>,
    note: Option<String>,
}

impl Out {
    fn push(&mut self, action: impl Into<String>, text: String) {
        self.actions.push(action.into());
        if !text.is_empty() {
            self.texts.push(text);
        }
    }

    fn note(&mut self, msg: impl fmt::Display) {
        let msg = msg.to_string();
        self.note = Some(match self.note.take() {
            Some(prev) => format!("{prev}; {msg}"),
            None => msg,
        });
    }
}

enum AbortReason {
    User,
    NoMatch(String),
    IdentificationFailed(String),
}

/// The runtime agent: NLU, DM policy and slot policy over a shared store.
pub struct Agent {
    store: Arc<RwLock<Store>>,
    tasks: Vec<TaskDefinition>,
    responses: Responses,
    nlu: Option<Arc<Nlu>>,
    dm: Option<Arc<DMPolicy>>,
    slot_policy: SlotPolicy,
    awareness: Arc<Mutex<AwarenessModel>>,
    config: AgentConfig,
    clock: Clock,
    sessions: AtomicU64,
}

impl fmt::Debug for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Agent")
            .field("tasks", &self.tasks.len())
            .field("ready", &self.is_ready())
            .field("config", &self.config)
            .finish()
    }
}

impl Agent {
    pub fn new(
        store: Arc<RwLock<Store>>,
        tasks: Vec<TaskDefinition>,
        responses: Responses,
        config: AgentConfig,
    ) -> Result<Self> {
        config.policy.validate()?;
        let awareness = AwarenessModel::from_schema(store.read().schema());
        Ok(Agent {
            store,
            tasks,
            responses,
            nlu: None,
            dm: None,
            slot_policy: SlotPolicy::new(config.policy),
            awareness: Arc::new(Mutex::new(awareness)),
            config,
            clock: Arc::new(|| chrono::Local::now().naive_local()),
            sessions: AtomicU64::new(0),
        })
    }

    pub fn with_models(mut self, nlu: Arc<Nlu>, dm: Arc<DMPolicy>) -> Self {
        self.nlu = Some(nlu);
        self.dm = Some(dm);
        self
    }

    pub fn set_models(&mut self, nlu: Arc<Nlu>, dm: Arc<DMPolicy>) {
        self.nlu = Some(nlu);
        self.dm = Some(dm);
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_awareness(mut self, awareness: Arc<Mutex<AwarenessModel>>) -> Self {
        self.awareness = awareness;
        self
    }

    pub fn is_ready(&self) -> bool {
        self.nlu.is_some() && self.dm.is_some()
    }

    pub fn store(&self) -> &Arc<RwLock<Store>> {
        &self.store
    }

    pub fn tasks(&self) -> &[TaskDefinition] {
        &self.tasks
    }

    pub fn nlu(&self) -> Option<&Arc<Nlu>> {
        self.nlu.as_ref()
    }

    pub fn dm_policy(&self) -> Option<&Arc<DMPolicy>> {
        self.dm.as_ref()
    }

    pub fn slot_policy(&self) -> &SlotPolicy {
        &self.slot_policy
    }

    pub fn awareness(&self) -> &Arc<Mutex<AwarenessModel>> {
        &self.awareness
    }

    pub fn responses(&self) -> &Responses {
        &self.responses
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn now(&self) -> NaiveDateTime {
        (self.clock)()
    }

    pub fn new_session(&self) -> Result<DialogueState> {
        if self.nlu.is_none() {
            return Err(Error::AgentNotReady("no NLU model loaded".into()));
        }
        if self.dm.is_none() {
            return Err(Error::AgentNotReady("no dialogue policy loaded".into()));
        }
        let n = self.sessions.fetch_add(1, Ordering::Relaxed) + 1;
        Ok(DialogueState::new(format!("s{n}")))
    }

    /// Renders the response template for `key`.
    pub fn render_response(&self, key: &str, params: &[(&str, String)]) -> Result<String> {
        self.responses.render(key, params)
    }

    /// Processes one user utterance. Internal failures become clarification
    /// responses with the cause recorded in the transcript.
    pub fn step(&self, state: &mut DialogueState, text: &str) -> AgentResponse {
        let mut out = Out::default();
        let parsed = match &self.nlu {
            Some(nlu) => {
                let store = self.store.read();
                if let Err(e) = nlu.refresh(&store) {
                    out.note(format!("gazetteer rebuild failed: {e}"));
                }
                let (expected_slot, expected_attribute) = match &state.pending {
                    Some(Pending::Ask { attribute, .. }) => (Some(attribute.slot_name()), Some(attribute.clone())),
                    Some(Pending::Request { slot }) => (Some(slot.clone()), None),
                    _ => (None, None),
                };
                let ctx = ParseContext {
                    today: self.now().date(),
                    active_task: state.task.clone(),
                    expected_slot,
                    expected_attribute,
                };
                nlu.parse(text, &ctx)
            }
            None => {
                out.note("agent not ready");
                NluResult {
                    intent: dm::FALLBACK.into(),
                    confidence: 0.0,
                    slots: Vec::new(),
                }
            }
        };
        if self.dm.is_some() && self.nlu.is_some() {
            self.handle(state, text, &parsed, &mut out);
        } else {
            self.say(&mut out, dm::FALLBACK, dm::FALLBACK, &[]);
        }
        if out.actions.is_empty() {
            self.say(&mut out, dm::FALLBACK, dm::FALLBACK, &[]);
        }
        let response = AgentResponse {
            action: out.actions.last().cloned().unwrap_or_default(),
            actions: out.actions.clone(),
            text: out.texts.join(" "),
            choices: out.choices.clone(),
            transaction: out.transaction.clone(),
        };
        state.transcript.push(TranscriptTurn {
            actor: Actor::User,
            text: text.to_string(),
            intent: Some(parsed.intent.clone()),
            confidence: Some(parsed.confidence),
            slots: parsed.slots,
            actions: Vec::new(),
            phase: state.phase.clone(),
            note: None,
        });
        state.transcript.push(TranscriptTurn {
            actor: Actor::Bot,
            text: response.text.clone(),
            intent: None,
            confidence: None,
            slots: Vec::new(),
            actions: response.actions.clone(),
            phase: state.phase.clone(),
            note: out.note,
        });
        response
    }

    fn say(&self, out: &mut Out, action: &str, key: &str, params: &[(&str, String)]) {
        let text = match self.responses.render(key, params) {
            Ok(t) => t,
            Err(e) => {
                out.note(&e);
                self.responses
                    .render(dm::FALLBACK, &[])
                    .unwrap_or_else(|_| "Sorry, something went wrong.".to_string())
            }
        };
        out.push(action, text);
    }

    fn task_def(&self, name: &str) -> Option<&TaskDefinition> {
        self.tasks.iter().find(|t| t.name == name)
    }

    fn handle(&self, state: &mut DialogueState, text: &str, r: &NluResult, out: &mut Out) {
        let intent = r.intent.as_str();
        let pending = state.pending.take();
        state.confirm_pending = false;

        if intent == dm::ABORT || intent == dm::BYE {
            if state.task.is_some() {
                state.last_user = Some(intent.to_string());
                return self.run(state, out);
            }
            let key = if intent == dm::BYE { dm::BYE } else { "nothing_to_abort" };
            return self.say(out, key, key, &[]);
        }

        // A request for the task already running is treated as an answer to
        // whatever is pending.
        let requested = self
            .tasks
            .iter()
            .find(|t| t.request_intent() == intent && state.task.as_deref() != Some(t.name.as_str()));
        if let Some(task) = requested {
            if state.task.is_some() {
                self.abort(state, out, AbortReason::User);
            }
            state.task = Some(task.name.clone());
            state.last_user = Some(intent.to_string());
            self.consume(state, &r.slots, None, out);
            return self.run(state, out);
        }

        let Some(task_name) = state.task.clone() else {
            return if intent == dm::GREET {
                self.say(out, dm::GREET, dm::GREET, &[])
            } else {
                self.say(out, dm::FALLBACK, dm::FALLBACK, &[])
            };
        };
        let task = self.task_def(&task_name).expect("active task is defined").clone();

        match pending {
            Some(Pending::Offer { slot, keys }) => {
                if let Some(i) = parse_choice(text, keys.len()) {
                    state.filled.insert(slot, keys[i].clone());
                    return self.run(state, out);
                }
                if self.consume(state, &r.slots, None, out) {
                    return self.run(state, out);
                }
                if intent == dm::UNKNOWN_VALUE || intent == dm::DENY {
                    let table = task
                        .slot(&slot)
                        .and_then(|s| s.entity_table())
                        .unwrap_or_default()
                        .to_string();
                    return self.abort(state, out, AbortReason::IdentificationFailed(table));
                }
                state.pending = Some(Pending::Offer { slot, keys });
                self.say(out, "invalid_choice", "invalid_choice", &[]);
            }
            Some(Pending::Confirm) => {
                state.confirm_pending = true;
                if self.consume(state, &r.slots, None, out) {
                    state.last_user = Some(dm::INFORM.to_string());
                } else if intent == dm::AFFIRM || intent == dm::DENY {
                    state.last_user = Some(intent.to_string());
                } else {
                    self.say(out, dm::FALLBACK, dm::FALLBACK, &[]);
                }
                self.run(state, out);
            }
            Some(Pending::Ask { slot, attribute }) => {
                let answered = self.consume(state, &r.slots, Some((&slot, &attribute)), out);
                if !answered && intent == dm::UNKNOWN_VALUE {
                    if let Err(e) = self.awareness.lock().update(&attribute, AwarenessOutcome::Unknown) {
                        out.note(e);
                    }
                    self.say(out, "unknown_noted", "unknown_noted", &[]);
                } else if !answered {
                    state.pending = Some(Pending::Ask { slot, attribute });
                    return self.reprompt(state, out, intent);
                }
                self.run(state, out);
            }
            Some(Pending::Request { slot }) => {
                if self.consume(state, &r.slots, None, out) {
                    return self.run(state, out);
                }
                if intent == dm::UNKNOWN_VALUE {
                    self.say(out, "unknown_noted", "unknown_noted", &[]);
                    return self.run(state, out);
                }
                state.pending = Some(Pending::Request { slot });
                self.reprompt(state, out, intent)
            }
            None => {
                self.consume(state, &r.slots, None, out);
                if intent == dm::GREET {
                    self.say(out, dm::GREET, "greet_in_task", &[]);
                }
                self.run(state, out);
            }
        }
    }

    /// Repeats the pending question after an utterance that did not answer it.
    fn reprompt(&self, state: &mut DialogueState, out: &mut Out, intent: &str) {
        if intent == dm::GREET {
            self.say(out, dm::GREET, "greet_in_task", &[]);
        } else {
            self.say(out, dm::FALLBACK, dm::FALLBACK, &[]);
        }
        match state.pending.clone() {
            Some(Pending::Ask { attribute, .. }) => {
                let text = self.ask_text(&attribute, out);
                out.texts.push(text);
            }
            Some(Pending::Request { slot }) => {
                let text = self.request_text(&slot, out);
                out.texts.push(text);
            }
            _ => {}
        }
    }

    fn ask_text(&self, attribute: &Attribute, out: &mut Out) -> String {
        let display = self
            .store
            .read()
            .schema()
            .column(attribute)
            .map(|c| c.display_name())
            .unwrap_or_else(|| attribute.column.replace('_', " "));
        self.responses
            .render_either(&format!("ask({attribute})"), "ask", &[("attribute", display)])
            .unwrap_or_else(|e| {
                out.note(&e);
                format!("What is the {}?", attribute.column.replace('_', " "))
            })
    }

    fn request_text(&self, slot: &str, out: &mut Out) -> String {
        self.responses
            .render_either(
                &dm::request_slot_action(slot),
                "request_slot",
                &[("slot", slot.replace('_', " "))],
            )
            .unwrap_or_else(|e| {
                out.note(&e);
                format!("What is the {}?", slot.replace('_', " "))
            })
    }

    fn phase_of(&self, task: &TaskDefinition, state: &DialogueState) -> Phase {
        if state.result.is_some() {
            return Phase::Done;
        }
        next_phase(
            task,
            |s| state.filled.contains_key(s),
            |s| state.candidates.get(s).is_some_and(|c| !c.predicates().is_empty()),
        )
    }

    /// Chains bot actions chosen by the DM policy until one needs user input.
    fn run(&self, state: &mut DialogueState, out: &mut Out) {
        let dm = self.dm.clone().expect("checked by step");
        for _ in 0..self.config.max_chain {
            let Some(task) = state.task.as_deref().and_then(|t| self.task_def(t)).cloned() else {
                return;
            };
            let phase = self.phase_of(&task, state);
            state.phase = phase.clone();
            let user = state.last_user.clone().unwrap_or_default();
            let ctx = ActionContext {
                task: &task,
                phase: &phase,
                user: abstract_intent(&user),
                confirm_pending: state.confirm_pending,
            };
            let action = decide_action(&dm, &ctx);
            match action.as_str() {
                dm::HANDLE_ABORT => return self.abort(state, out, AbortReason::User),
                dm::CONFIRM => {
                    let params = self.describe_params(&task, state);
                    self.say(
                        out,
                        dm::CONFIRM,
                        dm::CONFIRM,
                        &[("task", task.display_name()), ("params", params)],
                    );
                    state.pending = Some(Pending::Confirm);
                    return;
                }
                dm::REOPEN => {
                    let first = task
                        .slots
                        .iter()
                        .find(|s| s.required)
                        .map(|s| s.name.clone())
                        .unwrap_or_default();
                    state.filled.remove(&first);
                    state.candidates.remove(&first);
                    state.asked.remove(&first);
                    state.confirm_pending = false;
                    self.say(out, dm::REOPEN, dm::REOPEN, &[("slot", slot_display(&first))]);
                }
                dm::EXECUTE_TRANSACTION | dm::EXECUTE_QUERY => {
                    let result = {
                        let mut store = self.store.write();
                        store.execute_transaction(&task, &state.filled)
                    };
                    let result = result.unwrap_or_else(|e| {
                        out.note(&e);
                        TransactionResult::rejected(&task.name, e.to_string(), state.filled.clone())
                    });
                    out.actions.push(action.clone());
                    state.result = Some(result);
                }
                dm::INFORM_RESULT => {
                    let result = state.result.take().unwrap_or_else(|| {
                        TransactionResult::rejected(&task.name, "nothing was executed".into(), state.filled.clone())
                    });
                    self.inform_result(&task, state, &result, out);
                    out.transaction = Some(result);
                    state.reset_task();
                    return;
                }
                a => {
                    if let Some(slot) = a.strip_prefix("request_slot(").and_then(|s| s.strip_suffix(')')) {
                        let text = self.request_text(slot, out);
                        out.push(a, text);
                        state.pending = Some(Pending::Request { slot: slot.to_string() });
                        return;
                    }
                    if a.starts_with("identify_") {
                        let Phase::Identifying(slot) = phase else {
                            unreachable!("admissible")
                        };
                        if !self.identify(state, &task, &slot, out) {
                            return;
                        }
                        continue;
                    }
                    out.note(format!("unhandled action `{a}`"));
                    return self.say(out, dm::FALLBACK, dm::FALLBACK, &[]);
                }
            }
        }
        out.note("action chain limit reached");
        self.say(out, dm::FALLBACK, dm::FALLBACK, &[]);
    }

    /// One identification step; returns true if the slot got resolved and
    /// the chain may continue.
    fn identify(&self, state: &mut DialogueState, task: &TaskDefinition, slot: &str, out: &mut Out) -> bool {
        let table = task
            .slot(slot)
            .and_then(|s| s.entity_table())
            .unwrap_or_default()
            .to_string();
        let depth = self.config.policy.max_join_depth;
        let decision = {
            let store = self.store.read();
            if !state.candidates.contains_key(slot) {
                match store.open_candidates_with_depth(&table, depth) {
                    Ok(c) => {
                        state.candidates.insert(slot.to_string(), c);
                    }
                    Err(e) => {
                        out.note(&e);
                        drop(store);
                        self.abort(state, out, AbortReason::IdentificationFailed(table));
                        return false;
                    }
                }
            }
            let c = &state.candidates[slot];
            let excluded = state.asked.get(slot).cloned().unwrap_or_default();
            let awareness = self.awareness.lock();
            match self
                .slot_policy
                .next_request_excluding(&store, c, &awareness, &excluded)
            {
                Ok(PolicyDecision::Exhausted { remaining })
                    if remaining > 0 && remaining <= self.config.policy.list_threshold * self.config.offer_factor =>
                {
                    Ok(PolicyDecision::OfferList {
                        rows: summarize(&store, &table, c.row_ids().iter()),
                    })
                }
                d => d,
            }
        };
        match decision {
            Ok(PolicyDecision::Ask { attribute, .. }) => {
                state
                    .asked
                    .entry(slot.to_string())
                    .or_default()
                    .insert(attribute.clone());
                let text = self.ask_text(&attribute, out);
                out.push(format!("ask({attribute})"), text);
                state.pending = Some(Pending::Ask {
                    slot: slot.to_string(),
                    attribute,
                });
                false
            }
            Ok(PolicyDecision::OfferList { rows }) => {
                let choices = numbered(rows.iter().map(|r| r.label.clone()));
                self.say(
                    out,
                    "offer_list",
                    "offer_list",
                    &[
                        ("count", rows.len().to_string()),
                        ("entity", table.replace('_', " ")),
                        ("choices", choices),
                    ],
                );
                state.pending = Some(Pending::Offer {
                    slot: slot.to_string(),
                    keys: rows.iter().map(|r| r.key.clone()).collect(),
                });
                out.choices = Some(rows);
                false
            }
            Ok(PolicyDecision::Resolved { key }) => {
                let value = describe(&self.store.read(), &table, &key);
                self.say(
                    out,
                    "resolved",
                    "resolved",
                    &[("entity", table.replace('_', " ")), ("value", value)],
                );
                state.filled.insert(slot.to_string(), key);
                true
            }
            Ok(PolicyDecision::Exhausted { remaining: 0 }) => {
                self.abort(state, out, AbortReason::NoMatch(table));
                false
            }
            Ok(PolicyDecision::Exhausted { .. }) => {
                self.abort(state, out, AbortReason::IdentificationFailed(table));
                false
            }
            Err(e) => {
                out.note(&e);
                self.abort(state, out, AbortReason::IdentificationFailed(table));
                false
            }
        }
    }

    fn abort(&self, state: &mut DialogueState, out: &mut Out, reason: AbortReason) {
        let task = state
            .task
            .as_deref()
            .and_then(|t| self.task_def(t))
            .map(|t| t.display_name())
            .unwrap_or_default();
        match reason {
            AbortReason::User => {
                self.say(out, dm::HANDLE_ABORT, dm::HANDLE_ABORT, &[("task", task)]);
            }
            AbortReason::NoMatch(table) => {
                self.say(out, "no_match", "no_match", &[("entity", table.replace('_', " "))]);
                self.say(out, dm::HANDLE_ABORT, dm::HANDLE_ABORT, &[("task", task)]);
            }
            AbortReason::IdentificationFailed(table) => {
                self.say(
                    out,
                    "identification_failed",
                    "identification_failed",
                    &[("entity", table.replace('_', " ")), ("task", task)],
                );
                out.actions.push(dm::HANDLE_ABORT.to_string());
            }
        }
        state.reset_task();
    }

    /// Applies extracted slots: task scalars are filled (overwriting earlier
    /// values), attribute values refine the candidate set of the entity slot
    /// that reaches the attribute most directly. A value for an attribute
    /// that was already constrained, or for an entity that was already
    /// resolved, rebuilds that candidate set from scratch. Returns whether
    /// anything changed.
    fn consume(
        &self,
        state: &mut DialogueState,
        slots: &[SlotMatch],
        asked: Option<(&str, &Attribute)>,
        out: &mut Out,
    ) -> bool {
        let Some(task) = state.task.as_deref().and_then(|t| self.task_def(t)).cloned() else {
            return false;
        };
        let store = self.store.read();
        let schema = store.schema().clone();
        let depth = self.config.policy.max_join_depth;
        let mut changed = false;
        for m in slots {
            if let Some(spec) = task.slot(&m.slot) {
                if let SlotKind::Scalar(ty) = spec.kind {
                    let value = if m.value.semantic_type() == ty {
                        Ok(m.value.clone())
                    } else {
                        normalize_value(&m.raw, ty, self.now().date())
                    };
                    match value {
                        Ok(v) => {
                            if state.filled.get(&m.slot) != Some(&v) {
                                state.filled.insert(m.slot.clone(), v);
                                changed = true;
                            }
                        }
                        Err(e) => out.note(e),
                    }
                }
                continue;
            }
            let attr = m
                .attribute
                .clone()
                .or_else(|| schema.attributes().find(|a| a.slot_name() == m.slot));
            let Some(attr) = attr else { continue };
            let focus = match &state.phase {
                Phase::Identifying(s) => Some(s.as_str()),
                _ => None,
            };
            let mut best: Option<(usize, bool, usize, &str, &str)> = None;
            for (i, s) in task.slots.iter().enumerate() {
                let Some(table) = s.entity_table() else { continue };
                let Some(d) = requestable_for_table(&store, table, depth)
                    .into_iter()
                    .find(|(a, _)| *a == attr)
                    .map(|(_, d)| d)
                else {
                    continue;
                };
                let rank = (d, focus != Some(s.name.as_str()), i, s.name.as_str(), table);
                if best.is_none_or(|b| (rank.0, rank.1, rank.2) < (b.0, b.1, b.2)) {
                    best = Some(rank);
                }
            }
            let Some((_, _, _, slot, table)) = best else { continue };
            let predicate = if m.distance > 0 {
                Predicate::fuzzy(
                    attr.clone(),
                    m.raw.clone(),
                    fuzzy_threshold(m.value.to_string().chars().count()),
                )
            } else {
                Predicate::eq(attr.clone(), m.value.clone())
            };
            let existing = state.candidates.get(slot);
            let rebuild = state.filled.contains_key(slot)
                || existing.is_some_and(|c| c.predicates().iter().any(|p| p.attribute == attr));
            let refined = if rebuild {
                let keep: Vec<Predicate> = existing
                    .map(|c| c.predicates().iter().filter(|p| p.attribute != attr).cloned().collect())
                    .unwrap_or_default();
                store.open_candidates_with_depth(table, depth).and_then(|mut c| {
                    for p in keep.into_iter().chain([predicate]) {
                        c = store.refine(&c, p)?;
                    }
                    Ok(c)
                })
            } else {
                match existing {
                    Some(c) => store.refine(c, predicate),
                    None => store
                        .open_candidates_with_depth(table, depth)
                        .and_then(|c| store.refine(&c, predicate)),
                }
            };
            match refined {
                Ok(c) => {
                    if rebuild {
                        state.filled.remove(slot);
                    }
                    state.candidates.insert(slot.to_string(), c);
                    changed = true;
                    if asked.is_some_and(|(s, a)| s == slot && *a == attr) {
                        if let Err(e) = self.awareness.lock().update(&attr, AwarenessOutcome::Provided) {
                            out.note(e);
                        }
                    }
                }
                Err(e) => out.note(e),
            }
        }
        changed
    }

    fn describe_params(&self, task: &TaskDefinition, state: &DialogueState) -> String {
        let store = self.store.read();
        task.slots
            .iter()
            .filter_map(|s| {
                let v = state.filled.get(&s.name)?;
                let shown = match s.entity_table() {
                    Some(table) => describe(&store, table, v),
                    None => v.to_string(),
                };
                Some(format!("{}: {shown}", slot_display(&s.name)))
            })
            .collect::<Vec<_>>()
            .join("; ")
    }

    fn inform_result(&self, task: &TaskDefinition, state: &DialogueState, result: &TransactionResult, out: &mut Out) {
        match &result.outcome {
            Outcome::Rejected { reason } => self.say(
                out,
                dm::INFORM_RESULT,
                "inform_rejected",
                &[("task", task.display_name()), ("reason", reason.clone())],
            ),
            Outcome::Committed { .. } => match &result.listing {
                Some(listing) if listing.rows.is_empty() => {
                    self.say(out, dm::INFORM_RESULT, "inform_listing_empty", &[])
                }
                Some(listing) => {
                    let lines = listing.rows.iter().map(|row| {
                        row.iter()
                            .map(|v| v.as_ref().map(Value::to_string).unwrap_or_default())
                            .collect::<Vec<_>>()
                            .join(", ")
                    });
                    self.say(
                        out,
                        dm::INFORM_RESULT,
                        "inform_listing",
                        &[("choices", numbered(lines))],
                    )
                }
                None => {
                    let params = self.describe_params(task, state);
                    self.say(
                        out,
                        dm::INFORM_RESULT,
                        dm::INFORM_RESULT,
                        &[("task", task.display_name()), ("params", params)],
                    )
                }
            },
        }
    }
}

fn slot_display(slot: &str) -> String {
    slot.strip_suffix("_id").unwrap_or(slot).replace('_', " ")
}

fn numbered(lines: impl Iterator<Item = String>) -> String {
    lines
        .enumerate()
        .map(|(i, l)| format!("{}. {l}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

const ORDINALS: &[&str] = &[
    "first",
    "second",
    "third",
    "fourth",
    "fifth",
    "sixth",
    "seventh",
    "eighth",
    "ninth",
    "tenth",
    "eleventh",
    "twelfth",
    "thirteenth",
    "fourteenth",
    "fifteenth",
];

/// Zero-based index of a list choice: an ordinal ("the second one", "3rd",
/// "last") or, in a short reply, a bare number ("2", "number two").
pub fn parse_choice(text: &str, n: usize) -> Option<usize> {
    let tokens: Vec<String> = tokenize(text).into_iter().map(|(s, e)| fold(&text[s..e])).collect();
    let pick = |k: usize| (k >= 1 && k <= n).then(|| k - 1);
    for t in &tokens {
        if let Some(i) = ORDINALS.iter().position(|o| o == t) {
            return pick(i + 1);
        }
        if t == "last" {
            return n.checked_sub(1);
        }
        let digits = t.trim_end_matches(|c: char| c.is_ascii_alphabetic());
        if digits.len() < t.len() && !digits.is_empty() && ["st", "nd", "rd", "th"].contains(&&t[digits.len()..]) {
            return digits.parse().ok().and_then(pick);
        }
    }
    if tokens.len() <= 3 {
        for t in &tokens {
            let k = t.parse::<usize>().ok().or_else(|| number_word(t).map(|k| k as usize));
            if let Some(k) = k {
                return pick(k);
            }
        }
    }
    None
}
