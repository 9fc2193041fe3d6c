//! High-level dialogue management: phases, abstract state keys and the
//! majority-vote next-action policy derived from self-play flows.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::tasks::{SlotKind, TaskDefinition};

pub const HANDLE_ABORT: &str = "handle_abort";
pub const CONFIRM: &str = "confirm";
pub const REOPEN: &str = "reopen";
pub const EXECUTE_TRANSACTION: &str = "execute_transaction";
pub const EXECUTE_QUERY: &str = "execute_query";
pub const INFORM_RESULT: &str = "inform_result";

pub const AFFIRM: &str = "affirm";
pub const DENY: &str = "deny";
pub const ABORT: &str = "abort";
pub const UNKNOWN_VALUE: &str = "unknown_value";
pub const GREET: &str = "greet";
pub const BYE: &str = "bye";
pub const INFORM: &str = "inform";
pub const FALLBACK: &str = "fallback";

pub fn identify_action(table: &str) -> String {
    format!("identify_{table}")
}

pub fn request_slot_action(slot: &str) -> String {
    format!("request_slot({slot})")
}

pub fn inform_intent(slot: &str) -> String {
    format!("inform({slot})")
}

/// Slot name of an `inform(<slot>)` intent.
pub fn informed_slot(intent: &str) -> Option<&str> {
    intent.strip_prefix("inform(")?.strip_suffix(')')
}

/// User intent as it appears in state keys: every `inform(...)` becomes `inform`.
pub fn abstract_intent(intent: &str) -> &str {
    if informed_slot(intent).is_some() {
        INFORM
    } else {
        intent
    }
}

/// Where a task stands: which slot is being worked on, or confirmation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Phase {
    #[default]
    Idle,
    Identifying(String),
    Filling(String),
    Confirming,
    Done,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Idle => f.write_str("idle"),
            Phase::Identifying(s) => write!(f, "identifying({s})"),
            Phase::Filling(s) => write!(f, "filling({s})"),
            Phase::Confirming => f.write_str("confirming"),
            Phase::Done => f.write_str("done"),
        }
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let arg = |prefix: &str| {
            s.strip_prefix(prefix)
                .and_then(|r| r.strip_suffix(')'))
                .map(str::to_string)
        };
        match s {
            "idle" => Ok(Phase::Idle),
            "confirming" => Ok(Phase::Confirming),
            "done" => Ok(Phase::Done),
            _ => {
                if let Some(slot) = arg("identifying(") {
                    Ok(Phase::Identifying(slot))
                } else if let Some(slot) = arg("filling(") {
                    Ok(Phase::Filling(slot))
                } else {
                    Err(Error::InvalidArgument(format!("unknown phase `{s}`")))
                }
            }
        }
    }
}

impl Serialize for Phase {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Phase {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The phase a task is in given which slots are filled. Required slots are
/// handled in declaration order, except that an unfilled entity slot which
/// already has identifying information is taken up first.
pub fn next_phase(
    task: &TaskDefinition,
    filled: impl Fn(&str) -> bool,
    has_predicates: impl Fn(&str) -> bool,
) -> Phase {
    let open: Vec<_> = task.slots.iter().filter(|s| s.required && !filled(&s.name)).collect();
    let focus = open
        .iter()
        .find(|s| matches!(s.kind, SlotKind::Entity(_)) && has_predicates(&s.name))
        .or(open.first());
    match focus {
        Some(s) => match s.kind {
            SlotKind::Entity(_) => Phase::Identifying(s.name.clone()),
            SlotKind::Scalar(_) => Phase::Filling(s.name.clone()),
        },
        None => Phase::Confirming,
    }
}

/// Abstract dialogue state the DM policy is keyed by.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey {
    pub task: String,
    pub phase: Phase,
    /// Last dialogue-level user intent, abstracted by [`abstract_intent`].
    pub user: String,
}

impl StateKey {
    pub fn new(task: &str, phase: &Phase, user_intent: &str) -> Self {
        StateKey {
            task: task.to_string(),
            phase: phase.clone(),
            user: abstract_intent(user_intent).to_string(),
        }
    }
}

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}|{}", self.task, self.phase, self.user)
    }
}

impl FromStr for StateKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('|').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "state key `{s}` must be task|phase|intent"
            )));
        }
        Ok(StateKey {
            task: parts[0].to_string(),
            phase: parts[1].parse()?,
            user: parts[2].to_string(),
        })
    }
}

/// Tie-break order for majority votes: earlier wins.
pub fn action_priority(action: &str) -> usize {
    const FIXED: &[&str] = &[
        HANDLE_ABORT,
        EXECUTE_TRANSACTION,
        EXECUTE_QUERY,
        INFORM_RESULT,
        CONFIRM,
        REOPEN,
    ];
    if let Some(i) = FIXED.iter().position(|a| *a == action) {
        i
    } else if action.starts_with("identify_") {
        FIXED.len()
    } else if action.starts_with("request_slot(") {
        FIXED.len() + 1
    } else {
        FIXED.len() + 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub action: String,
    pub counts: BTreeMap<String, u64>,
}

/// Next bot action per abstract state, learned by majority vote.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DMPolicy {
    entries: BTreeMap<StateKey, PolicyEntry>,
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    version: u32,
    entries: BTreeMap<String, PolicyEntry>,
}

impl DMPolicy {
    /// Majority action per key; ties go to the action with the smaller
    /// [`action_priority`], then the lexicographically smaller label.
    pub fn from_counts(counts: BTreeMap<StateKey, BTreeMap<String, u64>>) -> Self {
        let entries = counts
            .into_iter()
            .map(|(key, counts)| {
                let action = counts
                    .iter()
                    .min_by(|(a, na), (b, nb)| {
                        nb.cmp(na)
                            .then(action_priority(a).cmp(&action_priority(b)))
                            .then(a.cmp(b))
                    })
                    .map(|(a, _)| a.clone())
                    .unwrap_or_default();
                (key, PolicyEntry { action, counts })
            })
            .collect();
        DMPolicy { entries }
    }

    pub fn lookup(&self, key: &StateKey) -> Option<&str> {
        self.entries.get(key).map(|e| e.action.as_str())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&StateKey, &PolicyEntry)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> String {
        let file = PolicyFile {
            version: 1,
            entries: self.entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        };
        serde_json::to_string_pretty(&file).expect("policy serializes") + "\n"
    }

    pub fn from_json_str(source: &str, origin: &str) -> Result<Self> {
        let file: PolicyFile = serde_json::from_str(source).map_err(|e| Error::json(origin, e))?;
        let entries = file
            .entries
            .into_iter()
            .map(|(k, v)| Ok((k.parse()?, v)))
            .collect::<Result<_>>()?;
        Ok(DMPolicy { entries })
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

/// What the engine knows about the current state when deciding an action.
#[derive(Debug, Clone, Copy)]
pub struct ActionContext<'a> {
    pub task: &'a TaskDefinition,
    pub phase: &'a Phase,
    /// Abstracted last dialogue-level user intent.
    pub user: &'a str,
    /// Whether the previous bot action was a confirmation request.
    pub confirm_pending: bool,
}

/// Rule table used for states the learned policy has not seen.
pub fn fallback_action(ctx: &ActionContext<'_>) -> String {
    let task = ctx.task;
    if ctx.user == ABORT || ctx.user == BYE {
        return HANDLE_ABORT.into();
    }
    match ctx.phase {
        Phase::Identifying(slot) => match task.slot(slot).map(|s| &s.kind) {
            Some(SlotKind::Entity(table)) => identify_action(table),
            _ => HANDLE_ABORT.into(),
        },
        Phase::Filling(slot) => request_slot_action(slot),
        Phase::Confirming if !task.action.is_mutation() => EXECUTE_QUERY.into(),
        Phase::Confirming if ctx.confirm_pending && ctx.user == AFFIRM => EXECUTE_TRANSACTION.into(),
        Phase::Confirming if ctx.confirm_pending && ctx.user == DENY => REOPEN.into(),
        Phase::Confirming => CONFIRM.into(),
        Phase::Done => INFORM_RESULT.into(),
        Phase::Idle => HANDLE_ABORT.into(),
    }
}

/// Whether `action` may be taken in the given state. Execution in particular
/// requires a pending confirmation that the user just affirmed.
pub fn admissible(action: &str, ctx: &ActionContext<'_>) -> bool {
    let task = ctx.task;
    match action {
        HANDLE_ABORT => matches!(ctx.user, ABORT | BYE | UNKNOWN_VALUE),
        CONFIRM => {
            *ctx.phase == Phase::Confirming
                && task.requires_confirmation()
                && !(ctx.confirm_pending && matches!(ctx.user, AFFIRM | DENY))
        }
        REOPEN => *ctx.phase == Phase::Confirming && ctx.confirm_pending && ctx.user == DENY,
        EXECUTE_TRANSACTION => {
            *ctx.phase == Phase::Confirming && task.action.is_mutation() && ctx.confirm_pending && ctx.user == AFFIRM
        }
        EXECUTE_QUERY => *ctx.phase == Phase::Confirming && !task.action.is_mutation(),
        INFORM_RESULT => *ctx.phase == Phase::Done,
        _ => match ctx.phase {
            Phase::Identifying(slot) => match task.slot(slot).map(|s| &s.kind) {
                Some(SlotKind::Entity(table)) => action == identify_action(table),
                _ => false,
            },
            Phase::Filling(slot) => action == request_slot_action(slot),
            _ => false,
        },
    }
}

/// The learned action when it is admissible, otherwise the rule table's.
pub fn decide_action(policy: &DMPolicy, ctx: &ActionContext<'_>) -> String {
    let key = StateKey::new(&ctx.task.name, ctx.phase, ctx.user);
    match policy.lookup(&key) {
        Some(a) if admissible(a, ctx) => a.to_string(),
        _ => fallback_action(ctx),
    }
}
