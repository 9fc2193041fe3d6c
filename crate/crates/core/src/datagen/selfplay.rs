use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dialogue::dm::{self, next_phase, DMPolicy, Phase, StateKey};
use crate::error::{Error, Result};
use crate::policy::{requestable_for_table, AwarenessModel};
use crate::store::Store;
use crate::tasks::{SlotKind, TaskDefinition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub name: String,
    /// Probability that the user abandons the task at some point.
    pub p_abort: f64,
    /// Probability that the initial request carries an extra slot value.
    pub p_overanswer: f64,
    /// Probability that the user corrects a value when asked to confirm.
    pub p_change_mind: f64,
}

impl UserProfile {
    pub fn new(name: &str, p_abort: f64, p_overanswer: f64, p_change_mind: f64) -> Self {
        UserProfile {
            name: name.to_string(),
            p_abort,
            p_overanswer,
            p_change_mind,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad: Vec<String> = [
            ("p_abort", self.p_abort),
            ("p_overanswer", self.p_overanswer),
            ("p_change_mind", self.p_change_mind),
        ]
        .iter()
        .filter(|(_, p)| !(0.0..=1.0).contains(p))
        .map(|(n, p)| format!("profile `{}`: {n} = {p} is not a probability", self.name))
        .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }
}

/// Weighted mixture of user behaviours sampled per flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileMix {
    pub profiles: Vec<(f64, UserProfile)>,
}

impl Default for ProfileMix {
    fn default() -> Self {
        ProfileMix {
            profiles: vec![
                (0.5, UserProfile::new("cooperative", 0.0, 0.4, 0.1)),
                (0.25, UserProfile::new("impatient", 0.6, 0.2, 0.0)),
                (0.25, UserProfile::new("indecisive", 0.1, 0.2, 0.7)),
            ],
        }
    }
}

impl ProfileMix {
    pub fn single(profile: UserProfile) -> Self {
        ProfileMix {
            profiles: vec![(1.0, profile)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    User,
    Bot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowTurn {
    pub actor: Actor,
    pub action: String,
    /// Phase the dialogue was in when the bot chose this action.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
    /// Slots carried by a user action beyond what its intent names.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slots: Vec<String>,
}

impl FlowTurn {
    fn user(action: impl Into<String>, slots: Vec<String>) -> Self {
        FlowTurn {
            actor: Actor::User,
            action: action.into(),
            phase: None,
            slots,
        }
    }

    fn bot(action: impl Into<String>, phase: &Phase) -> Self {
        FlowTurn {
            actor: Actor::Bot,
            action: action.into(),
            phase: Some(phase.clone()),
            slots: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowMeta {
    pub task: String,
    pub profile: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueFlow {
    pub turns: Vec<FlowTurn>,
    pub metadata: FlowMeta,
}

struct Sim<'a> {
    task: &'a TaskDefinition,
    turns: Vec<FlowTurn>,
    filled: BTreeSet<String>,
    focused: BTreeSet<String>,
}

impl Sim<'_> {
    fn phase(&self) -> Phase {
        next_phase(self.task, |s| self.filled.contains(s), |s| self.focused.contains(s))
    }

    fn bot(&mut self, action: impl Into<String>, phase: &Phase) {
        self.turns.push(FlowTurn::bot(action, phase));
    }

    fn user(&mut self, action: impl Into<String>) {
        self.turns.push(FlowTurn::user(action, Vec::new()));
    }
}

/// Self-play: samples a task, a user profile and the user's attribute
/// knowledge, then plays the high-level dialogue. Entity identification is a
/// single `identify_<table>` bot action; it fails (user `unknown_value`, bot
/// `handle_abort`) only when the user knows none of the entity's requestable
/// attributes.
pub fn simulate_dialogues(
    tasks: &[TaskDefinition],
    store: &Store,
    mix: &ProfileMix,
    n: usize,
    seed: u64,
) -> Result<Vec<DialogueFlow>> {
    if tasks.is_empty() {
        return Err(Error::NoTasks);
    }
    for (_, p) in &mix.profiles {
        p.validate()?;
    }
    let weights = WeightedIndex::new(mix.profiles.iter().map(|(w, _)| *w))
        .map_err(|e| Error::InvalidArgument(format!("profile weights: {e}")))?;
    let awareness = AwarenessModel::from_schema(store.schema());
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut flows = Vec::with_capacity(n);
    for _ in 0..n {
        let flow_seed = master.next_u64();
        let mut rng = ChaCha8Rng::seed_from_u64(flow_seed);
        let task = &tasks[rng.gen_range(0..tasks.len())];
        let profile = &mix.profiles[weights.sample(&mut rng)].1;
        let turns = simulate_one(task, store, &awareness, profile, &mut rng);
        flows.push(DialogueFlow {
            turns,
            metadata: FlowMeta {
                task: task.name.clone(),
                profile: profile.name.clone(),
                seed: flow_seed,
            },
        });
    }
    Ok(flows)
}

fn simulate_one(
    task: &TaskDefinition,
    store: &Store,
    awareness: &AwarenessModel,
    profile: &UserProfile,
    rng: &mut ChaCha8Rng,
) -> Vec<FlowTurn> {
    // attribute slot names the user could supply, per entity slot
    let mut known: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for slot in &task.slots {
        if let SlotKind::Entity(table) = &slot.kind {
            let attrs = requestable_for_table(store, table, crate::store::DEFAULT_MAX_JOIN_DEPTH)
                .into_iter()
                .filter(|(a, _)| rng.gen_bool(awareness.p_known::<f64>(a)))
                .map(|(a, _)| a.slot_name())
                .collect();
            known.insert(slot.name.clone(), attrs);
        }
    }
    let scalars: Vec<&str> = task
        .slots
        .iter()
        .filter(|s| matches!(s.kind, SlotKind::Scalar(_)))
        .map(|s| s.name.as_str())
        .collect();

    let mut sim = Sim {
        task,
        turns: Vec::new(),
        filled: BTreeSet::new(),
        focused: BTreeSet::new(),
    };
    let abort_at = rng.gen_bool(profile.p_abort).then(|| rng.gen_range(0..3usize));
    let mut extra = Vec::new();
    if abort_at.is_none() && rng.gen_bool(profile.p_overanswer) {
        let mut options: Vec<(Option<&str>, String)> = scalars.iter().map(|s| (None, s.to_string())).collect();
        for (slot, attrs) in &known {
            options.extend(attrs.iter().map(|a| (Some(slot.as_str()), a.clone())));
        }
        if let Some((entity, name)) = options.choose(rng).cloned() {
            match entity {
                Some(e) => {
                    sim.focused.insert(e.to_string());
                }
                None => {
                    sim.filled.insert(name.clone());
                }
            }
            extra.push(name);
        }
    }
    sim.turns.push(FlowTurn::user(task.request_intent(), extra));
    let mut change = task.action.is_mutation() && rng.gen_bool(profile.p_change_mind);
    let mut floor = 0usize;

    // returns true when the user aborts after the bot took the floor
    let mut maybe_abort = |sim: &mut Sim, last_chance: bool| -> bool {
        let Some(at) = abort_at else { return false };
        let now = floor == at || last_chance;
        floor += 1;
        if now {
            let phase = sim.phase();
            sim.user(dm::ABORT);
            sim.bot(dm::HANDLE_ABORT, &phase);
        }
        now
    };

    for _ in 0..64 {
        let phase = sim.phase();
        match &phase {
            Phase::Identifying(slot) => {
                let table = match &task.slot(slot).expect("phase slot").kind {
                    SlotKind::Entity(t) => t.clone(),
                    SlotKind::Scalar(_) => unreachable!("identifying a scalar slot"),
                };
                sim.bot(dm::identify_action(&table), &phase);
                if known.get(slot).is_none_or(|k| k.is_empty()) {
                    sim.user(dm::UNKNOWN_VALUE);
                    sim.bot(dm::HANDLE_ABORT, &phase);
                    break;
                }
                sim.filled.insert(slot.clone());
                let last = !task.action.is_mutation() && sim.phase() == Phase::Confirming;
                if maybe_abort(&mut sim, last) {
                    break;
                }
            }
            Phase::Filling(slot) => {
                sim.bot(dm::request_slot_action(slot), &phase);
                sim.filled.insert(slot.clone());
                let last = !task.action.is_mutation() && sim.phase() == Phase::Confirming;
                if maybe_abort(&mut sim, last) {
                    break;
                }
            }
            Phase::Confirming if !task.action.is_mutation() => {
                sim.bot(dm::EXECUTE_QUERY, &phase);
                sim.bot(dm::INFORM_RESULT, &Phase::Done);
                break;
            }
            Phase::Confirming => {
                sim.bot(dm::CONFIRM, &phase);
                if maybe_abort(&mut sim, true) {
                    break;
                }
                if change {
                    change = false;
                    if !scalars.is_empty() && rng.gen_bool(0.5) {
                        let slot = scalars.choose(rng).expect("non-empty");
                        sim.user(dm::inform_intent(slot));
                    } else {
                        sim.user(dm::DENY);
                        sim.bot(dm::REOPEN, &phase);
                        let first = task.slots.iter().find(|s| s.required).expect("validated task");
                        sim.filled.remove(&first.name);
                        sim.focused.remove(&first.name);
                    }
                    continue;
                }
                sim.user(dm::AFFIRM);
                sim.bot(dm::EXECUTE_TRANSACTION, &phase);
                sim.bot(dm::INFORM_RESULT, &Phase::Done);
                break;
            }
            Phase::Idle | Phase::Done => unreachable!("task phases only"),
        }
    }
    sim.turns
}

/// Checks the structural rules every flow must satisfy.
pub fn check_flow(flow: &DialogueFlow) -> std::result::Result<(), String> {
    let t = &flow.turns;
    let first = t.first().ok_or("empty flow")?;
    if first.actor != Actor::User || !first.action.starts_with("request_") {
        return Err(format!("flow starts with {:?} {}", first.actor, first.action));
    }
    let last = t.last().expect("non-empty");
    if last.actor != Actor::Bot || !(last.action == dm::INFORM_RESULT || last.action == dm::HANDLE_ABORT) {
        return Err(format!("flow ends with {:?} {}", last.actor, last.action));
    }
    for (i, turn) in t.iter().enumerate() {
        let at = |j: usize| t.get(j).map(|x| (x.actor, x.action.as_str()));
        if turn.actor == Actor::Bot && turn.phase.is_none() {
            return Err(format!("bot turn {i} has no phase"));
        }
        match (turn.actor, turn.action.as_str()) {
            (Actor::Bot, dm::EXECUTE_TRANSACTION) => {
                if i < 2 || at(i - 1) != Some((Actor::User, dm::AFFIRM)) || at(i - 2) != Some((Actor::Bot, dm::CONFIRM))
                {
                    return Err(format!("turn {i}: execution without confirm + affirm"));
                }
                if at(i + 1) != Some((Actor::Bot, dm::INFORM_RESULT)) {
                    return Err(format!("turn {i}: execution not followed by inform_result"));
                }
            }
            (Actor::Bot, dm::EXECUTE_QUERY) => {
                if at(i + 1) != Some((Actor::Bot, dm::INFORM_RESULT)) {
                    return Err(format!("turn {i}: query not followed by inform_result"));
                }
            }
            (Actor::Bot, dm::INFORM_RESULT)
                if !matches!(
                    at(i.wrapping_sub(1)),
                    Some((Actor::Bot, dm::EXECUTE_TRANSACTION | dm::EXECUTE_QUERY))
                ) =>
            {
                return Err(format!("turn {i}: inform_result without execution"));
            }
            _ => {}
        }
    }
    Ok(())
}

/// Counts of bot actions per abstract state over a set of flows.
pub fn state_action_counts(flows: &[DialogueFlow]) -> BTreeMap<StateKey, BTreeMap<String, u64>> {
    let mut counts: BTreeMap<StateKey, BTreeMap<String, u64>> = BTreeMap::new();
    for flow in flows {
        let mut last_user = String::new();
        for turn in &flow.turns {
            match turn.actor {
                Actor::User => last_user = turn.action.clone(),
                Actor::Bot => {
                    let phase = turn.phase.clone().unwrap_or_default();
                    let key = StateKey::new(&flow.metadata.task, &phase, &last_user);
                    *counts.entry(key).or_default().entry(turn.action.clone()).or_default() += 1;
                }
            }
        }
    }
    counts
}

/// Majority-vote DM policy over the flows' (task, phase, last user intent) states.
pub fn derive_dm_policy(flows: &[DialogueFlow]) -> Result<DMPolicy> {
    if flows.is_empty() {
        return Err(Error::NoFlows);
    }
    Ok(DMPolicy::from_counts(state_action_counts(flows)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;

    fn setup() -> (Store, Vec<TaskDefinition>) {
        let store = fixture::cinema_store(300, 1);
        let tasks = fixture::cinema_tasks(store.schema());
        (store, tasks)
    }

    fn actions(f: &DialogueFlow) -> Vec<&str> {
        f.turns.iter().map(|t| t.action.as_str()).collect()
    }

    #[test]
    fn forced_abort() {
        let (store, tasks) = setup();
        let mix = ProfileMix::single(UserProfile::new("quitter", 1.0, 0.0, 0.0));
        let flows = simulate_dialogues(&tasks, &store, &mix, 200, 3).unwrap();
        for f in &flows {
            assert_eq!(f.turns.last().unwrap().action, dm::HANDLE_ABORT, "{:?}", actions(f));
            check_flow(f).unwrap();
        }
    }

    #[test]
    fn canonical_reservation_flow() {
        let (store, tasks) = setup();
        let mix = ProfileMix::single(UserProfile::new("plain", 0.0, 0.0, 0.0));
        let flows = simulate_dialogues(&tasks[..1], &store, &mix, 50, 4).unwrap();
        let canonical = vec![
            "request_reservation",
            "identify_customer",
            "identify_screening",
            "request_slot(ticket_amount)",
            "confirm",
            "affirm",
            "execute_transaction",
            "inform_result",
        ];
        assert!(flows.iter().all(|f| actions(f) == canonical));
    }

    #[test]
    fn default_mix_is_well_formed_and_varied() {
        let (store, tasks) = setup();
        let flows = simulate_dialogues(&tasks, &store, &ProfileMix::default(), 1000, 5).unwrap();
        assert_eq!(flows.len(), 1000);
        for f in &flows {
            check_flow(f).unwrap_or_else(|e| panic!("{e}: {:?}", actions(f)));
        }
        let ends: BTreeSet<&str> = flows.iter().map(|f| f.turns.last().unwrap().action.as_str()).collect();
        assert_eq!(ends, BTreeSet::from([dm::HANDLE_ABORT, dm::INFORM_RESULT]));
        assert_eq!(
            flows,
            simulate_dialogues(&tasks, &store, &ProfileMix::default(), 1000, 5).unwrap()
        );
    }

    #[test]
    fn derived_policy_is_the_majority() {
        let (store, tasks) = setup();
        let flows = simulate_dialogues(&tasks, &store, &ProfileMix::default(), 500, 6).unwrap();
        let policy = derive_dm_policy(&flows).unwrap();
        for (key, counts) in state_action_counts(&flows) {
            let max = counts.values().max().unwrap();
            let got = policy.lookup(&key).unwrap();
            assert_eq!(counts[got], *max);
        }
        let key = StateKey::new(
            "ticket_reservation",
            &Phase::Identifying("screening_id".into()),
            dm::ABORT,
        );
        assert_eq!(policy.lookup(&key), Some(dm::HANDLE_ABORT));
        let key = StateKey::new("ticket_reservation", &Phase::Confirming, dm::AFFIRM);
        assert_eq!(policy.lookup(&key), Some(dm::EXECUTE_TRANSACTION));
        assert!(matches!(derive_dm_policy(&[]), Err(Error::NoFlows)));
        assert!(matches!(
            simulate_dialogues(&[], &store, &ProfileMix::default(), 1, 1),
            Err(Error::NoTasks)
        ));
    }

    #[test]
    fn malformed_flows_are_caught() {
        let meta = FlowMeta {
            task: "t".into(),
            profile: "p".into(),
            seed: 0,
        };
        let bad = DialogueFlow {
            turns: vec![
                FlowTurn::user("request_reservation", vec![]),
                FlowTurn::bot(dm::EXECUTE_TRANSACTION, &Phase::Confirming),
                FlowTurn::bot(dm::INFORM_RESULT, &Phase::Done),
            ],
            metadata: meta,
        };
        assert!(check_flow(&bad).is_err());
    }
}
