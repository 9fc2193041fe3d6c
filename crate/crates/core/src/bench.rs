//! Turn-count comparison of attribute selection strategies against a
//! simulated truthful user.
//!
//! Each trial samples a goal row and the set of attributes the user knows
//! (Bernoulli per attribute, from the awareness priors). Every strategy then
//! plays the same trial: it asks attributes one at a time, the user answers
//! with the goal's value when known, and the candidate set is refined until
//! at most `list_threshold` candidates remain. A turn is one request.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{requestable_for_table, AwarenessModel, PolicyDecision};
use crate::schema::Attribute;
use crate::store::{CandidateSet, Predicate, Row, Store};
use crate::value::Value;
use crate::{PolicyConfig, SlotPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// The slot policy, recomputing statistics on the current candidates.
    DataAware,
    /// Descending whole-table distinct count, computed once before the trials.
    Static,
    /// Uniform over the attributes not yet asked.
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::DataAware, Strategy::Static, Strategy::Random];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::DataAware => "data_aware",
            Strategy::Static => "static",
            Strategy::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub table: String,
    pub trials: usize,
    pub seed: u64,
    pub strategies: Vec<Strategy>,
    pub policy: PolicyConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            table: "customer".into(),
            trials: 500,
            seed: 42,
            strategies: Strategy::ALL.to_vec(),
            policy: PolicyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: Strategy,
    pub trials: usize,
    pub mean_turns: f64,
    pub median_turns: f64,
    pub p90_turns: f64,
    /// Trials that ended with more than `list_threshold` candidates left.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationReport {
    /// Rows ingested after the first half of the trials.
    pub ingested_rows: usize,
    /// Results over the trials run after the ingest.
    pub post_ingest: Vec<StrategyReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub table: String,
    pub trials: usize,
    pub seed: u64,
    pub list_threshold: usize,
    pub strategies: Vec<StrategyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adaptation: Option<AdaptationReport>,
}

impl BenchmarkReport {
    pub fn strategy(&self, s: Strategy) -> Option<&StrategyReport> {
        self.strategies.iter().find(|r| r.strategy == s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// One sampled trial, shared by all strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub goal: Value,
    /// The attributes the user can answer, with the goal's value for each.
    pub known: Vec<(Attribute, Value)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub turns: usize,
    pub success: bool,
}

/// Samples a goal row and the user's knowledge.
pub fn sample_trial(
    store: &Store,
    table: &str,
    attributes: &[(Attribute, usize)],
    awareness: &AwarenessModel,
    max_join_depth: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Trial> {
    let keys = store.open_candidates_with_depth(table, max_join_depth)?;
    let n = keys.len();
    if n == 0 {
        return Err(Error::EmptyColumn(format!(
            "table `{table}` has no rows to sample goals from"
        )));
    }
    let goal = keys
        .row_ids()
        .iter()
        .nth(rng.gen_range(0..n))
        .expect("in range")
        .clone();
    let mut known = Vec::new();
    for (attr, _) in attributes {
        let p: f64 = awareness.p_known(attr);
        let knows = rng.gen_bool(p.clamp(0.0, 1.0));
        if knows {
            if let Some(v) = store
                .attribute_values(table, &goal, attr, max_join_depth)?
                .into_iter()
                .next()
            {
                known.push((attr.clone(), v));
            }
        }
    }
    Ok(Trial { goal, known })
}

/// Fixed order by descending distinct count over the whole table; ties by
/// join depth, then name.
pub fn static_order(store: &Store, table: &str, policy: &PolicyConfig) -> Result<Vec<Attribute>> {
    let all = store.open_candidates_with_depth(table, policy.max_join_depth)?;
    let mut scored = Vec::new();
    for (attr, depth) in requestable_for_table(store, table, policy.max_join_depth) {
        let stats = store.column_stats::<f64>(&all, &attr)?;
        scored.push((std::cmp::Reverse(stats.distinct), depth, attr.to_string(), attr));
    }
    scored.sort();
    Ok(scored.into_iter().map(|(_, _, _, a)| a).collect())
}

struct Runner<'a> {
    table: &'a str,
    policy: &'a SlotPolicy,
    awareness: &'a AwarenessModel,
    attributes: Vec<Attribute>,
    static_order: &'a [Attribute],
}

impl Runner<'_> {
    fn play(&self, store: &Store, strategy: Strategy, trial: &Trial, rng: &mut ChaCha8Rng) -> Result<TrialOutcome> {
        let cfg = self.policy.config();
        let mut c: CandidateSet = store.open_candidates_with_depth(self.table, cfg.max_join_depth)?;
        let mut asked: BTreeSet<Attribute> = BTreeSet::new();
        let mut turns = 0;
        loop {
            if !c.is_empty() && c.len() <= cfg.list_threshold {
                return Ok(TrialOutcome { turns, success: true });
            }
            let next = match strategy {
                Strategy::DataAware => match self.policy.next_request_excluding(store, &c, self.awareness, &asked)? {
                    PolicyDecision::Ask { attribute, .. } => Some(attribute),
                    _ => None,
                },
                Strategy::Static => self.static_order.iter().find(|a| !asked.contains(*a)).cloned(),
                Strategy::Random => {
                    let open: Vec<&Attribute> = self.attributes.iter().filter(|a| !asked.contains(*a)).collect();
                    open.choose(rng).map(|a| (*a).clone())
                }
            };
            let Some(attr) = next else {
                return Ok(TrialOutcome { turns, success: false });
            };
            turns += 1;
            if let Some((_, v)) = trial.known.iter().find(|(a, _)| *a == attr) {
                c = store.refine(&c, Predicate::eq(attr.clone(), v.clone()))?;
            }
            asked.insert(attr);
        }
    }
}

fn summarize(strategy: Strategy, outcomes: &[TrialOutcome]) -> StrategyReport {
    let mut turns: Vec<usize> = outcomes.iter().map(|o| o.turns).collect();
    turns.sort_unstable();
    let n = turns.len();
    let mean = if n == 0 {
        0.0
    } else {
        turns.iter().sum::<usize>() as f64 / n as f64
    };
    let median = match n {
        0 => 0.0,
        n if n % 2 == 1 => turns[n / 2] as f64,
        n => (turns[n / 2 - 1] + turns[n / 2]) as f64 / 2.0,
    };
    // Nearest-rank percentile.
    let p90 = if n == 0 {
        0.0
    } else {
        turns[(0.9 * n as f64).ceil() as usize - 1] as f64
    };
    StrategyReport {
        strategy,
        trials: n,
        mean_turns: mean,
        median_turns: median,
        p90_turns: p90,
        failures: outcomes.iter().filter(|o| !o.success).count(),
    }
}

/// Runs the paired benchmark. With `mid_run_ingest`, those rows are inserted
/// into the table after the first half of the trials; the static order stays
/// as computed before the first trial.
pub fn run_benchmark(
    store: &mut Store,
    cfg: &BenchmarkConfig,
    mid_run_ingest: Option<Vec<Row>>,
) -> Result<BenchmarkReport> {
    let mut errors = Vec::new();
    if cfg.trials == 0 {
        errors.push("benchmark: trials must be at least 1".to_string());
    }
    if cfg.strategies.is_empty() {
        errors.push("benchmark: at least one strategy is required".to_string());
    }
    if let Err(Error::Validation(e)) = cfg.policy.validate() {
        errors.extend(e);
    }
    if !errors.is_empty() {
        return Err(Error::Validation(errors));
    }
    store.schema().require_table(&cfg.table)?;
    if store.row_count(&cfg.table)? == 0 {
        return Err(Error::EmptyColumn(format!("table `{}` is empty", cfg.table)));
    }
    let strategies: Vec<Strategy> = cfg
        .strategies
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let awareness = AwarenessModel::from_schema(store.schema());
    let policy = SlotPolicy::new(cfg.policy);
    let attributes = requestable_for_table(store, &cfg.table, cfg.policy.max_join_depth);
    let order = static_order(store, &cfg.table, &cfg.policy)?;
    let runner = Runner {
        table: &cfg.table,
        policy: &policy,
        awareness: &awareness,
        attributes: attributes.iter().map(|(a, _)| a.clone()).collect(),
        static_order: &order,
    };

    let split = if mid_run_ingest.is_some() {
        cfg.trials / 2
    } else {
        cfg.trials
    };
    let mut pending_ingest = mid_run_ingest;
    let mut ingested_rows = 0;
    let mut outcomes: Vec<Vec<TrialOutcome>> = vec![Vec::new(); strategies.len()];
    let mut goal_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for i in 0..cfg.trials {
        if i == split {
            if let Some(rows) = pending_ingest.take() {
                ingested_rows = store.insert_rows_into(&cfg.table, rows)?;
            }
        }
        let trial = sample_trial(
            store,
            &cfg.table,
            &attributes,
            &awareness,
            cfg.policy.max_join_depth,
            &mut goal_rng,
        )?;
        for (k, s) in strategies.iter().enumerate() {
            // Each strategy draws from its own stream, so adding or removing
            // a strategy leaves the others unchanged.
            let mut rng =
                ChaCha8Rng::seed_from_u64(cfg.seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (*s as u64 + 1));
            outcomes[k].push(runner.play(store, *s, &trial, &mut rng)?);
        }
    }

    let report_for = |range: std::ops::Range<usize>| -> Vec<StrategyReport> {
        strategies
            .iter()
            .zip(&outcomes)
            .map(|(s, o)| summarize(*s, &o[range.clone()]))
            .collect()
    };
    Ok(BenchmarkReport {
        table: cfg.table.clone(),
        trials: cfg.trials,
        seed: cfg.seed,
        list_threshold: cfg.policy.list_threshold,
        strategies: report_for(0..cfg.trials),
        adaptation: (split < cfg.trials).then(|| AdaptationReport {
            ingested_rows,
            post_ingest: report_for(split..cfg.trials),
        }),
    })
}
