//! Dialogue management: the learned high-level policy and the runtime agent.

pub mod dm;
mod engine;
mod responses;

pub use dm::{decide_action, DMPolicy, Phase, StateKey};
pub use engine::{parse_choice, Agent, AgentConfig, AgentResponse, Clock, DialogueState, Pending, TranscriptTurn};
pub use responses::Responses;
