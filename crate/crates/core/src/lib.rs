//! Synthesizes data-aware conversational agents for transactional databases.
//!
//! From a relational schema, a set of task (transaction) definitions and a
//! handful of utterance templates, the crate generates NLU and dialogue-flow
//! training data, trains an intent classifier and a dialogue policy, and runs
//! dialogues that identify database entities by asking for the attributes
//! that best narrow the remaining candidates.

pub mod bench;
pub mod config;
pub mod datagen;
pub mod dialogue;
pub mod error;
pub mod fixture;
pub mod nlu;
pub mod pipeline;
pub mod policy;
pub mod scalar;
pub mod schema;
pub mod store;
pub mod tasks;
pub mod text;
pub mod value;

pub use error::{Error, Result};
pub use policy::{AwarenessModel, AwarenessOutcome, CandidateSummary};
pub use scalar::Scalar;
pub use schema::{Attribute, ColumnAnnotation, RequestPreference, Schema};
pub use store::{CandidateSet, Predicate, PredicateOp, Store, TransactionResult};
pub use tasks::{SlotKind, SlotSpec, TaskAction, TaskDefinition};
pub use value::{SemanticType, Value};

pub type ColumnStats = store::ColumnStats<f64>;
pub type PolicyConfig = policy::PolicyConfig<f64>;
pub type PolicyDecision = policy::PolicyDecision<f64>;
pub type ScoredAttribute = policy::ScoredAttribute<f64>;
pub type SlotPolicy = policy::SlotPolicy<f64>;
