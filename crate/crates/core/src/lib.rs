//! Self-correcting, adaptive-breadth reasoning over knowledge graphs for
//! LLM question answering.

pub mod harness;
pub mod kg;
pub mod llm;
pub mod planner;
pub mod recall;
pub mod retry;
pub mod trace;

pub use kg::{Direction, EntityId, KgError, KnowledgeGraph, RelationId, TripleStore, Triplet};
pub use llm::{GenerationConfig, LanguageModel, LlmError, ScriptedResponder, Usage};
pub use planner::{
    Ablations, Backends, Planner, PlannerConfig, PlannerError, Question, RunFailure, RunOutcome,
    TopicEntity, Verdict,
};
pub use recall::{Recall, RecallConfig};
pub use trace::{EventKind, RunTrace, TraceEvent};
