//! The planning loop.
//!
//! A question is decomposed into sub-objectives, then each iteration
//! explores relations and entities from the current tail entities, updates
//! the memory (subgraph, paths, sub-objective status), asks whether the
//! collected facts suffice, and otherwise reflects on whether to backtrack
//! to previously retrieved entities. The loop is capped at
//! [`PlannerConfig::max_depth`] iterations.

mod engine;
mod memory;
mod path;
pub mod prompts;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KgError, KnowledgeGraph};
use crate::llm::{GenerationConfig, LanguageModel, LlmError};
use crate::recall::{Recall, RecallError};
use crate::trace::RunTrace;

pub use engine::{Checkpoint, PathBranch, Planner, RunOutcome, Session};
pub use memory::{Frontier, Memory, PoolEntry, SubObjectiveStatus, Subgraph, UNKNOWN_STATUS};
pub use path::{PathError, PathStep, ReasoningPath};
pub use prompts::{PromptError, PromptRegistry, PromptTemplate, TemplateId};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("invalid question: {0}")]
    InvalidQuestion(String),
    #[error("invalid planner config: {0}")]
    Config(String),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Recall(#[from] RecallError),
}

/// A run that aborted, with everything traced up to the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub error: PlannerError,
    pub trace: RunTrace,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicEntity {
    pub mid: EntityId,
    pub label: String,
}

impl TopicEntity {
    pub fn new(mid: EntityId, label: impl Into<String>) -> Self {
        Self {
            mid,
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub text: String,
    pub topic_entities: Vec<TopicEntity>,
}

impl Question {
    pub fn new(text: impl Into<String>, topic_entities: Vec<TopicEntity>) -> Self {
        Self {
            text: text.into(),
            topic_entities,
        }
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        if self.text.trim().is_empty() {
            return Err(PlannerError::InvalidQuestion(
                "question text is empty".into(),
            ));
        }
        if self.topic_entities.is_empty() {
            return Err(PlannerError::InvalidQuestion("no topic entities".into()));
        }
        if let Some(t) = self
            .topic_entities
            .iter()
            .find(|t| t.label.trim().is_empty())
        {
            return Err(PlannerError::InvalidQuestion(format!(
                "topic entity {} has no label",
                t.mid
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubObjectives {
    pub items: Vec<String>,
}

impl SubObjectives {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn render(&self) -> String {
        serde_json::to_string(&self.items).expect("strings serialize")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablations {
    /// Skip task decomposition; the question is the only sub-objective.
    #[serde(default)]
    pub no_guidance: bool,
    /// Constant "unknown" status, and the subgraph and candidate pool keep
    /// only the current iteration.
    #[serde(default)]
    pub no_memory: bool,
    /// Never backtrack.
    #[serde(default)]
    pub no_reflection: bool,
    /// Cap relations per entity and entities per iteration.
    #[serde(default)]
    pub fixed_breadth: Option<usize>,
}

impl Ablations {
    pub fn is_full(&self) -> bool {
        *self == Ablations::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub max_depth: u32,
    pub ablations: Ablations,
    pub generation: GenerationConfig,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            max_depth: 4,
            ablations: Ablations::default(),
            generation: GenerationConfig::default(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if self.max_depth == 0 {
            return Err(PlannerError::Config("max_depth must be >= 1".into()));
        }
        if self.ablations.fixed_breadth == Some(0) {
            return Err(PlannerError::Config("fixed_breadth must be >= 1".into()));
        }
        self.generation.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub sufficient: bool,
    pub answer: Option<String>,
    pub reason: String,
}

impl Verdict {
    pub fn insufficient(reason: impl Into<String>) -> Self {
        Self {
            sufficient: false,
            answer: None,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionDecision {
    pub add: bool,
    pub reason: String,
    pub backtrack_entities: Vec<EntityId>,
}

/// Shared backends for any number of concurrent runs.
#[derive(Clone)]
pub struct Backends {
    pub kg: Arc<dyn KnowledgeGraph>,
    pub llm: Arc<dyn LanguageModel>,
    pub recall: Arc<Recall>,
    pub prompts: Arc<PromptRegistry>,
}

impl Backends {
    pub fn new(kg: Arc<dyn KnowledgeGraph>, llm: Arc<dyn LanguageModel>) -> Self {
        Self {
            kg,
            llm,
            recall: Arc::new(Recall::default()),
            prompts: Arc::new(PromptRegistry::builtin()),
        }
    }

    pub fn with_recall(mut self, recall: Recall) -> Self {
        self.recall = Arc::new(recall);
        self
    }

    pub fn with_prompts(mut self, prompts: PromptRegistry) -> Self {
        self.prompts = Arc::new(prompts);
        self
    }
}

/// Values of the answer field that mean "not enough information yet".
const NOT_SUFFICIENT: [&str; 4] = ["", "unknown", "insufficient", "no"];

/// Decode the answer field: anything but an explicit non-answer counts as
/// sufficient.
pub fn decode_sufficiency(answer: &str) -> bool {
    let a = answer.trim().trim_end_matches('.').to_ascii_lowercase();
    !NOT_SUFFICIENT.contains(&a.as_str())
}

/// Relations that carry schema or bookkeeping facts rather than knowledge.
pub fn is_schema_relation(relation: &str) -> bool {
    relation == "type.object.type"
        || relation == "type.object.name"
        || relation.starts_with("common.")
        || relation.starts_with("freebase.")
        || relation.contains("sameAs")
}
