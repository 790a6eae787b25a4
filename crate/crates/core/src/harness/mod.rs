//! Batch evaluation: dataset loading, Hits@1 scoring, efficiency
//! accounting, and ablation sweeps.

mod dataset;
mod eval;
mod metrics;

use thiserror::Error;

use crate::planner::PlannerError;

pub use dataset::{
    load_dataset, parse_dataset, save_normalized, DatasetRecord, Flavor, LoadedDataset,
};
pub use eval::{
    ablation_matrix, format_summary, run_eval, summary_tsv, Aggregates, EvalOptions, EvalReport,
    QuestionResult, Variant, DEFAULT_FIXED_BREADTH,
};
pub use metrics::{hits_at_1, normalize_answer};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("record {index}: {reason}")]
    Schema { index: usize, reason: String },
    #[error("unknown dataset flavor {0:?} (expected one of: cwq, webqsp, grailqa, normalized)")]
    UnknownFlavor(String),
    #[error("unknown variant {0:?} (expected full, no_guidance, no_memory, no_reflection, fixed_breadth[=N], depth=N, joined with '+')")]
    UnknownVariant(String),
    #[error("no variants given")]
    NoVariants,
    #[error(transparent)]
    Planner(#[from] PlannerError),
}
