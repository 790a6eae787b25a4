//! Completion backends and output parsers.
//!
//! [`LanguageModel`] is the single-turn completion interface. Two backends
//! implement it: [`ChatClient`] for any chat-completions compatible HTTP
//! endpoint and [`ScriptedResponder`], a deterministic rule table used as a
//! test oracle. [`parse`] holds the tolerant list/JSON extractors that the
//! prompt output contracts rely on.

mod http;
pub mod parse;
mod scripted;

use std::ops::{Add, AddAssign};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{EventKind, RunTrace};

pub use http::ChatClient;
pub use parse::{extract_json_object, normalize_bool, parse_json_object, parse_list, ParseError};
pub use scripted::{Matcher, Rule, ScriptedResponder};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("invalid generation config: {0}")]
    Config(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    InvalidResponse(String),
    #[error("no scripted rule matches prompt starting {0:?}")]
    NoMatchingRule(String),
    #[error("scripted fixture: {0}")]
    Fixture(String),
}

impl LlmError {
    /// Fatal errors mean the backend itself is unusable; the planner aborts
    /// the run on these instead of degrading the current step.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            LlmError::Config(_)
                | LlmError::Transport(_)
                | LlmError::RateLimited(_)
                | LlmError::Status { .. }
                | LlmError::Fixture(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub model: String,
    pub temperature: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
    pub max_tokens: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            model: "gpt-3.5-turbo".to_string(),
            temperature: 0.3,
            frequency_penalty: 0.0,
            presence_penalty: 0.0,
            max_tokens: 1024,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::Config("max_tokens must be >= 1".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl Usage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        Self {
            input_tokens,
            output_tokens,
        }
    }

    pub fn total(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

impl Add for Usage {
    type Output = Usage;

    fn add(self, rhs: Usage) -> Usage {
        Usage::new(
            self.input_tokens + rhs.input_tokens,
            self.output_tokens + rhs.output_tokens,
        )
    }
}

impl AddAssign for Usage {
    fn add_assign(&mut self, rhs: Usage) {
        *self = *self + rhs;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
    pub latency: Duration,
}

pub trait LanguageModel: Send + Sync {
    fn complete(&self, prompt: &str, config: &GenerationConfig) -> Result<Completion, LlmError>;
}

/// Token estimate used wherever a backend reports no usage: one token per
/// four characters, rounded up.
pub fn approx_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageSummary {
    pub usage: Usage,
    pub calls: u64,
}

/// Sum the usage of every LLM call recorded in a trace.
pub fn usage_total(trace: &RunTrace) -> UsageSummary {
    trace
        .of_kind(EventKind::LlmCall)
        .fold(UsageSummary::default(), |mut acc, event| {
            acc.calls += 1;
            acc.usage += event.usage.unwrap_or_default();
            acc
        })
}
