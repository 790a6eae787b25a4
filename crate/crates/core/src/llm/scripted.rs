use std::fs;
use std::path::Path;
use std::time::Duration;

use regex::Regex;
use serde::Deserialize;

use super::{approx_tokens, Completion, GenerationConfig, LanguageModel, LlmError, Usage};

#[derive(Debug, Clone)]
pub enum Matcher {
    Substring(String),
    Regex(Regex),
}

impl Matcher {
    pub fn regex(pattern: &str) -> Result<Self, LlmError> {
        Regex::new(pattern)
            .map(Matcher::Regex)
            .map_err(|e| LlmError::Fixture(format!("bad regex {pattern:?}: {e}")))
    }

    fn matches(&self, prompt: &str) -> bool {
        match self {
            Matcher::Substring(s) => prompt.contains(s.as_str()),
            Matcher::Regex(re) => re.is_match(prompt),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub matcher: Matcher,
    pub response: String,
}

/// Deterministic stand-in for a model: an ordered rule table where the first
/// rule whose matcher fires on the prompt supplies the response.
///
/// The response depends only on the prompt text, never on call order.
#[derive(Debug, Clone, Default)]
pub struct ScriptedResponder {
    rules: Vec<Rule>,
    default: Option<String>,
}

#[derive(Deserialize)]
struct RuleSpec {
    #[serde(rename = "match")]
    pattern: String,
    #[serde(default)]
    regex: bool,
    response: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FixtureSpec {
    Rules(Vec<RuleSpec>),
    Full {
        rules: Vec<RuleSpec>,
        #[serde(default)]
        default: Option<String>,
    },
}

impl ScriptedResponder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rule(mut self, substring: &str, response: &str) -> Self {
        self.rules.push(Rule {
            matcher: Matcher::Substring(substring.to_string()),
            response: response.to_string(),
        });
        self
    }

    pub fn regex_rule(mut self, pattern: &str, response: &str) -> Result<Self, LlmError> {
        self.rules.push(Rule {
            matcher: Matcher::regex(pattern)?,
            response: response.to_string(),
        });
        Ok(self)
    }

    pub fn with_default(mut self, response: &str) -> Self {
        self.default = Some(response.to_string());
        self
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Parse a fixture: either a JSON array of `{match, response, regex?}`
    /// rules, or an object `{rules: [...], default: "..."}`.
    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let spec: FixtureSpec =
            serde_json::from_str(text).map_err(|e| LlmError::Fixture(e.to_string()))?;
        let (specs, default) = match spec {
            FixtureSpec::Rules(rules) => (rules, None),
            FixtureSpec::Full { rules, default } => (rules, default),
        };
        let mut rules = Vec::with_capacity(specs.len());
        for s in specs {
            let matcher = if s.regex {
                Matcher::regex(&s.pattern)?
            } else {
                Matcher::Substring(s.pattern)
            };
            rules.push(Rule {
                matcher,
                response: s.response,
            });
        }
        Ok(Self { rules, default })
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path)
            .map_err(|e| LlmError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn respond(&self, prompt: &str) -> Option<&str> {
        self.rules
            .iter()
            .find(|r| r.matcher.matches(prompt))
            .map(|r| r.response.as_str())
            .or(self.default.as_deref())
    }
}

impl LanguageModel for ScriptedResponder {
    fn complete(&self, prompt: &str, config: &GenerationConfig) -> Result<Completion, LlmError> {
        if prompt.trim().is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        config.validate()?;
        let text = self
            .respond(prompt)
            .ok_or_else(|| LlmError::NoMatchingRule(prompt.chars().take(80).collect()))?;
        Ok(Completion {
            text: text.to_string(),
            usage: Usage::new(approx_tokens(prompt), approx_tokens(text)),
            latency: Duration::ZERO,
        })
    }
}
