use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use serde_json::{json, Value};

use super::{approx_tokens, Completion, GenerationConfig, LanguageModel, LlmError, Usage};
use crate::retry::Backoff;

/// Client for an OpenAI-compatible `/chat/completions` endpoint. Each prompt
/// is sent as a single user message.
pub struct ChatClient {
    base_url: String,
    api_key: Option<String>,
    http: Client,
    backoff: Backoff,
}

impl ChatClient {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Result<Self, LlmError> {
        let http = Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self {
            base_url: base_url.into(),
            api_key,
            http,
            backoff: Backoff::default(),
        })
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }

    fn url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }

    fn send_once(&self, body: &Value) -> Result<Value, LlmError> {
        let mut req = self.http.post(self.url()).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        if status.as_u16() == 429 {
            return Err(LlmError::RateLimited(truncate(&text)));
        }
        if !status.is_success() {
            return Err(LlmError::Status {
                status: status.as_u16(),
                body: truncate(&text),
            });
        }
        serde_json::from_str(&text).map_err(|e| LlmError::InvalidResponse(e.to_string()))
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(300).collect()
}

fn retryable(err: &LlmError) -> bool {
    match err {
        LlmError::Transport(_) | LlmError::RateLimited(_) => true,
        LlmError::Status { status, .. } => *status >= 500,
        _ => false,
    }
}

pub(crate) fn request_body(prompt: &str, config: &GenerationConfig) -> Value {
    json!({
        "model": config.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
        "frequency_penalty": config.frequency_penalty,
        "presence_penalty": config.presence_penalty,
    })
}

/// Pull text and usage out of a chat-completions response. Missing usage
/// falls back to the character estimate.
pub(crate) fn parse_response(prompt: &str, body: &Value) -> Result<(String, Usage), LlmError> {
    let text = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| LlmError::InvalidResponse("missing choices[0].message.content".into()))?
        .to_string();
    let usage = match body.get("usage") {
        Some(u) => Usage::new(
            u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
            u.get("completion_tokens")
                .and_then(Value::as_u64)
                .unwrap_or(0),
        ),
        None => Usage::new(approx_tokens(prompt), approx_tokens(&text)),
    };
    Ok((text, usage))
}

impl LanguageModel for ChatClient {
    fn complete(&self, prompt: &str, config: &GenerationConfig) -> Result<Completion, LlmError> {
        if prompt.trim().is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        config.validate()?;
        let body = request_body(prompt, config);
        let start = Instant::now();
        let response = self.backoff.run(retryable, || self.send_once(&body))?;
        let (text, usage) = parse_response(prompt, &response)?;
        Ok(Completion {
            text,
            usage,
            latency: start.elapsed(),
        })
    }
}
