use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::stable_hash64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub request_id: String,
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub text: String,
    pub usage: TokenUsage,
    pub latency_ms: u64,
    /// Exact request body sent over the wire, if any. Never contains credentials.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_body: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend answered with status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            BackendError::Malformed(_) | BackendError::Config(_) => false,
        }
    }
}

/// A text model that answers prompts.
pub trait Backend: Send + Sync {
    /// Identifier recorded in personas and transcripts.
    fn name(&self) -> &str;

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError>;
}

/// Deterministic stand-in for a language model.
///
/// For a single-cell prompt the score is `stable_hash64(prompt) % 101`, where
/// `stable_hash64` is the first eight bytes of SHA-256 read big-endian. For a
/// batched prompt every `CELL <option>/<criterion>:` line gets
/// `stable_hash64(prompt + "\n" + "<option>/<criterion>") % 101`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

pub const MOCK_BACKEND_NAME: &str = "mock";

impl MockBackend {
    pub fn score_for(prompt: &str) -> u8 {
        (stable_hash64(prompt) % 101) as u8
    }

    fn batched_cells(prompt: &str) -> Vec<&str> {
        prompt
            .lines()
            .filter_map(|l| l.strip_prefix("CELL "))
            .filter_map(|rest| rest.split_once(':').map(|(key, _)| key.trim()))
            .collect()
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        MOCK_BACKEND_NAME
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let cells = Self::batched_cells(&request.prompt);
        let text = if cells.is_empty() {
            let s = Self::score_for(&request.prompt);
            format!("Deterministic mock assessment with support {s}.\nSCORE={s}")
        } else {
            cells
                .iter()
                .map(|key| {
                    let s = Self::score_for(&format!("{}\n{key}", request.prompt));
                    format!("CELL {key}: Deterministic mock assessment with support {s}.\nSCORE {key}={s}")
                })
                .collect::<Vec<_>>()
                .join("\n")
        };
        Ok(BackendResponse {
            usage: TokenUsage {
                prompt_tokens: request.prompt.split_whitespace().count() as u64,
                completion_tokens: text.split_whitespace().count() as u64,
            },
            text,
            latency_ms: 0,
            request_body: None,
        })
    }
}

pub const ENV_BACKEND_URL: &str = "QOC_BACKEND_URL";
pub const ENV_BACKEND_TOKEN: &str = "QOC_BACKEND_TOKEN";

/// Chat-completion style HTTP backend.
///
/// Posts `{"model", "messages": [{"role": "user", "content": prompt}],
/// "temperature", "max_tokens"}` to `<base_url>/chat/completions` and reads
/// `choices[0].message.content` and `usage` from the answer.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    base_url: String,
    token: Option<String>,
    timeout: Duration,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, token: Option<String>) -> Self {
        Self { base_url: base_url.into(), token, timeout: Duration::from_secs(120) }
    }

    /// Reads the base URL and bearer token from the environment.
    pub fn from_env() -> Result<Self, BackendError> {
        let url = std::env::var(ENV_BACKEND_URL)
            .map_err(|_| BackendError::Config(format!("{ENV_BACKEND_URL} is not set")))?;
        Ok(Self::new(url, std::env::var(ENV_BACKEND_TOKEN).ok()))
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    pub fn request_body(request: &BackendRequest) -> serde_json::Value {
        serde_json::json!({
            "model": request.model,
            "messages": [{ "role": "user", "content": request.prompt }],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        })
    }

    pub fn parse_response(body: &str) -> Result<(String, TokenUsage), BackendError> {
        let v: serde_json::Value =
            serde_json::from_str(body).map_err(|e| BackendError::Malformed(e.to_string()))?;
        let text = v
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))?;
        if text.trim().is_empty() {
            return Err(BackendError::Malformed("empty completion".into()));
        }
        let count = |p: &str| v.pointer(p).and_then(|x| x.as_u64()).unwrap_or(0);
        Ok((
            text.to_owned(),
            TokenUsage {
                prompt_tokens: count("/usage/prompt_tokens"),
                completion_tokens: count("/usage/completion_tokens"),
            },
        ))
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let body = Self::request_body(request).to_string();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut call = agent.post(&self.endpoint()).header("content-type", "application/json");
        if let Some(token) = &self.token {
            call = call.header("authorization", &format!("Bearer {token}"));
        }
        let started = Instant::now();
        let response = call.send(body.as_str()).map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .into_body()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Status { status, body: text });
        }
        let (content, usage) = Self::parse_response(&text)?;
        Ok(BackendResponse {
            text: content,
            usage,
            latency_ms: started.elapsed().as_millis() as u64,
            request_body: Some(body),
        })
    }
}

/// `mock` or `http`; the HTTP backend reads its settings from the environment.
pub fn backend_by_name(name: &str) -> Result<std::sync::Arc<dyn Backend>, BackendError> {
    match name {
        MOCK_BACKEND_NAME => Ok(std::sync::Arc::new(MockBackend)),
        "http" => Ok(std::sync::Arc::new(HttpBackend::from_env()?)),
        other => Err(BackendError::Config(format!("unknown backend {other:?}; expected mock or http"))),
    }
}
