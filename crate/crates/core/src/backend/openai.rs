use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendError, CompletionRequest, CompletionResponse, DecodingParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: usize,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            initial_backoff_ms: 1000,
            max_backoff_ms: 60_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): doubling, capped.
    pub fn backoff(&self, retry: usize) -> Duration {
        let factor = 1u64.checked_shl(retry.saturating_sub(1) as u32).unwrap_or(u64::MAX);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpenAiConfig {
    /// Base URL (`.../v1`) or the full chat-completions URL.
    pub endpoint: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub retry: RetryPolicy,
    /// Upper bound on requests in flight across threads.
    pub max_in_flight: usize,
    pub timeout_secs: u64,
}

impl Default for OpenAiConfig {
    fn default() -> Self {
        OpenAiConfig {
            endpoint: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            retry: RetryPolicy::default(),
            max_in_flight: 4,
            timeout_secs: 300,
        }
    }
}

/// Chat-completions body: the prompt as the only user message.
pub fn request_body(params: &DecodingParams, prompt_text: &str) -> Value {
    json!({
        "model": params.model_id,
        "messages": [{"role": "user", "content": prompt_text}],
        "temperature": params.temperature,
        "frequency_penalty": params.frequency_penalty,
        "presence_penalty": params.presence_penalty,
        "max_tokens": params.max_tokens,
    })
}

struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(n: usize) -> Self {
        Limiter {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        LimiterGuard { limiter: self }
    }
}

struct LimiterGuard<'a> {
    limiter: &'a Limiter,
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.limiter.free.lock().unwrap() += 1;
        self.limiter.cv.notify_one();
    }
}

pub struct OpenAiBackend {
    url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
    limiter: Limiter,
    calls: AtomicUsize,
}

impl OpenAiBackend {
    /// Reads the credential from `config.api_key_env`; a missing variable
    /// is only an error for endpoints that are not local.
    pub fn from_config(config: &OpenAiConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let local = config.endpoint.contains("://127.0.0.1") || config.endpoint.contains("://localhost");
        if api_key.is_none() && !local {
            return Err(BackendError::Config(format!(
                "environment variable {} is not set",
                config.api_key_env
            )));
        }
        Self::new(config, api_key)
    }

    pub fn new(config: &OpenAiConfig, api_key: Option<String>) -> Result<Self, BackendError> {
        if config.retry.max_attempts == 0 {
            return Err(BackendError::Config("retry.max_attempts must be at least 1".into()));
        }
        let base = config.endpoint.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(OpenAiBackend {
            url,
            api_key,
            retry: config.retry,
            client,
            limiter: Limiter::new(config.max_in_flight),
            calls: AtomicUsize::new(0),
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, BackendError> {
        let _slot = self.limiter.acquire();
        self.calls.fetch_add(1, Ordering::Relaxed);
        let mut builder = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder.send().map_err(|e| BackendError::Transport {
            attempts: 1,
            message: e.to_string(),
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| BackendError::Transport {
            attempts: 1,
            message: e.to_string(),
        })?;
        if !status.is_success() {
            let body: String = text.chars().take(500).collect();
            return Err(BackendError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let value: Value = serde_json::from_str(&text).map_err(|_| BackendError::MissingText)?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or(BackendError::MissingText)
    }
}

impl Backend for OpenAiBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let body = request_body(&req.params, &req.prompt.text);
        let started = Instant::now();
        let mut attempt = 0usize;
        loop {
            attempt += 1;
            match self.attempt(&body) {
                Ok(text) => {
                    let latency = started.elapsed().as_millis() as u64;
                    return Ok(CompletionResponse::new(req, text, latency));
                }
                Err(e) if e.is_transient() && attempt < self.retry.max_attempts => {
                    tracing::warn!(tag = %req.tag, attempt, "transient failure, retrying: {e}");
                    std::thread::sleep(self.retry.backoff(attempt));
                }
                Err(BackendError::Transport { message, .. }) => {
                    return Err(BackendError::Transport {
                        attempts: attempt,
                        message,
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}
