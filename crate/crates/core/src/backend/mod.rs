//! Completion backends.
//!
//! [`Backend`] is the one interface the pipeline talks to. Implementations:
//! a live OpenAI-compatible client, a scripted lookup table and a gold
//! oracle, plus [`CachedBackend`] which puts a content-addressed disk cache
//! in front of any of them.

mod cache;
mod mock;
mod openai;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::Strategy;
use crate::prompt::PromptText;

pub use cache::{CacheEntry, CachedBackend, ResponseCache};
pub use mock::{oracle_answer, oracle_complete, OracleBackend, ScriptFile, ScriptedBackend};
pub use openai::{request_body, OpenAiBackend, OpenAiConfig, RetryPolicy};

/// Words of context that fit one call; roughly a 32k-token window.
pub const DEFAULT_CONTEXT_WORD_BUDGET: usize = 24_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingParams {
    pub model_id: String,
    pub temperature: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
    pub max_tokens: u32,
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams {
            model_id: "gpt-4-32k".into(),
            temperature: 0.0,
            frequency_penalty: 0.0,
            presence_penalty: 0.0,
            max_tokens: 1000,
        }
    }
}

/// Identifies one logical call of a run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequestTag {
    pub instance_id: String,
    pub strategy: Strategy,
    pub call_index: usize,
}

impl fmt::Display for RequestTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.instance_id, self.strategy, self.call_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: PromptText,
    pub params: DecodingParams,
    pub tag: RequestTag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub prompt_words: usize,
    pub completion_words: usize,
    pub latency_ms: u64,
    pub from_cache: bool,
}

impl CompletionResponse {
    pub fn new(req: &CompletionRequest, text: String, latency_ms: u64) -> Self {
        CompletionResponse {
            completion_words: crate::model::word_count(&text),
            prompt_words: req.prompt.word_count,
            text,
            latency_ms,
            from_cache: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("endpoint returned {status}: {body}")]
    Status { status: u16, body: String },
    #[error("response has no completion text")]
    MissingText,
    #[error("no scripted response for prompt digest {0}")]
    NoScript(String),
    #[error("oracle has no instance '{0}'")]
    UnknownInstance(String),
    #[error("cache: {0}")]
    Cache(#[from] crate::io::IoError),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    /// Rate limits and server errors are worth retrying.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Transport { .. } => true,
            BackendError::Status { status, .. } => *status == 408 || *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait Backend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError>;

    /// Calls that reached the underlying model (cache hits excluded).
    fn calls(&self) -> usize;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(req)
    }

    fn calls(&self) -> usize {
        (**self).calls()
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(req)
    }

    fn calls(&self) -> usize {
        (**self).calls()
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the prompt text alone; keys scripted responses.
pub fn prompt_digest(prompt_text: &str) -> String {
    sha256_hex(prompt_text.as_bytes())
}

/// Cache key over the model, every decoding parameter and the full prompt.
/// Request tags are excluded so identical prompts share an entry.
pub fn cache_key(params: &DecodingParams, prompt_text: &str) -> String {
    let canonical = serde_json::json!({
        "model_id": params.model_id,
        "temperature": params.temperature,
        "frequency_penalty": params.frequency_penalty,
        "presence_penalty": params.presence_penalty,
        "max_tokens": params.max_tokens,
        "prompt": prompt_text,
    });
    sha256_hex(canonical.to_string().as_bytes())
}
