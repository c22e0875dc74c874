//! Executes one strategy on one instance: render, complete, parse.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendError, CompletionRequest, DecodingParams, RequestTag, DEFAULT_CONTEXT_WORD_BUDGET};
use crate::eval::{parse_final_answer, EvalError};
use crate::irag::{run_implicit_rag, ChunkError};
use crate::model::{Deviation, MrcInstance, Prediction, QaPair, Strategy, Usage};
use crate::prompt::{PlaceholderProfile, PromptEngine, PromptError, StrategyConfig};

pub const DEFAULT_CHUNK_OVERLAP_WORDS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecOptions {
    pub params: DecodingParams,
    pub context_word_budget: usize,
    pub chunk_overlap_words: usize,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions {
            params: DecodingParams::default(),
            context_word_budget: DEFAULT_CONTEXT_WORD_BUDGET,
            chunk_overlap_words: DEFAULT_CHUNK_OVERLAP_WORDS,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Chunking(#[from] ChunkError),
    #[error("call {call_index}: {source}")]
    Backend {
        call_index: usize,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Parsed answer plus a deviation when the marker was missing. Empty
/// output parses to an empty answer.
pub(crate) fn answer_of(raw: &str, strategy: Strategy) -> (String, Option<Deviation>) {
    match parse_final_answer(raw, strategy) {
        Ok(p) if p.marker_found => (p.answer, None),
        Ok(p) => (p.answer, Some(Deviation::AnswerMarkerMissing)),
        Err(_) => (String::new(), Some(Deviation::AnswerMarkerMissing)),
    }
}

fn qa_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*\**\s*([QA])\s*(\d+)\s*\**\s*[:.]\s*\**(.*)$").unwrap())
}

/// `Q<k>:` / `A<k>:` pairs in output order; a question without an answer
/// is dropped.
pub fn parse_qa_pairs(raw_output: &str) -> Vec<QaPair> {
    let mut pairs = Vec::new();
    let mut pending: Option<(String, String)> = None;
    for line in raw_output.lines() {
        let Some(c) = qa_line().captures(line) else { continue };
        let text = c[3].trim().to_string();
        if c[1].eq_ignore_ascii_case("q") {
            pending = Some((c[2].to_string(), text));
        } else if let Some((k, question)) = pending.take() {
            if k == c[2] {
                pairs.push(QaPair { question, answer: text });
            }
        }
    }
    pairs
}

/// Runs `cfg.strategy` on `instance`.
pub fn run_instance(
    engine: &PromptEngine,
    instance: &MrcInstance,
    cfg: &StrategyConfig,
    backend: &dyn Backend,
    opts: &ExecOptions,
) -> Result<Prediction, PipelineError> {
    let profile = PlaceholderProfile::for_dataset(instance.dataset);
    if cfg.strategy == Strategy::ImplicitRag {
        return run_implicit_rag(engine, instance, &profile, cfg, backend, opts);
    }
    let prompt = engine.render_for(instance, &profile, cfg)?;
    let req = CompletionRequest {
        prompt,
        params: opts.params.clone(),
        tag: RequestTag {
            instance_id: instance.id.clone(),
            strategy: cfg.strategy,
            call_index: 0,
        },
    };
    let resp = backend
        .complete(&req)
        .map_err(|source| PipelineError::Backend { call_index: 0, source })?;
    let (parsed_answer, deviation) = answer_of(&resp.text, cfg.strategy);
    let qa_pairs = if cfg.strategy == Strategy::Ar {
        parse_qa_pairs(&resp.text)
    } else {
        Vec::new()
    };
    Ok(Prediction {
        instance_id: instance.id.clone(),
        strategy: cfg.strategy,
        parsed_answer,
        sections: Vec::new(),
        qa_pairs,
        call_count: 1,
        usage: Usage {
            prompt_words: resp.prompt_words,
            completion_words: resp.completion_words,
        },
        latency_ms: resp.latency_ms,
        deviations: deviation.into_iter().collect(),
        raw_output: resp.text,
    })
}
