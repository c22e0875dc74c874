//! Offline backends: a prompt-digest lookup table and a gold oracle.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{prompt_digest, Backend, BackendError, CompletionRequest, CompletionResponse};
use crate::eval::normalize;
use crate::model::{GoldAnswer, MrcInstance};
use crate::prompt::PromptKind;

/// On-disk form of a scripted backend.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptFile {
    /// Prompt digest (see [`prompt_digest`]) to completion text.
    #[serde(default)]
    pub responses: HashMap<String, String>,
    /// Returned for prompts with no entry; absent means such prompts fail.
    #[serde(default)]
    pub fallback: Option<String>,
}

pub struct ScriptedBackend {
    script: ScriptFile,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(script: ScriptFile) -> Self {
        ScriptedBackend {
            script,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_fallback(text: impl Into<String>) -> Self {
        Self::new(ScriptFile {
            responses: HashMap::new(),
            fallback: Some(text.into()),
        })
    }

    pub fn from_json_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        let script = serde_json::from_str(&text)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::new(script))
    }

    pub fn insert(&mut self, prompt_text: &str, response: impl Into<String>) {
        self.script.responses.insert(prompt_digest(prompt_text), response.into());
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let digest = prompt_digest(&req.prompt.text);
        let text = self
            .script
            .responses
            .get(&digest)
            .or(self.script.fallback.as_ref())
            .cloned()
            .ok_or(BackendError::NoScript(digest))?;
        Ok(CompletionResponse::new(req, text, 0))
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Answers every request with the gold answer of its instance.
pub struct OracleBackend {
    instances: HashMap<String, MrcInstance>,
    calls: AtomicUsize,
}

impl OracleBackend {
    pub fn new(instances: impl IntoIterator<Item = MrcInstance>) -> Self {
        OracleBackend {
            instances: instances.into_iter().map(|i| (i.id.clone(), i)).collect(),
            calls: AtomicUsize::new(0),
        }
    }
}

impl Backend for OracleBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let instance = self
            .instances
            .get(&req.tag.instance_id)
            .ok_or_else(|| BackendError::UnknownInstance(req.tag.instance_id.clone()))?;
        Ok(oracle_complete(req, instance))
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

/// The string the oracle answers with: first spelling of the gold option,
/// first gold variant, or the gold sentences joined in order.
pub fn oracle_answer(instance: &MrcInstance) -> String {
    crate::model::collapse_whitespace(&instance.primary_gold())
}

const SECTION_WORDS: usize = 40;

/// Char spans of each whitespace-delimited word.
fn word_char_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    let mut n = 0usize;
    for (i, c) in text.chars().enumerate() {
        n = i + 1;
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, n));
    }
    spans
}

/// Word range `[lo, hi)` holding the gold answer, if it occurs.
fn gold_word_range(instance: &MrcInstance) -> Option<(usize, usize)> {
    let ctx = &instance.context;
    if let GoldAnswer::SpanSet(indices) = &instance.gold {
        let spans = ctx.sentence_spans.as_ref()?;
        let first = spans.get(*indices.iter().min()?)?.0;
        let last = spans.get(*indices.iter().max()?)?.1;
        let words = word_char_spans(&ctx.text);
        let lo = words.iter().position(|&(_, e)| e > first)?;
        let hi = words.iter().rposition(|&(s, _)| s < last)? + 1;
        return Some((lo, hi));
    }
    let gold: Vec<String> = normalize(&oracle_answer(instance)).tokens().map(str::to_string).collect();
    if gold.is_empty() {
        return None;
    }
    // Non-empty normalized words with their word index.
    let norm: Vec<(usize, String)> = ctx
        .words()
        .iter()
        .enumerate()
        .filter_map(|(i, w)| {
            let n = normalize(w).into_string();
            (!n.is_empty()).then_some((i, n))
        })
        .collect();
    norm.windows(gold.len())
        .find(|win| win.iter().zip(&gold).all(|((_, w), g)| w == g))
        .map(|win| (win[0].0, win[win.len() - 1].0 + 1))
}

/// Up to `count` distinct word windows of `[lo, hi)`, the first one
/// centred on the gold answer when it lies in the range.
fn oracle_sections(instance: &MrcInstance, lo: usize, hi: usize, count: usize) -> Vec<String> {
    let words = instance.context.words();
    let hi = hi.min(words.len());
    if lo >= hi {
        return Vec::new();
    }
    let mut windows: Vec<(usize, usize)> = Vec::new();
    if let Some((g_lo, g_hi)) = gold_word_range(instance).filter(|&(a, b)| a >= lo && b <= hi) {
        let pad = SECTION_WORDS.saturating_sub(g_hi - g_lo) / 2;
        windows.push((g_lo.saturating_sub(pad).max(lo), (g_hi + pad).min(hi)));
    }
    let mut start = lo;
    while windows.len() < count.max(1) && start < hi {
        let end = (start + SECTION_WORDS).min(hi);
        if windows.iter().all(|&(a, b)| end <= a || start >= b) {
            windows.push((start, end));
        }
        start = end;
    }
    windows.truncate(count.max(1));
    windows.into_iter().map(|(a, b)| words[a..b].join(" ")).collect()
}

/// Deterministic well-formed output embedding the gold answer.
pub fn oracle_complete(req: &CompletionRequest, instance: &MrcInstance) -> CompletionResponse {
    let answer = oracle_answer(instance);
    let n_words = instance.context.word_count;
    let requested = req.prompt.requested.unwrap_or(1);
    let sections = |lo: usize, hi: usize| -> String {
        oracle_sections(instance, lo, hi, requested)
            .iter()
            .enumerate()
            .map(|(i, s)| format!("Section {}: {s}\n", i + 1))
            .collect()
    };
    let text = match req.prompt.kind {
        PromptKind::Basic | PromptKind::IragFinal => format!("Answer: {answer}"),
        PromptKind::Cot => format!("The context states the answer directly.\nAnswer: {answer}"),
        PromptKind::Ar => {
            let words = instance.context.words();
            let mut out = String::new();
            for k in 1..=requested {
                let from = ((k - 1) * 12).min(words.len());
                let to = (from + 12).min(words.len());
                out.push_str(&format!(
                    "Q{k}: What does part {k} of the passage say?\nA{k}: {}\n",
                    words[from..to].join(" ")
                ));
            }
            format!("{out}Answer: {answer}")
        }
        PromptKind::Irag => format!("{}Answer: {answer}", sections(0, n_words)),
        PromptKind::IragRetrieve => {
            let (lo, hi) = req.prompt.chunk.unwrap_or((0, n_words));
            sections(lo, hi).trim_end().to_string()
        }
    };
    CompletionResponse::new(req, text, 0)
}
