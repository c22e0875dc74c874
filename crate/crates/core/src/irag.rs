//! Implicit RAG: the model extracts the relevant sections itself, then
//! answers from them. Contexts over the word budget are chunked, sections
//! are retrieved per chunk and pooled, and one final call answers.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, CompletionRequest, RequestTag};
use crate::model::{collapse_whitespace, word_count, Context, Deviation, MrcInstance, Prediction, RetrievedSection, Strategy, Usage};
use crate::pipeline::{answer_of, ExecOptions, PipelineError};
use crate::prompt::{PlaceholderProfile, PromptEngine, PromptError, StrategyConfig};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChunkError {
    #[error("chunk budget {budget} must exceed overlap {overlap}")]
    InvalidBudget { budget: usize, overlap: usize },
}

/// Word-aligned windows over a context, `[start, end)` in word indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub chunk_word_budget: usize,
    pub overlap_words: usize,
    pub chunks: Vec<(usize, usize)>,
}

impl ChunkPlan {
    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn is_single(&self) -> bool {
        self.chunks.len() == 1
    }
}

/// Splits `n_words` words into windows of at most `budget` words, each
/// starting `overlap` words before the end of the previous one.
pub fn chunk_words(n_words: usize, budget: usize, overlap: usize) -> Result<ChunkPlan, ChunkError> {
    if budget == 0 || overlap >= budget {
        return Err(ChunkError::InvalidBudget { budget, overlap });
    }
    let mut chunks = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + budget).min(n_words);
        chunks.push((start, end));
        if end == n_words {
            break;
        }
        start = end - overlap;
    }
    Ok(ChunkPlan {
        chunk_word_budget: budget,
        overlap_words: overlap,
        chunks,
    })
}

pub fn chunk_context(context: &Context, budget: usize, overlap: usize) -> Result<ChunkPlan, ChunkError> {
    chunk_words(context.word_count, budget, overlap)
}

/// Sections parsed from one model output.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SectionParse {
    pub sections: Vec<RetrievedSection>,
    /// Section lines beyond the requested count, plus markers with no text.
    pub extras: usize,
    pub deviations: Vec<Deviation>,
}

fn section_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*[*#]*\s*section\s*(\d+)\s*[*]*\s*:\s*[*]*(.*)$").unwrap())
}

fn answer_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*\**\s*answer\**\s*:").unwrap())
}

fn strip_quotes(text: &str) -> &str {
    let quotes: &[char] = &['"', '\u{201c}', '\u{201d}'];
    text.trim().trim_matches(quotes).trim()
}

/// Whitespace-normalized substring test.
pub fn is_grounded(section: &str, context_text: &str) -> bool {
    let s = collapse_whitespace(section);
    !s.is_empty() && collapse_whitespace(context_text).contains(&s)
}

/// Reads `Section <k>:` blocks from `raw_output`. A block runs until the
/// next section marker, an `Answer:` line or the end of the output. Flags
/// are computed against `context_text` and the inclusive word `limits`.
pub fn parse_sections(raw_output: &str, expected: usize, context_text: &str, limits: (usize, usize)) -> SectionParse {
    let mut blocks: Vec<String> = Vec::new();
    let mut open = false;
    for line in raw_output.lines() {
        if let Some(c) = section_marker().captures(line) {
            blocks.push(c[2].to_string());
            open = true;
        } else if answer_line().is_match(line) {
            open = false;
        } else if open && !line.trim().is_empty() {
            let last = blocks.last_mut().expect("open block");
            last.push(' ');
            last.push_str(line.trim());
        }
    }
    let found = blocks.len();
    let mut out = SectionParse::default();
    let normalized_context = collapse_whitespace(context_text);
    for text in blocks {
        let text = strip_quotes(&collapse_whitespace(&text)).to_string();
        if text.is_empty() || out.sections.len() == expected {
            out.extras += 1;
            continue;
        }
        let words = word_count(&text);
        let index = out.sections.len() + 1;
        let section = RetrievedSection {
            index,
            grounded: normalized_context.contains(&text),
            within_limits: (limits.0..=limits.1).contains(&words),
            word_count: words,
            text,
        };
        if !section.within_limits {
            out.deviations.push(Deviation::SectionOutOfLimits { index, words });
        }
        if !section.grounded {
            out.deviations.push(Deviation::SectionUngrounded { index });
        }
        out.sections.push(section);
    }
    if out.sections.is_empty() {
        out.deviations.insert(0, Deviation::NoSections);
    } else if found != expected {
        out.deviations.insert(0, Deviation::SectionCountMismatch { expected, found });
    }
    if out.extras > 0 {
        out.deviations.push(Deviation::ExtraSections { count: out.extras });
    }
    out
}

fn dedup_key(text: &str) -> String {
    collapse_whitespace(text).to_lowercase()
}

/// Runs Implicit RAG for one instance. The single-call branch is taken
/// when the context fits `opts.context_word_budget`.
pub fn run_implicit_rag(
    engine: &PromptEngine,
    instance: &MrcInstance,
    profile: &PlaceholderProfile,
    cfg: &StrategyConfig,
    backend: &dyn Backend,
    opts: &ExecOptions,
) -> Result<Prediction, PipelineError> {
    if cfg.strategy != Strategy::ImplicitRag {
        return Err(PromptError::InvalidConfig(format!("run_implicit_rag called with strategy {}", cfg.strategy)).into());
    }
    cfg.validate()?;
    let plan = chunk_context(&instance.context, opts.context_word_budget, opts.chunk_overlap_words)?;
    let limits = cfg.section_limits();
    let mut usage = Usage::default();
    let mut latency_ms = 0;
    let mut call = |index: usize, prompt| {
        let req = CompletionRequest {
            prompt,
            params: opts.params.clone(),
            tag: RequestTag {
                instance_id: instance.id.clone(),
                strategy: Strategy::ImplicitRag,
                call_index: index,
            },
        };
        let resp = backend
            .complete(&req)
            .map_err(|source| PipelineError::Backend { call_index: index, source })?;
        usage += Usage {
            prompt_words: resp.prompt_words,
            completion_words: resp.completion_words,
        };
        latency_ms += resp.latency_ms;
        Ok::<_, PipelineError>(resp.text)
    };

    if plan.is_single() {
        let prompt = engine.render_irag(instance, profile, cfg)?;
        let raw = call(0, prompt)?;
        let parse = parse_sections(&raw, cfg.irag_num_sections, &instance.context.text, limits);
        let (answer, answer_dev) = answer_of(&raw, Strategy::ImplicitRag);
        let mut deviations = parse.deviations;
        deviations.extend(answer_dev);
        return Ok(Prediction {
            instance_id: instance.id.clone(),
            strategy: Strategy::ImplicitRag,
            raw_output: raw,
            parsed_answer: answer,
            sections: parse.sections,
            qa_pairs: Vec::new(),
            call_count: 1,
            usage,
            latency_ms,
            deviations,
        });
    }

    let words = instance.context.words();
    let mut pooled: Vec<RetrievedSection> = Vec::new();
    let mut seen = HashSet::new();
    let mut deviations = Vec::new();
    for (i, &(lo, hi)) in plan.chunks.iter().enumerate() {
        let chunk_text = words[lo..hi].join(" ");
        let prompt = engine
            .render_irag_retrieve(&chunk_text, instance, profile, cfg)?
            .with_chunk(lo, hi);
        let raw = call(i, prompt)?;
        let parse = parse_sections(&raw, cfg.irag_num_sections, &instance.context.text, limits);
        deviations.extend(parse.deviations);
        for s in parse.sections {
            if seen.insert(dedup_key(&s.text)) {
                pooled.push(s);
            }
        }
    }
    for (i, s) in pooled.iter_mut().enumerate() {
        s.index = i + 1;
    }
    let final_index = plan.len();
    if pooled.is_empty() {
        // Nothing to answer from: the instance scores as a wrong answer.
        return Ok(Prediction {
            instance_id: instance.id.clone(),
            strategy: Strategy::ImplicitRag,
            raw_output: String::new(),
            parsed_answer: String::new(),
            sections: pooled,
            qa_pairs: Vec::new(),
            call_count: final_index,
            usage,
            latency_ms,
            deviations,
        });
    }
    let prompt = engine.render_irag_final(&pooled, instance, profile)?;
    let raw = call(final_index, prompt)?;
    let (answer, answer_dev) = answer_of(&raw, Strategy::ImplicitRag);
    deviations.extend(answer_dev);
    Ok(Prediction {
        instance_id: instance.id.clone(),
        strategy: Strategy::ImplicitRag,
        raw_output: raw,
        parsed_answer: answer,
        sections: pooled,
        qa_pairs: Vec::new(),
        call_count: final_index + 1,
        usage,
        latency_ms,
        deviations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionOverlap {
    /// 1-based section indices.
    pub a: usize,
    pub b: usize,
    pub similarity: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("distinctness needs at least 2 sections, got {0}")]
pub struct TooFewSections(pub usize);

fn word_bag(text: &str) -> HashMap<String, usize> {
    let mut bag = HashMap::new();
    for w in text.split_whitespace() {
        *bag.entry(w.to_lowercase()).or_insert(0) += 1;
    }
    bag
}

/// Multiset Jaccard similarity of the lowercased words of `a` and `b`.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let (x, y) = (word_bag(a), word_bag(b));
    let mut inter = 0;
    let mut union = 0;
    for (w, &n) in &x {
        let m = y.get(w).copied().unwrap_or(0);
        inter += n.min(m);
        union += n.max(m);
    }
    union += y.iter().filter(|(w, _)| !x.contains_key(*w)).map(|(_, &m)| m).sum::<usize>();
    if union == 0 {
        return 1.0;
    }
    inter as f64 / union as f64
}

/// Pairwise word overlap; pairs with similarity above `threshold` are flagged.
pub fn section_distinctness(texts: &[&str], threshold: f64) -> Result<Vec<SectionOverlap>, TooFewSections> {
    if texts.len() < 2 {
        return Err(TooFewSections(texts.len()));
    }
    let mut out = Vec::new();
    for i in 0..texts.len() {
        for j in i + 1..texts.len() {
            let similarity = jaccard(texts[i], texts[j]);
            out.push(SectionOverlap {
                a: i + 1,
                b: j + 1,
                similarity,
                flagged: similarity > threshold,
            });
        }
    }
    Ok(out)
}
