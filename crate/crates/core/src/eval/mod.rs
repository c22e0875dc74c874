//! Answer extraction, normalization, gold matching and metrics.
//!
//! Metric arithmetic is generic over [`Scalar`]; the crate root exposes the
//! `f64` instantiations used for reporting.

mod alias;
mod normalize;

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::{Candidate, DatasetTag, GoldAnswer, MrcInstance, Prediction, Strategy};
use crate::scalar::Scalar;

pub use alias::AliasTable;
pub use normalize::{is_punctuation, normalize, NormalizedText};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("model output is empty")]
    EmptyOutput,
    #[error("candidate list is empty")]
    EmptyCandidates,
    #[error("prediction for '{prediction}' scored against instance '{instance}'")]
    IdMismatch { prediction: String, instance: String },
    #[error("nothing to aggregate")]
    NoScores,
    #[error("heterogeneous metrics")]
    HeterogeneousMetrics,
    #[error("alias table: {0}")]
    Aliases(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAnswer {
    pub answer: String,
    /// False when no `Answer:` marker was found and the fallback applied.
    pub marker_found: bool,
}

fn answer_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\banswer\**\s*:\**").unwrap())
}

/// Text after the last `Answer:` marker; without a marker, the last
/// non-empty line.
///
/// The rule is the same for every strategy; `_strategy` is accepted so
/// strategy-specific output formats can be added without touching callers.
pub fn parse_final_answer(raw_output: &str, _strategy: Strategy) -> Result<ParsedAnswer, EvalError> {
    if raw_output.trim().is_empty() {
        return Err(EvalError::EmptyOutput);
    }
    let clean = |s: &str| s.trim().trim_matches('*').trim().to_string();
    if let Some(m) = answer_marker().find_iter(raw_output).last() {
        return Ok(ParsedAnswer {
            answer: clean(&raw_output[m.end()..]),
            marker_found: true,
        });
    }
    let last = raw_output
        .lines()
        .rev()
        .find(|l| !l.trim().is_empty())
        .unwrap_or_default();
    Ok(ParsedAnswer {
        answer: clean(last),
        marker_found: false,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    #[default]
    Strict,
    Lenient,
}

/// How predictions are compared with gold answers. Lenient mode adds the
/// alias table's equivalences on top of strict matching.
#[derive(Debug, Clone, Default)]
pub struct MatchPolicy {
    pub mode: MatchMode,
    pub aliases: AliasTable,
}

impl MatchPolicy {
    pub fn strict() -> Self {
        Self::default()
    }

    pub fn lenient(aliases: AliasTable) -> Self {
        MatchPolicy {
            mode: MatchMode::Lenient,
            aliases,
        }
    }

    /// `text` plus its alias-table equivalents when lenient.
    fn variants(&self, text: &str) -> Vec<String> {
        let mut out = vec![text.to_string()];
        if self.mode == MatchMode::Lenient {
            out.extend(self.aliases.equivalents(text));
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionMatch {
    pub candidate: Option<String>,
    /// Two or more distinct candidates matched the prediction.
    pub ambiguous: bool,
}

fn bare_label(s: &str) -> String {
    s.trim()
        .trim_matches(|c: char| is_punctuation(c) && c != '@')
        .trim()
        .to_lowercase()
}

fn match_exact_forms(pred: &str, candidates: &[Candidate]) -> OptionMatch {
    let target = normalize(pred);
    let mut hits: Vec<&str> = Vec::new();
    if !target.is_empty() {
        for c in candidates {
            if c.surface_forms.iter().any(|s| normalize(s) == target) && !hits.contains(&c.id.as_str()) {
                hits.push(&c.id);
            }
        }
    }
    if hits.is_empty() {
        // A bare candidate id ("@entity3", "B") also counts.
        let label = bare_label(pred);
        if !label.is_empty() {
            hits.extend(
                candidates
                    .iter()
                    .filter(|c| bare_label(&c.id) == label)
                    .map(|c| c.id.as_str()),
            );
        }
    }
    match hits.as_slice() {
        [one] => OptionMatch {
            candidate: Some(one.to_string()),
            ambiguous: false,
        },
        [] => OptionMatch::default(),
        _ => OptionMatch {
            candidate: None,
            ambiguous: true,
        },
    }
}

/// Finds the unique candidate one of whose spellings equals `pred` after
/// normalization.
pub fn match_option(pred: &str, candidates: &[Candidate], policy: &MatchPolicy) -> Result<OptionMatch, EvalError> {
    if candidates.is_empty() {
        return Err(EvalError::EmptyCandidates);
    }
    let strict = match_exact_forms(pred, candidates);
    if strict.candidate.is_some() || policy.mode == MatchMode::Strict {
        return Ok(strict);
    }
    let mut ids: Vec<String> = Vec::new();
    for alt in policy.variants(pred).into_iter().skip(1) {
        if let Some(id) = match_exact_forms(&alt, candidates).candidate {
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
    }
    // Reverse direction: a candidate spelling whose alias equals the prediction.
    let target = normalize(pred);
    for c in candidates {
        let hit = c
            .surface_forms
            .iter()
            .any(|s| policy.aliases.equivalents(s).iter().any(|e| *e == target.as_str()));
        if hit && !ids.contains(&c.id) {
            ids.push(c.id.clone());
        }
    }
    Ok(match ids.len() {
        0 => strict,
        1 => OptionMatch {
            candidate: ids.pop(),
            ambiguous: false,
        },
        _ => OptionMatch {
            candidate: None,
            ambiguous: true,
        },
    })
}

/// 1 when `pred` normalizes to the same text as any gold variant.
pub fn exact_match<S: AsRef<str>>(pred: &str, gold_variants: &[S]) -> u8 {
    let p = normalize(pred);
    u8::from(gold_variants.iter().any(|g| normalize(g.as_ref()) == p))
}

/// Harmonic mean of precision and recall, zero when both are zero.
pub fn f1_of<T: Scalar>(precision: T, recall: T) -> T {
    let sum = precision + recall;
    if sum == T::zero() {
        T::zero()
    } else {
        (T::one() + T::one()) * precision * recall / sum
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

impl<T: Scalar> Prf<T> {
    fn splat(v: T) -> Self {
        Prf {
            precision: v,
            recall: v,
            f1: v,
        }
    }
}

/// Token precision/recall/F1 between two texts after normalization.
pub fn token_prf_single<T: Scalar>(pred: &str, gold: &str) -> Prf<T> {
    let p = normalize(pred);
    let g = normalize(gold);
    let p_tokens: Vec<&str> = p.tokens().collect();
    let g_tokens: Vec<&str> = g.tokens().collect();
    match (p_tokens.is_empty(), g_tokens.is_empty()) {
        (true, true) => return Prf::splat(T::one()),
        (true, false) | (false, true) => return Prf::splat(T::zero()),
        _ => {}
    }
    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for t in &g_tokens {
        *gold_counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &p_tokens {
        if let Some(n) = gold_counts.get_mut(t) {
            if *n > 0 {
                *n -= 1;
                overlap += 1;
            }
        }
    }
    let precision = T::ratio(overlap, p_tokens.len());
    let recall = T::ratio(overlap, g_tokens.len());
    Prf {
        precision,
        recall,
        f1: f1_of(precision, recall),
    }
}

fn better<T: Scalar>(candidate: &Prf<T>, best: &Prf<T>) -> bool {
    candidate.f1 > best.f1 || (candidate.f1 == best.f1 && candidate.recall > best.recall)
}

/// Best [`token_prf_single`] over gold variants: highest F1, ties broken
/// by higher recall, then by variant order. Empty variant lists score 0.
pub fn token_prf<T: Scalar, S: AsRef<str>>(pred: &str, gold_variants: &[S]) -> Prf<T> {
    let mut best: Option<Prf<T>> = None;
    for g in gold_variants {
        let prf = token_prf_single(pred, g.as_ref());
        if best.as_ref().is_none_or(|b| better(&prf, b)) {
            best = Some(prf);
        }
    }
    best.unwrap_or_else(|| Prf::splat(T::zero()))
}

/// Metrics for one instance or a mean over instances. Absent fields do
/// not apply to the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub em: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<T>,
}

impl<T> Default for ScoreSet<T> {
    fn default() -> Self {
        ScoreSet {
            accuracy: None,
            em: None,
            precision: None,
            recall: None,
            f1: None,
        }
    }
}

impl<T: Scalar> ScoreSet<T> {
    pub fn accuracy(value: T) -> Self {
        ScoreSet {
            accuracy: Some(value),
            ..Default::default()
        }
    }

    pub fn extractive(em: T, prf: Prf<T>) -> Self {
        ScoreSet {
            em: Some(em),
            precision: Some(prf.precision),
            recall: Some(prf.recall),
            f1: Some(prf.f1),
            ..Default::default()
        }
    }

    fn fields(&self) -> [Option<T>; 5] {
        [self.accuracy, self.em, self.precision, self.recall, self.f1]
    }

    fn presence(&self) -> [bool; 5] {
        self.fields().map(|f| f.is_some())
    }

    /// Named metrics that are present, in table column order.
    pub fn present(&self) -> Vec<(&'static str, T)> {
        let named = [
            ("Accuracy", self.accuracy),
            ("EM", self.em),
            ("F1", self.f1),
            ("P", self.precision),
            ("R", self.recall),
        ];
        named.into_iter().filter_map(|(n, v)| v.map(|v| (n, v))).collect()
    }

    pub fn to_f64(&self) -> ScoreSet<f64> {
        ScoreSet {
            accuracy: self.accuracy.map(Scalar::as_f64),
            em: self.em.map(Scalar::as_f64),
            precision: self.precision.map(Scalar::as_f64),
            recall: self.recall.map(Scalar::as_f64),
            f1: self.f1.map(Scalar::as_f64),
        }
    }
}

/// Macro average of every present metric.
pub fn aggregate<T: Scalar>(scores: &[ScoreSet<T>]) -> Result<ScoreSet<T>, EvalError> {
    let first = scores.first().ok_or(EvalError::NoScores)?;
    let shape = first.presence();
    if scores.iter().any(|s| s.presence() != shape) {
        return Err(EvalError::HeterogeneousMetrics);
    }
    let n = T::from_count(scores.len());
    let mean = |get: fn(&ScoreSet<T>) -> Option<T>| -> Option<T> {
        get(first)?;
        Some(scores.iter().filter_map(get).fold(T::zero(), |acc, v| acc + v) / n)
    };
    Ok(ScoreSet {
        accuracy: mean(|s| s.accuracy),
        em: mean(|s| s.em),
        precision: mean(|s| s.precision),
        recall: mean(|s| s.recall),
        f1: mean(|s| s.f1),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceScore<T> {
    pub instance_id: String,
    pub scores: ScoreSet<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_option: Option<String>,
    #[serde(default)]
    pub ambiguous: bool,
    /// MASH-QA only: share of gold sentences found verbatim (normalized)
    /// in the prediction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_recall: Option<T>,
}

fn lenient_text_scores<T: Scalar>(pred: &str, golds: &[String], policy: &MatchPolicy) -> (T, Prf<T>) {
    let mut gold_alts: Vec<String> = Vec::new();
    for g in golds {
        for v in policy.variants(g) {
            if !gold_alts.contains(&v) {
                gold_alts.push(v);
            }
        }
    }
    let mut em = 0u8;
    let mut best: Option<Prf<T>> = None;
    for p in policy.variants(pred) {
        em = em.max(exact_match(&p, &gold_alts));
        let prf = token_prf::<T, _>(&p, &gold_alts);
        if best.as_ref().is_none_or(|b| better(&prf, b)) {
            best = Some(prf);
        }
    }
    (T::from_count(em as usize), best.unwrap_or_else(|| Prf::splat(T::zero())))
}

/// Scores one prediction with the metric family of its dataset.
pub fn score_instance<T: Scalar>(
    prediction: &Prediction,
    instance: &MrcInstance,
    policy: &MatchPolicy,
) -> Result<InstanceScore<T>, EvalError> {
    if prediction.instance_id != instance.id {
        return Err(EvalError::IdMismatch {
            prediction: prediction.instance_id.clone(),
            instance: instance.id.clone(),
        });
    }
    let pred = prediction.parsed_answer.as_str();
    let mut out = InstanceScore {
        instance_id: instance.id.clone(),
        scores: ScoreSet::default(),
        matched_option: None,
        ambiguous: false,
        sentence_recall: None,
    };
    match (&instance.gold, instance.dataset) {
        (GoldAnswer::OptionRef(gold_id), DatasetTag::Processbank | DatasetTag::Biomrc) => {
            let m = match_option(pred, &instance.candidates, policy)?;
            let correct = m.candidate.as_deref() == Some(gold_id.as_str());
            out.scores = ScoreSet::accuracy(T::from_count(correct as usize));
            out.matched_option = m.candidate;
            out.ambiguous = m.ambiguous;
        }
        _ => {
            let golds = instance.gold_texts();
            let (em, prf) = match policy.mode {
                MatchMode::Strict => (T::from_count(exact_match(pred, &golds) as usize), token_prf(pred, &golds)),
                MatchMode::Lenient => lenient_text_scores(pred, &golds, policy),
            };
            out.scores = ScoreSet::extractive(em, prf);
            if let GoldAnswer::SpanSet(indices) = &instance.gold {
                let p = normalize(pred);
                let found = indices
                    .iter()
                    .filter_map(|&i| instance.context.sentence(i))
                    .filter(|s| {
                        let s = normalize(s);
                        !s.is_empty() && p.as_str().contains(s.as_str())
                    })
                    .count();
                out.sentence_recall = Some(T::ratio(found, indices.len()));
            }
        }
    }
    Ok(out)
}
