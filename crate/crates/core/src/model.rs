//! Canonical records shared by every stage of the pipeline.
//!
//! All four dataset shapes (multiple choice, entity cloze, multi-span
//! extractive, free-text cloze) normalize into one [`MrcInstance`]. Which
//! fields carry meaning is decided by the [`DatasetTag`].

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Whitespace word count, the length unit used everywhere in the harness.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Collapses every run of whitespace to a single space and trims the ends.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetTag {
    Processbank,
    Biomrc,
    Mashqa,
    Clicr,
}

impl DatasetTag {
    pub const ALL: [DatasetTag; 4] = [
        DatasetTag::Processbank,
        DatasetTag::Biomrc,
        DatasetTag::Mashqa,
        DatasetTag::Clicr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetTag::Processbank => "processbank",
            DatasetTag::Biomrc => "biomrc",
            DatasetTag::Mashqa => "mashqa",
            DatasetTag::Clicr => "clicr",
        }
    }

    /// Datasets whose gold answer is one of a closed set of candidates.
    pub fn has_options(self) -> bool {
        matches!(self, DatasetTag::Processbank | DatasetTag::Biomrc)
    }

    pub fn display_name(self) -> &'static str {
        match self {
            DatasetTag::Processbank => "ProcessBank",
            DatasetTag::Biomrc => "BioMRC",
            DatasetTag::Mashqa => "MASH-QA",
            DatasetTag::Clicr => "CliCR",
        }
    }
}

impl fmt::Display for DatasetTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} '{value}'")]
pub struct ParseTagError {
    kind: &'static str,
    value: String,
}

impl FromStr for DatasetTag {
    type Err = ParseTagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "processbank" => Ok(DatasetTag::Processbank),
            "biomrc" => Ok(DatasetTag::Biomrc),
            "mashqa" => Ok(DatasetTag::Mashqa),
            "clicr" => Ok(DatasetTag::Clicr),
            _ => Err(ParseTagError {
                kind: "dataset",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Basic,
    Cot,
    Ar,
    ImplicitRag,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Basic,
        Strategy::Cot,
        Strategy::Ar,
        Strategy::ImplicitRag,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Basic => "basic",
            Strategy::Cot => "cot",
            Strategy::Ar => "ar",
            Strategy::ImplicitRag => "implicit_rag",
        }
    }

    /// Row label used in comparison tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Strategy::Basic => "Basic",
            Strategy::Cot => "CoT",
            Strategy::Ar => "AR",
            Strategy::ImplicitRag => "Implicit RAG",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = ParseTagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "basic" => Ok(Strategy::Basic),
            "cot" => Ok(Strategy::Cot),
            "ar" | "analogical" => Ok(Strategy::Ar),
            "implicit_rag" | "irag" => Ok(Strategy::ImplicitRag),
            _ => Err(ParseTagError {
                kind: "strategy",
                value: s.to_string(),
            }),
        }
    }
}

/// A reading passage.
///
/// `sentence_spans` are `(start, end)` offsets counted in Unicode scalar
/// values, end exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_spans: Option<Vec<(usize, usize)>>,
    pub word_count: usize,
}

impl Context {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Context {
            id: id.into(),
            word_count: word_count(&text),
            text,
            sentence_spans: None,
        }
    }

    pub fn with_sentence_spans(mut self, spans: Vec<(usize, usize)>) -> Self {
        self.sentence_spans = Some(spans);
        self
    }

    /// Text of sentence `index`, if spans are present and the index is valid.
    pub fn sentence(&self, index: usize) -> Option<&str> {
        let (start, end) = *self.sentence_spans.as_ref()?.get(index)?;
        char_slice(&self.text, start, end)
    }

    pub fn words(&self) -> Vec<&str> {
        self.text.split_whitespace().collect()
    }
}

/// Slices `text` by char offsets; `None` when out of bounds or inverted.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let byte_at = |pos: usize| -> Option<usize> {
        if pos == 0 {
            return Some(0);
        }
        text.char_indices()
            .map(|(b, _)| b)
            .chain(std::iter::once(text.len()))
            .nth(pos)
    };
    let s = byte_at(start)?;
    let e = byte_at(end)?;
    text.get(s..e)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub surface_forms: Vec<String>,
}

impl Candidate {
    pub fn new(id: impl Into<String>, surface: impl Into<String>) -> Self {
        Candidate {
            id: id.into(),
            surface_forms: vec![surface.into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum GoldAnswer {
    OptionRef(String),
    TextVariants(Vec<String>),
    SpanSet(Vec<usize>),
}

impl GoldAnswer {
    fn kind(&self) -> &'static str {
        match self {
            GoldAnswer::OptionRef(_) => "option_ref",
            GoldAnswer::TextVariants(_) => "text_variants",
            GoldAnswer::SpanSet(_) => "span_set",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MrcInstance {
    pub id: String,
    pub dataset: DatasetTag,
    pub context: Context,
    pub query_text: String,
    #[serde(default)]
    pub candidates: Vec<Candidate>,
    pub gold: GoldAnswer,
}

impl MrcInstance {
    pub fn candidate(&self, id: &str) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.id == id)
    }

    /// Gold answers as text, in the order an evaluator should consider them.
    ///
    /// Option datasets yield the surface forms of the gold candidate, CliCR
    /// its variant set, and MASH-QA a single string joining the gold
    /// sentences in order.
    pub fn gold_texts(&self) -> Vec<String> {
        match &self.gold {
            GoldAnswer::OptionRef(id) => match self.candidate(id) {
                Some(c) => c.surface_forms.clone(),
                None => vec![id.clone()],
            },
            GoldAnswer::TextVariants(v) => v.clone(),
            GoldAnswer::SpanSet(indices) => {
                let joined = indices
                    .iter()
                    .filter_map(|&i| self.context.sentence(i))
                    .map(str::trim)
                    .collect::<Vec<_>>()
                    .join(" ");
                vec![joined]
            }
        }
    }

    /// The single canonical gold string (first of [`Self::gold_texts`]).
    pub fn primary_gold(&self) -> String {
        self.gold_texts().into_iter().next().unwrap_or_default()
    }
}

/// Lists every violated invariant; an empty list means the record is valid.
pub fn validate_instance(instance: &MrcInstance) -> Vec<String> {
    let mut violations = Vec::new();
    let ds = instance.dataset;

    if instance.id.trim().is_empty() {
        violations.push("id must be non-empty".to_string());
    }
    if instance.query_text.trim().is_empty() {
        violations.push("query_text must be non-empty".to_string());
    }

    let ctx = &instance.context;
    if ctx.text.trim().is_empty() {
        violations.push("context.text must be non-empty".to_string());
    }
    let counted = word_count(&ctx.text);
    if ctx.word_count != counted {
        violations.push(format!(
            "context.word_count must equal the whitespace word count ({} != {counted})",
            ctx.word_count
        ));
    }
    if let Some(spans) = &ctx.sentence_spans {
        let len = ctx.text.chars().count();
        let mut prev_end = 0usize;
        for (i, &(start, end)) in spans.iter().enumerate() {
            if start >= end {
                violations.push(format!("context.sentence_spans[{i}] is empty or inverted"));
            } else if end > len {
                violations.push(format!("context.sentence_spans[{i}] exceeds text bounds"));
            } else if start < prev_end {
                violations.push(format!(
                    "context.sentence_spans[{i}] overlaps or precedes the previous span"
                ));
            }
            prev_end = prev_end.max(end);
        }
    }

    match (ds.has_options(), instance.candidates.is_empty()) {
        (true, true) => violations.push(format!("candidates must be non-empty for {ds}")),
        (false, false) => violations.push(format!("candidates must be empty for {ds}")),
        _ => {}
    }
    let mut seen = HashSet::new();
    for cand in &instance.candidates {
        if !seen.insert(cand.id.as_str()) {
            violations.push(format!("candidate id '{}' is duplicated", cand.id));
        }
        if cand.surface_forms.is_empty() {
            violations.push(format!("candidate '{}' has no surface forms", cand.id));
        }
        if cand.surface_forms.iter().any(|s| s.trim().is_empty()) {
            violations.push(format!("candidate '{}' has an empty surface form", cand.id));
        }
    }

    let expected_kind = match ds {
        DatasetTag::Processbank | DatasetTag::Biomrc => "option_ref",
        DatasetTag::Mashqa => "span_set",
        DatasetTag::Clicr => "text_variants",
    };
    if instance.gold.kind() != expected_kind {
        violations.push(format!("gold variant mismatch for {ds}"));
        return violations;
    }
    match &instance.gold {
        GoldAnswer::OptionRef(id) => {
            if instance.candidate(id).is_none() {
                violations.push(format!("gold option_ref '{id}' names no candidate"));
            }
        }
        GoldAnswer::TextVariants(variants) => {
            if variants.is_empty() {
                violations.push("gold text_variants must be non-empty".to_string());
            }
            if variants.iter().any(|v| v.trim().is_empty()) {
                violations.push("gold text_variants contains an empty variant".to_string());
            }
        }
        GoldAnswer::SpanSet(indices) => {
            if indices.is_empty() {
                violations.push("gold span_set must be non-empty".to_string());
            }
            let n = ctx.sentence_spans.as_ref().map_or(0, Vec::len);
            if ctx.sentence_spans.is_none() {
                violations.push("gold span_set requires context.sentence_spans".to_string());
            } else if let Some(bad) = indices.iter().find(|&&i| i >= n) {
                violations.push(format!("gold span_set index {bad} out of range (0..{n})"));
            }
        }
    }
    violations
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_words: usize,
    pub completion_words: usize,
}

impl std::ops::AddAssign for Usage {
    fn add_assign(&mut self, rhs: Usage) {
        self.prompt_words += rhs.prompt_words;
        self.completion_words += rhs.completion_words;
    }
}

/// A passage extract returned by the model during Implicit RAG.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievedSection {
    pub index: usize,
    pub text: String,
    pub word_count: usize,
    /// Text occurs in the context after whitespace normalization.
    pub grounded: bool,
    pub within_limits: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

/// Departures of the model output from the requested format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Deviation {
    /// No `Answer:` line; the last non-empty line was used instead.
    AnswerMarkerMissing,
    SectionCountMismatch { expected: usize, found: usize },
    NoSections,
    /// Section lines past the requested count, or malformed markers.
    ExtraSections { count: usize },
    SectionOutOfLimits { index: usize, words: usize },
    SectionUngrounded { index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    pub strategy: Strategy,
    pub raw_output: String,
    pub parsed_answer: String,
    #[serde(default)]
    pub sections: Vec<RetrievedSection>,
    #[serde(default)]
    pub qa_pairs: Vec<QaPair>,
    pub call_count: usize,
    pub usage: Usage,
    pub latency_ms: u64,
    #[serde(default)]
    pub deviations: Vec<Deviation>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn processbank() -> MrcInstance {
        MrcInstance {
            id: "pb-1".into(),
            dataset: DatasetTag::Processbank,
            context: Context::new("p1", "Cells divide by mitosis."),
            query_text: "How do cells divide?".into(),
            candidates: vec![Candidate::new("A", "mitosis"), Candidate::new("B", "meiosis")],
            gold: GoldAnswer::OptionRef("A".into()),
        }
    }

    #[test]
    fn well_formed_processbank_is_valid() {
        assert!(validate_instance(&processbank()).is_empty());
    }

    #[test]
    fn mashqa_with_candidates_is_rejected() {
        let text = "One sentence here.";
        let inst = MrcInstance {
            id: "m1".into(),
            dataset: DatasetTag::Mashqa,
            context: Context::new("c", text).with_sentence_spans(vec![(0, text.chars().count())]),
            query_text: "q?".into(),
            candidates: vec![Candidate::new("A", "x")],
            gold: GoldAnswer::SpanSet(vec![0]),
        };
        assert_eq!(
            validate_instance(&inst),
            vec!["candidates must be empty for mashqa".to_string()]
        );
    }

    #[test]
    fn clicr_with_option_gold_is_rejected() {
        let inst = MrcInstance {
            id: "c1".into(),
            dataset: DatasetTag::Clicr,
            context: Context::new("c", "Patient had chest pain."),
            query_text: "@placeholder was diagnosed".into(),
            candidates: vec![],
            gold: GoldAnswer::OptionRef("A".into()),
        };
        assert_eq!(
            validate_instance(&inst),
            vec!["gold variant mismatch for clicr".to_string()]
        );
    }

    #[test]
    fn stale_word_count_and_bad_spans_are_reported() {
        let mut inst = processbank();
        inst.context.word_count = 99;
        inst.context.sentence_spans = Some(vec![(0, 5), (3, 8), (10, 500)]);
        let v = validate_instance(&inst);
        assert_eq!(v.len(), 3, "{v:?}");
        assert!(v[0].starts_with("context.word_count"));
    }

    #[test]
    fn dangling_option_ref_is_reported() {
        let mut inst = processbank();
        inst.gold = GoldAnswer::OptionRef("C".into());
        assert_eq!(validate_instance(&inst), vec!["gold option_ref 'C' names no candidate"]);
    }

    #[test]
    fn gold_is_a_tagged_object_on_the_wire() {
        let json = serde_json::to_value(processbank()).unwrap();
        assert_eq!(json["gold"], serde_json::json!({"kind": "option_ref", "value": "A"}));
        assert_eq!(json["dataset"], "processbank");
    }

    #[test]
    fn char_slicing_handles_multibyte_text() {
        let text = "Ä ß. Über.";
        assert_eq!(char_slice(text, 0, 4), Some("Ä ß."));
        assert_eq!(char_slice(text, 5, 10), Some("Über."));
        assert_eq!(char_slice(text, 5, 11), None);
    }

    #[test]
    fn mashqa_gold_text_joins_sentences_in_order() {
        let text = "First one. Second one. Third one.";
        let inst = MrcInstance {
            id: "m".into(),
            dataset: DatasetTag::Mashqa,
            context: Context::new("c", text)
                .with_sentence_spans(vec![(0, 10), (11, 22), (23, 33)]),
            query_text: "q".into(),
            candidates: vec![],
            gold: GoldAnswer::SpanSet(vec![0, 2]),
        };
        assert_eq!(inst.primary_gold(), "First one. Third one.");
    }
}
