//! Prompt rendering for the Basic, CoT, AR and Implicit RAG strategies.
//!
//! Prompts are produced only by filling checked-in templates (see
//! `templates/README.md`); nothing here concatenates prompt fragments.

mod templates;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::model::{validate_instance, word_count, DatasetTag, MrcInstance, RetrievedSection, Strategy};

pub use templates::{fill, markers, TemplateSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("invalid instance: {}", .0.join("; "))]
    InvalidInstance(Vec<String>),
    #[error("unresolved placeholder '{{{0}}}'")]
    UnresolvedPlaceholder(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("invalid strategy config: {0}")]
    InvalidConfig(String),
    #[error("chunk text is empty")]
    EmptyChunk,
    #[error("no sections to answer from")]
    NoSections,
}

/// Role and wording slots of the templates for one dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceholderProfile {
    pub profession: String,
    pub context_type: String,
    pub query_type: String,
}

impl PlaceholderProfile {
    pub fn for_dataset(dataset: DatasetTag) -> Self {
        let (profession, context_type, query_type) = match dataset {
            DatasetTag::Processbank => ("biologist", "paragraph", "query"),
            DatasetTag::Biomrc => (
                "biomedical researcher",
                "abstract of the paper",
                "title containing the missing entity",
            ),
            DatasetTag::Mashqa => ("consumer healthcare expert", "healthcare article", "query"),
            DatasetTag::Clicr => (
                "medical expert",
                "clinical case report",
                "query containing the missing entity",
            ),
        };
        PlaceholderProfile {
            profession: profession.into(),
            context_type: context_type.into(),
            query_type: query_type.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    pub ar_num_pairs: usize,
    pub irag_num_sections: usize,
    pub irag_lower_words: usize,
    pub irag_upper_words: usize,
}

impl StrategyConfig {
    /// The tuned hyperparameters for `dataset`.
    pub fn for_dataset(strategy: Strategy, dataset: DatasetTag) -> Self {
        let (sections, lower, upper) = match dataset {
            DatasetTag::Mashqa => (1, 0, 300),
            DatasetTag::Processbank => (2, 50, 200),
            DatasetTag::Biomrc | DatasetTag::Clicr => (3, 50, 200),
        };
        StrategyConfig {
            strategy,
            ar_num_pairs: 3,
            irag_num_sections: sections,
            irag_lower_words: lower,
            irag_upper_words: upper,
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.ar_num_pairs == 0 {
            return Err(PromptError::InvalidConfig("ar_num_pairs must be at least 1".into()));
        }
        if self.irag_num_sections == 0 {
            return Err(PromptError::InvalidConfig("irag_num_sections must be at least 1".into()));
        }
        if self.irag_upper_words <= self.irag_lower_words {
            return Err(PromptError::InvalidConfig(format!(
                "irag_upper_words ({}) must exceed irag_lower_words ({})",
                self.irag_upper_words, self.irag_lower_words
            )));
        }
        Ok(())
    }

    pub fn section_limits(&self) -> (usize, usize) {
        (self.irag_lower_words, self.irag_upper_words)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Basic,
    Cot,
    Ar,
    Irag,
    IragRetrieve,
    IragFinal,
}

impl PromptKind {
    pub const ALL: [PromptKind; 6] = [
        PromptKind::Basic,
        PromptKind::Cot,
        PromptKind::Ar,
        PromptKind::Irag,
        PromptKind::IragRetrieve,
        PromptKind::IragFinal,
    ];

    /// Directory name under `templates/`.
    pub fn dir_name(self) -> &'static str {
        match self {
            PromptKind::Basic => "basic",
            PromptKind::Cot => "cot",
            PromptKind::Ar => "ar",
            PromptKind::Irag => "irag",
            PromptKind::IragRetrieve => "irag_retrieve",
            PromptKind::IragFinal => "irag_final",
        }
    }
}

/// A fully rendered prompt.
///
/// `requested` is the number of pairs (AR) or sections (Implicit RAG) the
/// prompt asks for; `chunk` is the word range of the context shown in a
/// chunk retrieval prompt. Neither is part of the text sent to a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub text: String,
    pub word_count: usize,
    pub kind: PromptKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requested: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk: Option<(usize, usize)>,
}

impl PromptText {
    fn new(text: String, kind: PromptKind, requested: Option<usize>) -> Self {
        PromptText {
            word_count: word_count(&text),
            text,
            kind,
            requested,
            chunk: None,
        }
    }

    pub fn with_chunk(mut self, start_word: usize, end_word: usize) -> Self {
        self.chunk = Some((start_word, end_word));
        self
    }
}

/// Options as shown to the model: spellings of one candidate joined by
/// `" / "`, candidates joined by `"; "`.
pub fn format_options(instance: &MrcInstance) -> String {
    instance
        .candidates
        .iter()
        .map(|c| c.surface_forms.join(" / "))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Sections as shown in the final answer prompt.
pub fn format_sections(sections: &[RetrievedSection]) -> String {
    sections
        .iter()
        .enumerate()
        .map(|(i, s)| format!("Section {}: {}", i + 1, s.text.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, Default)]
pub struct PromptEngine {
    templates: TemplateSet,
}

impl PromptEngine {
    pub fn new(templates: TemplateSet) -> Self {
        PromptEngine { templates }
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    fn base_values<'a>(
        instance: &MrcInstance,
        profile: &PlaceholderProfile,
    ) -> Result<HashMap<&'a str, String>, PromptError> {
        let violations = validate_instance(instance);
        if !violations.is_empty() {
            return Err(PromptError::InvalidInstance(violations));
        }
        let mut v = HashMap::new();
        v.insert("profession", profile.profession.clone());
        v.insert("context_type", profile.context_type.clone());
        v.insert("query_type", profile.query_type.clone());
        v.insert("query_text", instance.query_text.trim().to_string());
        v.insert("context_text", instance.context.text.trim().to_string());
        if !instance.candidates.is_empty() {
            v.insert("options", format_options(instance));
        }
        Ok(v)
    }

    fn irag_values(values: &mut HashMap<&str, String>, cfg: &StrategyConfig) -> Result<(), PromptError> {
        cfg.validate()?;
        values.insert("number_of_sections", cfg.irag_num_sections.to_string());
        values.insert("lower_limit_length", cfg.irag_lower_words.to_string());
        values.insert("upper_limit_length", cfg.irag_upper_words.to_string());
        Ok(())
    }

    fn render(
        &self,
        kind: PromptKind,
        dataset: DatasetTag,
        values: &HashMap<&str, String>,
        requested: Option<usize>,
    ) -> Result<PromptText, PromptError> {
        let text = fill(self.templates.get(kind, dataset), values)?;
        Ok(PromptText::new(text, kind, requested))
    }

    pub fn render_basic(&self, instance: &MrcInstance, profile: &PlaceholderProfile) -> Result<PromptText, PromptError> {
        let values = Self::base_values(instance, profile)?;
        self.render(PromptKind::Basic, instance.dataset, &values, None)
    }

    pub fn render_cot(&self, instance: &MrcInstance, profile: &PlaceholderProfile) -> Result<PromptText, PromptError> {
        let values = Self::base_values(instance, profile)?;
        self.render(PromptKind::Cot, instance.dataset, &values, None)
    }

    pub fn render_ar(
        &self,
        instance: &MrcInstance,
        profile: &PlaceholderProfile,
        cfg: &StrategyConfig,
    ) -> Result<PromptText, PromptError> {
        if cfg.ar_num_pairs == 0 {
            return Err(PromptError::InvalidConfig("ar_num_pairs must be at least 1".into()));
        }
        let mut values = Self::base_values(instance, profile)?;
        values.insert("num_pairs", cfg.ar_num_pairs.to_string());
        self.render(PromptKind::Ar, instance.dataset, &values, Some(cfg.ar_num_pairs))
    }

    pub fn render_irag(
        &self,
        instance: &MrcInstance,
        profile: &PlaceholderProfile,
        cfg: &StrategyConfig,
    ) -> Result<PromptText, PromptError> {
        let mut values = Self::base_values(instance, profile)?;
        Self::irag_values(&mut values, cfg)?;
        self.render(PromptKind::Irag, instance.dataset, &values, Some(cfg.irag_num_sections))
    }

    /// Retrieval-only prompt over one chunk of the context.
    pub fn render_irag_retrieve(
        &self,
        chunk_text: &str,
        instance: &MrcInstance,
        profile: &PlaceholderProfile,
        cfg: &StrategyConfig,
    ) -> Result<PromptText, PromptError> {
        if chunk_text.trim().is_empty() {
            return Err(PromptError::EmptyChunk);
        }
        let mut values = Self::base_values(instance, profile)?;
        Self::irag_values(&mut values, cfg)?;
        values.insert("context_text", chunk_text.trim().to_string());
        self.render(PromptKind::IragRetrieve, instance.dataset, &values, Some(cfg.irag_num_sections))
    }

    /// Answer-only prompt over pooled sections.
    pub fn render_irag_final(
        &self,
        sections: &[RetrievedSection],
        instance: &MrcInstance,
        profile: &PlaceholderProfile,
    ) -> Result<PromptText, PromptError> {
        if sections.is_empty() {
            return Err(PromptError::NoSections);
        }
        let mut values = Self::base_values(instance, profile)?;
        values.remove("context_text");
        values.insert("sections_text", format_sections(sections));
        self.render(PromptKind::IragFinal, instance.dataset, &values, None)
    }

    /// Single-call prompt for `cfg.strategy`.
    pub fn render_for(
        &self,
        instance: &MrcInstance,
        profile: &PlaceholderProfile,
        cfg: &StrategyConfig,
    ) -> Result<PromptText, PromptError> {
        match cfg.strategy {
            Strategy::Basic => self.render_basic(instance, profile),
            Strategy::Cot => self.render_cot(instance, profile),
            Strategy::Ar => self.render_ar(instance, profile, cfg),
            Strategy::ImplicitRag => self.render_irag(instance, profile, cfg),
        }
    }
}
