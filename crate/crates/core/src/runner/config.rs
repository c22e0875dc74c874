use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::{DecodingParams, OpenAiConfig, DEFAULT_CONTEXT_WORD_BUDGET};
use crate::eval::MatchMode;
use crate::ingest::SampleSpec;
use crate::model::{DatasetTag, Strategy};
use crate::pipeline::{ExecOptions, DEFAULT_CHUNK_OVERLAP_WORDS};
use crate::prompt::StrategyConfig;

use super::RunError;

/// Strategy plus optional overrides of the per-dataset defaults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategySection {
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ar_num_pairs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub irag_num_sections: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub irag_lower_words: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub irag_upper_words: Option<usize>,
}

impl StrategySection {
    pub fn resolve(&self, dataset: DatasetTag) -> StrategyConfig {
        let mut cfg = StrategyConfig::for_dataset(self.strategy, dataset);
        if let Some(v) = self.ar_num_pairs {
            cfg.ar_num_pairs = v;
        }
        if let Some(v) = self.irag_num_sections {
            cfg.irag_num_sections = v;
        }
        if let Some(v) = self.irag_lower_words {
            cfg.irag_lower_words = v;
        }
        if let Some(v) = self.irag_upper_words {
            cfg.irag_upper_words = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Openai,
    Scripted,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSection {
    pub kind: BackendKind,
    /// Script file for `kind = "scripted"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    /// Response cache directory; no caching when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub openai: OpenAiConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSection {
    #[serde(default)]
    pub mode: MatchMode,
    /// Alias pairs for lenient mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aliases: Option<PathBuf>,
}

fn default_parallelism() -> usize {
    4
}

fn default_budget() -> usize {
    DEFAULT_CONTEXT_WORD_BUDGET
}

fn default_overlap() -> usize {
    DEFAULT_CHUNK_OVERLAP_WORDS
}

/// One experiment, read from a TOML file. Relative paths are resolved
/// against the directory of that file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetTag,
    /// Canonical JSONL produced by `convert`.
    pub input: PathBuf,
    pub output_dir: PathBuf,
    /// Row label in comparison tables; defaults to the sample size or "Full".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub strategy: StrategySection,
    /// Absent means the full set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleSpec>,
    pub backend: BackendSection,
    #[serde(default)]
    pub decoding: DecodingParams,
    #[serde(default, rename = "match")]
    pub matching: MatchSection,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_budget")]
    pub context_word_budget: usize,
    #[serde(default = "default_overlap")]
    pub chunk_overlap_words: usize,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, RunError> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base).map_err(|e| match e {
            RunError::Config(m) => RunError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.input);
        fix(&mut self.output_dir);
        if let Some(p) = self.backend.script.as_mut() {
            fix(p);
        }
        if let Some(p) = self.backend.cache_dir.as_mut() {
            fix(p);
        }
        if let Some(p) = self.matching.aliases.as_mut() {
            fix(p);
        }
    }

    pub fn strategy_config(&self) -> StrategyConfig {
        self.strategy.resolve(self.dataset)
    }

    pub fn exec_options(&self) -> ExecOptions {
        ExecOptions {
            params: self.decoding.clone(),
            context_word_budget: self.context_word_budget,
            chunk_overlap_words: self.chunk_overlap_words,
        }
    }

    pub fn sample_label(&self) -> String {
        match (&self.label, &self.sample) {
            (Some(l), _) => l.clone(),
            (None, Some(s)) => s.size.to_string(),
            (None, None) => "Full".into(),
        }
    }

    /// Checks everything that can be checked without calling a backend.
    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if !self.input.is_file() {
            return bad(format!("input {} does not exist", self.input.display()));
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        if self.chunk_overlap_words >= self.context_word_budget {
            return bad(format!(
                "chunk_overlap_words ({}) must be below context_word_budget ({})",
                self.chunk_overlap_words, self.context_word_budget
            ));
        }
        self.strategy_config().validate().map_err(|e| RunError::Config(e.to_string()))?;
        match self.backend.kind {
            BackendKind::Scripted => match &self.backend.script {
                Some(p) if p.is_file() => {}
                Some(p) => return bad(format!("script {} does not exist", p.display())),
                None => return bad("backend.script is required for the scripted backend".into()),
            },
            BackendKind::Openai | BackendKind::Oracle => {}
        }
        if let Some(p) = &self.matching.aliases {
            if !p.is_file() {
                return bad(format!("alias table {} does not exist", p.display()));
            }
        }
        if self.matching.mode == MatchMode::Lenient && self.matching.aliases.is_none() {
            tracing::warn!("lenient matching without an alias table only uses harvested aliases");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
dataset = "mashqa"
input = "data/mashqa.jsonl"
output_dir = "runs/a"

[strategy]
strategy = "implicit_rag"
irag_num_sections = 2

[backend]
kind = "oracle"
"#;

    #[test]
    fn defaults_and_relative_paths() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL, Path::new("/cfg")).unwrap();
        assert_eq!(cfg.input, Path::new("/cfg/data/mashqa.jsonl"));
        assert_eq!(cfg.parallelism, 4);
        assert_eq!(cfg.context_word_budget, DEFAULT_CONTEXT_WORD_BUDGET);
        assert_eq!(cfg.decoding, DecodingParams::default());
        let s = cfg.strategy_config();
        assert_eq!((s.irag_num_sections, s.irag_lower_words, s.irag_upper_words), (2, 0, 300));
        assert_eq!(cfg.sample_label(), "Full");
    }

    #[test]
    fn unknown_strategy_is_a_config_error() {
        let text = MINIMAL.replace("implicit_rag", "zero_shot");
        assert!(matches!(ExperimentConfig::from_toml_str(&text, Path::new(".")), Err(RunError::Config(_))));
    }
}
