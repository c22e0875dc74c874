//! Source-dataset converters, corpus statistics and seeded subsets.
//!
//! Each converter reads one upstream layout (documented under
//! `docs/datasets/`) and fails on the first record that does not fit it.

mod biomrc;
mod clicr;
mod mashqa;
mod processbank;
mod sample;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{validate_instance, DatasetTag, MrcInstance};

pub use biomrc::{convert_biomrc, BiomrcOptions};
pub use clicr::convert_clicr;
pub use mashqa::{convert_mashqa, split_sentences};
pub use processbank::convert_processbank;
pub use sample::{sample_indices, sample_subset, SampleSpec, SAMPLER_ID};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: no records")]
    NoRecords { path: PathBuf },
    #[error("{path}: record {record}: schema mismatch: {message}")]
    Schema {
        path: PathBuf,
        record: usize,
        message: String,
    },
    #[error("corpus statistics need at least one record")]
    EmptyCorpus,
    #[error("sample size {size} exceeds corpus size {available}")]
    SampleTooLarge { size: usize, available: usize },
    #[error("sample size must be at least 1")]
    EmptySample,
}

/// A non-fatal oddity found while converting; the record is kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionWarning {
    pub record: usize,
    pub instance_id: String,
    pub message: String,
}

impl fmt::Display for ConversionWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "record {} ({}): {}", self.record, self.instance_id, self.message)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Conversion {
    pub records: Vec<MrcInstance>,
    pub warnings: Vec<ConversionWarning>,
}

/// Dispatches to the converter for `dataset` with default options.
pub fn convert(dataset: DatasetTag, path: &Path) -> Result<Conversion, IngestError> {
    match dataset {
        DatasetTag::Processbank => convert_processbank(path),
        DatasetTag::Biomrc => convert_biomrc(path, &BiomrcOptions::default()),
        DatasetTag::Mashqa => convert_mashqa(path),
        DatasetTag::Clicr => convert_clicr(path),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub qa_pairs: usize,
    pub avg_context_words: f64,
    pub max_context_words: usize,
}

impl CorpusStats {
    /// One row shaped like a corpus-statistics table column.
    pub fn table_row(&self, label: &str) -> String {
        format!(
            "{label:<14} QA pairs {:>6}  avg context {:>8.1}  max context {:>6}",
            self.qa_pairs, self.avg_context_words, self.max_context_words
        )
    }
}

pub fn corpus_stats(records: &[MrcInstance]) -> Result<CorpusStats, IngestError> {
    if records.is_empty() {
        return Err(IngestError::EmptyCorpus);
    }
    // Integer sum first so the mean does not depend on record order.
    let total: usize = records.iter().map(|r| r.context.word_count).sum();
    let max = records.iter().map(|r| r.context.word_count).max().unwrap_or(0);
    Ok(CorpusStats {
        qa_pairs: records.len(),
        avg_context_words: total as f64 / records.len() as f64,
        max_context_words: max,
    })
}

// ---- helpers shared by the converters ----

pub(crate) fn read_source(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// Accepts a JSON array, a single object holding a `data` array, or JSONL.
pub(crate) fn load_items(path: &Path) -> Result<Vec<Value>, IngestError> {
    let text = read_source(path)?;
    let trimmed = text.trim_start();
    if trimmed.is_empty() {
        return Err(IngestError::NoRecords {
            path: path.to_path_buf(),
        });
    }
    let json_err = |source| IngestError::Json {
        path: path.to_path_buf(),
        source,
    };
    let items = match serde_json::from_str::<Value>(&text) {
        Ok(Value::Array(items)) => items,
        Ok(Value::Object(mut obj)) => match obj.remove("data") {
            Some(Value::Array(items)) => items,
            _ => vec![Value::Object(obj)],
        },
        Ok(_) => {
            return Err(IngestError::Schema {
                path: path.to_path_buf(),
                record: 0,
                message: "top level must be an array, an object, or JSON lines".into(),
            })
        }
        Err(_) => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<Value>, _>>()
            .map_err(json_err)?,
    };
    if items.is_empty() {
        return Err(IngestError::NoRecords {
            path: path.to_path_buf(),
        });
    }
    Ok(items)
}

pub(crate) struct RecordCtx<'a> {
    pub path: &'a Path,
    pub record: usize,
}

impl RecordCtx<'_> {
    pub fn err(&self, message: impl Into<String>) -> IngestError {
        IngestError::Schema {
            path: self.path.to_path_buf(),
            record: self.record,
            message: message.into(),
        }
    }

    pub fn str_field<'v>(&self, v: &'v Value, key: &str) -> Result<&'v str, IngestError> {
        match v.get(key) {
            Some(Value::String(s)) if !s.trim().is_empty() => Ok(s),
            Some(Value::String(_)) => Err(self.err(format!("field '{key}' is empty"))),
            Some(_) => Err(self.err(format!("field '{key}' must be a string"))),
            None => Err(self.err(format!("missing field '{key}'"))),
        }
    }

    pub fn array_field<'v>(&self, v: &'v Value, key: &str) -> Result<&'v Vec<Value>, IngestError> {
        v.get(key)
            .and_then(Value::as_array)
            .ok_or_else(|| self.err(format!("missing array field '{key}'")))
    }
}

/// Converters promise valid output; a violation here is a converter bug
/// or a source quirk that slipped past the schema checks.
pub(crate) fn ensure_valid(
    path: &Path,
    record: usize,
    instance: &MrcInstance,
) -> Result<(), IngestError> {
    let violations = validate_instance(instance);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(IngestError::Schema {
            path: path.to_path_buf(),
            record,
            message: violations.join("; "),
        })
    }
}

pub(crate) fn finish(path: &Path, conversion: Conversion) -> Result<Conversion, IngestError> {
    if conversion.records.is_empty() {
        return Err(IngestError::NoRecords {
            path: path.to_path_buf(),
        });
    }
    for w in &conversion.warnings {
        tracing::warn!(path = %path.display(), "{w}");
    }
    Ok(conversion)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Candidate, Context, GoldAnswer};

    fn rec(id: &str, text: &str) -> MrcInstance {
        MrcInstance {
            id: id.into(),
            dataset: DatasetTag::Processbank,
            context: Context::new(id, text),
            query_text: "q".into(),
            candidates: vec![Candidate::new("A", "x")],
            gold: GoldAnswer::OptionRef("A".into()),
        }
    }

    #[test]
    fn stats_of_two_records() {
        let s = corpus_stats(&[rec("a", "w w w w"), rec("b", "w w w w w w")]).unwrap();
        assert_eq!(s.qa_pairs, 2);
        assert_eq!(s.avg_context_words, 5.0);
        assert_eq!(s.max_context_words, 6);
    }

    #[test]
    fn stats_of_singleton() {
        let s = corpus_stats(&[rec("a", "word")]).unwrap();
        assert_eq!((s.qa_pairs, s.avg_context_words, s.max_context_words), (1, 1.0, 1));
    }

    #[test]
    fn stats_reject_empty_input() {
        assert!(matches!(corpus_stats(&[]), Err(IngestError::EmptyCorpus)));
    }
}
