//! Worksheet export and tally for judging Implicit RAG retrievals by hand.
//!
//! Each sampled instance gets one row. Annotators fill
//! `final_answer_correct` (yes/no) and `section_relevance`, one
//! `right`/`wrong` per retrieved section separated by commas. An instance
//! counts as a valid retrieval when at least one of its sections is right.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::ingest::sample_indices;
use crate::io::{write_atomic, IoError};
use crate::model::{MrcInstance, Prediction, Strategy};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorksheetRow {
    pub instance_id: String,
    pub query: String,
    pub gold_answer: String,
    pub model_answer: String,
    pub section_count: usize,
    /// `Section k: ...` lines.
    pub sections: String,
    pub final_answer_correct: String,
    pub section_relevance: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relevance {
    Right,
    Wrong,
}

/// Seeded sample of `n` predictions of an Implicit RAG run, in id order,
/// with the judgment columns left empty.
pub fn export_qualitative_sample(
    instances: &[MrcInstance],
    predictions: &[Prediction],
    n: usize,
    seed: u64,
) -> Result<Vec<WorksheetRow>, RunError> {
    if predictions.is_empty() || predictions.iter().any(|p| p.strategy != Strategy::ImplicitRag) {
        return Err(RunError::Qualitative("run lacks sections: not an implicit_rag run".into()));
    }
    let by_id: HashMap<&str, &MrcInstance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut population: Vec<&Prediction> = predictions.iter().collect();
    population.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    let mut picked = sample_indices(population.len(), n, seed)?;
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|i| {
            let p = population[i];
            let instance = by_id
                .get(p.instance_id.as_str())
                .ok_or_else(|| RunError::Qualitative(format!("no instance for prediction '{}'", p.instance_id)))?;
            Ok(WorksheetRow {
                instance_id: p.instance_id.clone(),
                query: instance.query_text.clone(),
                gold_answer: instance.gold_texts().join(" | "),
                model_answer: p.parsed_answer.clone(),
                section_count: p.sections.len(),
                sections: crate::prompt::format_sections(&p.sections),
                final_answer_correct: String::new(),
                section_relevance: String::new(),
            })
        })
        .collect()
}

fn tsv_writer<W: std::io::Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().delimiter(b'\t').from_writer(w)
}

pub fn write_worksheet(path: &Path, rows: &[WorksheetRow]) -> Result<(), RunError> {
    let mut w = tsv_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| RunError::Qualitative(e.to_string()))?;
    Ok(write_atomic(path, &bytes)?)
}

pub fn read_worksheet(path: &Path) -> Result<Vec<WorksheetRow>, RunError> {
    let file = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(file);
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

fn parse_verdict(s: &str) -> Option<bool> {
    match s.trim().to_lowercase().as_str() {
        "1" | "y" | "yes" | "true" | "correct" | "✓" => Some(true),
        "0" | "n" | "no" | "false" | "incorrect" | "✗" => Some(false),
        _ => None,
    }
}

fn parse_relevance(s: &str) -> Option<Relevance> {
    match s.trim().to_lowercase().as_str() {
        "right" | "r" | "1" | "✓" => Some(Relevance::Right),
        "wrong" | "w" | "0" | "✗" => Some(Relevance::Wrong),
        _ => None,
    }
}

/// Final-answer verdict and section judgments of a row; `None` if the row
/// is not fully judged.
fn judgments(row: &WorksheetRow) -> Option<(bool, Vec<Relevance>)> {
    let correct = parse_verdict(&row.final_answer_correct)?;
    let parts: Vec<&str> = row
        .section_relevance
        .split([',', ';', ' '])
        .filter(|p| !p.trim().is_empty())
        .collect();
    let sections = parts.into_iter().map(parse_relevance).collect::<Option<Vec<_>>>()?;
    (sections.len() == row.section_count).then_some((correct, sections))
}

/// One column of the tally: instances with a given final-answer verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitTally<T> {
    pub instances: usize,
    pub with_right_section: usize,
    /// Share with at least one right section; absent for an empty split.
    pub right_share: Option<T>,
    pub wrong_share: Option<T>,
}

impl<T: Scalar> SplitTally<T> {
    fn new(instances: usize, with_right_section: usize) -> Self {
        let share = |k| (instances > 0).then(|| T::ratio(k, instances));
        SplitTally {
            instances,
            with_right_section,
            right_share: share(with_right_section),
            wrong_share: share(instances - with_right_section),
        }
    }

    fn pct(share: Option<T>) -> Option<i64> {
        share.map(|s| (s * T::from_count(100)).round_half_away())
    }

    pub fn right_pct(&self) -> Option<i64> {
        Self::pct(self.right_share)
    }

    pub fn wrong_pct(&self) -> Option<i64> {
        Self::pct(self.wrong_share)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualitativeTally<T> {
    pub correct: SplitTally<T>,
    pub incorrect: SplitTally<T>,
}

impl<T: Scalar> QualitativeTally<T> {
    /// Two rows (Right Section, Wrong Section) by two columns (✓, ✗).
    pub fn render(&self) -> String {
        let cell = |p: Option<i64>| p.map_or("—".to_string(), |p| format!("{p}%"));
        let head = [
            format!("✓ ({})", self.correct.instances),
            format!("✗ ({})", self.incorrect.instances),
        ];
        let w = head.iter().map(|h| h.chars().count()).max().unwrap_or(0).max(4);
        let mut out = format!("{:<13}  {:>w$}  {:>w$}\n", "", head[0], head[1]);
        out.push_str(&format!(
            "{:<13}  {:>w$}  {:>w$}\n",
            "Right Section",
            cell(self.correct.right_pct()),
            cell(self.incorrect.right_pct())
        ));
        out.push_str(&format!(
            "{:<13}  {:>w$}  {:>w$}\n",
            "Wrong Section",
            cell(self.correct.wrong_pct()),
            cell(self.incorrect.wrong_pct())
        ));
        out
    }
}

/// Splits judged rows by final-answer verdict and counts, within each
/// split, the instances with at least one right section.
pub fn tally_qualitative<T: Scalar>(rows: &[WorksheetRow]) -> Result<QualitativeTally<T>, RunError> {
    let mut unjudged = Vec::new();
    let mut counts = [[0usize; 2]; 2]; // [correct?][has right section?]
    for row in rows {
        match judgments(row) {
            Some((correct, sections)) => {
                let right = sections.contains(&Relevance::Right);
                counts[correct as usize][right as usize] += 1;
            }
            None => unjudged.push(row.instance_id.as_str()),
        }
    }
    if !unjudged.is_empty() {
        return Err(RunError::Qualitative(format!("unjudged rows: {}", unjudged.join(", "))));
    }
    let split = |c: [usize; 2]| SplitTally::new(c[0] + c[1], c[1]);
    Ok(QualitativeTally {
        correct: split(counts[1]),
        incorrect: split(counts[0]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn row(id: usize, correct: bool, relevance: &str) -> WorksheetRow {
        WorksheetRow {
            instance_id: format!("i{id:03}"),
            section_count: relevance.split(',').count(),
            final_answer_correct: if correct { "yes" } else { "no" }.into(),
            section_relevance: relevance.into(),
            ..Default::default()
        }
    }

    #[test]
    fn degenerate_split_prints_dash() {
        let rows: Vec<_> = (0..5).map(|i| row(i, false, "wrong,wrong")).collect();
        let t = tally_qualitative::<Ratio<i64>>(&rows).unwrap();
        assert_eq!(t.correct.right_pct(), None);
        assert_eq!((t.incorrect.right_pct(), t.incorrect.wrong_pct()), (Some(0), Some(100)));
        let text = t.render();
        assert!(text.contains('—'), "{text}");
        assert!(text.contains("100%"));
    }

    #[test]
    fn unjudged_rows_are_listed() {
        let mut rows = vec![row(1, true, "right"), row(2, true, "right")];
        rows[1].final_answer_correct.clear();
        rows.push(row(3, true, "right,wrong"));
        rows[2].section_relevance = "right".into(); // one judgment for two sections
        let err = tally_qualitative::<f64>(&rows).unwrap_err().to_string();
        assert_eq!(err, "unjudged rows: i002, i003");
    }

    #[test]
    fn worksheet_round_trips_through_tsv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.tsv");
        let mut r = row(1, true, "right,wrong");
        r.sections = "Section 1: a\tb\nSection 2: \"c\"".into();
        write_worksheet(&path, std::slice::from_ref(&r)).unwrap();
        assert_eq!(read_worksheet(&path).unwrap(), vec![r]);
    }
}
