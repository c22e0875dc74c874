use std::path::Path;

use serde_json::Value;

use super::{ensure_valid, finish, load_items, Conversion, IngestError, RecordCtx};
use crate::model::{Candidate, Context, DatasetTag, GoldAnswer, MrcInstance};

/// Converts ProcessBank processes, one instance per question.
///
/// Each process is `{"id", "text", "questions": [{"id"?, "q", "a0", "a1",
/// "correct": 0|1}]}`. Options become candidates `A` and `B`. Record
/// numbers in errors count questions across the whole file.
pub fn convert_processbank(path: &Path) -> Result<Conversion, IngestError> {
    let processes = load_items(path)?;
    let mut out = Conversion::default();
    let mut record = 0usize;

    for (p_idx, process) in processes.iter().enumerate() {
        let pctx = RecordCtx { path, record };
        let text = pctx.str_field(process, "text")?;
        let process_id = match process.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => format!("process-{p_idx}"),
        };
        let questions = pctx.array_field(process, "questions")?;

        for (q_idx, question) in questions.iter().enumerate() {
            let rc = RecordCtx { path, record };
            let query = rc
                .str_field(question, "q")
                .map_err(|_| rc.err(format!("process {process_id} question {q_idx}: missing question text 'q'")))?;
            let a0 = rc.str_field(question, "a0")?;
            let a1 = rc.str_field(question, "a1")?;
            let correct = match question.get("correct") {
                Some(Value::Number(n)) => n.as_u64(),
                Some(Value::String(s)) => s.trim().parse().ok(),
                _ => None,
            };
            let gold = match correct {
                Some(0) => "A",
                Some(1) => "B",
                _ => return Err(rc.err("field 'correct' must be 0 or 1")),
            };
            let id = match question.get("id") {
                Some(Value::String(s)) if !s.is_empty() => s.clone(),
                Some(Value::Number(n)) => n.to_string(),
                _ => format!("{process_id}-q{q_idx}"),
            };

            let instance = MrcInstance {
                id,
                dataset: DatasetTag::Processbank,
                context: Context::new(process_id.clone(), text),
                query_text: query.trim().to_string(),
                candidates: vec![
                    Candidate::new("A", a0.trim()),
                    Candidate::new("B", a1.trim()),
                ],
                gold: GoldAnswer::OptionRef(gold.into()),
            };
            ensure_valid(path, record, &instance)?;
            out.records.push(instance);
            record += 1;
        }
    }
    finish(path, out)
}
