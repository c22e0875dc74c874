use std::path::Path;

use serde_json::Value;

use super::{ensure_valid, finish, load_items, Conversion, IngestError, RecordCtx};
use crate::model::{Context, DatasetTag, GoldAnswer, MrcInstance};

/// Drops the `BEG__`/`__END` entity markup of the CliCR release.
fn strip_markup(text: &str) -> String {
    text.replace("BEG__", "").replace("__END", "")
}

/// Converts CliCR `{"data": [{"document": {"context", "qas": [{"id",
/// "query", "answers": [{"text", ..}]}]}}]}`.
///
/// Every answer text becomes a gold variant (duplicates and blanks dropped).
pub fn convert_clicr(path: &Path) -> Result<Conversion, IngestError> {
    let items = load_items(path)?;
    let mut out = Conversion::default();
    let mut record = 0usize;

    for (d_idx, item) in items.iter().enumerate() {
        let drc = RecordCtx { path, record };
        let doc = item.get("document").unwrap_or(item);
        let text = strip_markup(drc.str_field(doc, "context")?);
        let context_id = match doc.get("title").or_else(|| item.get("source")) {
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            _ => format!("clicr-doc{d_idx}"),
        };
        let context = Context::new(context_id.clone(), text);

        for qa in drc.array_field(doc, "qas")? {
            let rc = RecordCtx { path, record };
            let query = strip_markup(rc.str_field(qa, "query")?);
            let id = match qa.get("id") {
                Some(Value::String(s)) if !s.is_empty() => s.clone(),
                Some(Value::Number(n)) => n.to_string(),
                _ => format!("{context_id}-q{record}"),
            };
            let mut variants: Vec<String> = Vec::new();
            for ans in rc.array_field(qa, "answers")? {
                let t = ans
                    .get("text")
                    .and_then(Value::as_str)
                    .or_else(|| ans.as_str())
                    .ok_or_else(|| rc.err("answer without 'text'"))?;
                let t = strip_markup(t).trim().to_string();
                if !t.is_empty() && !variants.contains(&t) {
                    variants.push(t);
                }
            }
            if variants.is_empty() {
                return Err(rc.err("gold answer set has no non-empty variant"));
            }

            let instance = MrcInstance {
                id,
                dataset: DatasetTag::Clicr,
                context: context.clone(),
                query_text: query.trim().to_string(),
                candidates: Vec::new(),
                gold: GoldAnswer::TextVariants(variants),
            };
            ensure_valid(path, record, &instance)?;
            out.records.push(instance);
            record += 1;
        }
    }
    finish(path, out)
}
