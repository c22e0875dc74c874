use std::path::Path;

use serde_json::Value;

use super::{ensure_valid, finish, load_items, Conversion, IngestError, RecordCtx};
use crate::model::{Context, DatasetTag, GoldAnswer, MrcInstance};

/// Splits on `.`, `!` or `?` followed by whitespace.
///
/// Returns char-offset spans with surrounding whitespace excluded.
pub fn split_sentences(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut start = None;
    for i in 0..chars.len() {
        let c = chars[i];
        if start.is_none() {
            if c.is_whitespace() {
                continue;
            }
            start = Some(i);
        }
        let terminal = matches!(c, '.' | '!' | '?');
        let next_ws = chars.get(i + 1).is_some_and(|n| n.is_whitespace());
        if terminal && next_ws {
            spans.push((start.take().unwrap(), i + 1));
        }
    }
    if let Some(s) = start {
        let mut end = chars.len();
        while end > s && chars[end - 1].is_whitespace() {
            end -= 1;
        }
        spans.push((s, end));
    }
    spans
}

/// Locates source-provided sentence strings in order within `text`.
fn locate_sentences(text: &str, sentences: &[Value], rc: &RecordCtx) -> Result<Vec<(usize, usize)>, IngestError> {
    let mut spans = Vec::with_capacity(sentences.len());
    let mut cursor_byte = 0usize;
    for (k, s) in sentences.iter().enumerate() {
        let s = s
            .as_str()
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| rc.err(format!("sentences[{k}] must be a non-empty string")))?;
        let found = text[cursor_byte..]
            .find(s)
            .ok_or_else(|| rc.err(format!("sentences[{k}] does not occur in the context after sentence {}", k.saturating_sub(1))))?;
        let start_byte = cursor_byte + found;
        let end_byte = start_byte + s.len();
        let start = text[..start_byte].chars().count();
        let end = start + s.chars().count();
        spans.push((start, end));
        cursor_byte = end_byte;
    }
    Ok(spans)
}

fn number(v: &Value) -> Option<usize> {
    v.as_u64().map(|n| n as usize)
}

/// Converts MASH-QA in its SQuAD-style layout.
///
/// `{"data": [{"paragraphs": [{"context", "sentences"?, "qas": [{"id",
/// "question", "answers": [{"answer_start", "text"}], "answer_sentences"?}]}]}]}`.
/// Sentence boundaries come from `sentences` when present, else from
/// [`split_sentences`]. Gold sentences come from `answer_sentences` when
/// present, else every sentence overlapping an answer span.
pub fn convert_mashqa(path: &Path) -> Result<Conversion, IngestError> {
    let articles = load_items(path)?;
    let mut out = Conversion::default();
    let mut record = 0usize;

    for (a_idx, article) in articles.iter().enumerate() {
        let paragraphs = RecordCtx { path, record }.array_field(article, "paragraphs")?;
        for (p_idx, para) in paragraphs.iter().enumerate() {
            let prc = RecordCtx { path, record };
            let text = prc.str_field(para, "context")?;
            let spans = match para.get("sentences").and_then(Value::as_array) {
                Some(sentences) => locate_sentences(text, sentences, &prc)?,
                None => split_sentences(text),
            };
            let context_id = format!("mashqa-a{a_idx}-p{p_idx}");
            let context = Context::new(context_id.clone(), text).with_sentence_spans(spans.clone());

            for qa in prc.array_field(para, "qas")? {
                let rc = RecordCtx { path, record };
                let question = rc.str_field(qa, "question")?;
                let id = match qa.get("id") {
                    Some(Value::String(s)) if !s.is_empty() => s.clone(),
                    Some(Value::Number(n)) => n.to_string(),
                    _ => format!("{context_id}-q{record}"),
                };
                let gold = match qa.get("answer_sentences").and_then(Value::as_array) {
                    Some(indices) => {
                        let mut gold = Vec::with_capacity(indices.len());
                        for v in indices {
                            let i = number(v).ok_or_else(|| rc.err("answer_sentences must hold non-negative integers"))?;
                            if i >= spans.len() {
                                return Err(rc.err(format!(
                                    "gold sentence index {i} out of range ({} sentences)",
                                    spans.len()
                                )));
                            }
                            gold.push(i);
                        }
                        gold
                    }
                    None => {
                        let mut gold = Vec::new();
                        for ans in rc.array_field(qa, "answers")? {
                            let start = ans
                                .get("answer_start")
                                .and_then(number)
                                .ok_or_else(|| rc.err("answer missing 'answer_start'"))?;
                            let len = ans
                                .get("text")
                                .and_then(Value::as_str)
                                .map(|t| t.chars().count())
                                .filter(|&n| n > 0)
                                .ok_or_else(|| rc.err("answer missing 'text'"))?;
                            let end = start + len;
                            let hits: Vec<usize> = spans
                                .iter()
                                .enumerate()
                                .filter(|(_, &(s, e))| s < end && start < e)
                                .map(|(i, _)| i)
                                .collect();
                            if hits.is_empty() {
                                return Err(rc.err(format!("answer span {start}..{end} overlaps no sentence")));
                            }
                            gold.extend(hits);
                        }
                        gold
                    }
                };
                let mut gold = gold;
                gold.sort_unstable();
                gold.dedup();
                if gold.is_empty() {
                    return Err(rc.err("no gold sentences"));
                }

                let instance = MrcInstance {
                    id,
                    dataset: DatasetTag::Mashqa,
                    context: context.clone(),
                    query_text: question.trim().to_string(),
                    candidates: Vec::new(),
                    gold: GoldAnswer::SpanSet(gold),
                };
                ensure_valid(path, record, &instance)?;
                out.records.push(instance);
                record += 1;
            }
        }
    }
    finish(path, out)
}
