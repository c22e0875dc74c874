use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde_json::Value;

use super::{ensure_valid, finish, load_items, Conversion, ConversionWarning, IngestError, RecordCtx};
use crate::model::{Candidate, Context, DatasetTag, GoldAnswer, MrcInstance};

#[derive(Debug, Clone)]
pub struct BiomrcOptions {
    /// Replace `@entityN` pseudo-ids in abstract and title by the entity's
    /// first surface form, so the model reads names rather than ids.
    pub deanonymize: bool,
}

impl Default for BiomrcOptions {
    fn default() -> Self {
        BiomrcOptions { deanonymize: true }
    }
}

fn entity_id_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"@entity\d+").unwrap())
}

fn quoted_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"'((?:[^'\\]|\\.)*)'|"((?:[^"\\]|\\.)*)""#).unwrap())
}

/// Parses one entity entry.
///
/// Accepted forms: `@entity1 :: ('9606', 'Species') :: ['patients', 'patient']`
/// and the short `@entity1 :: patients`.
fn parse_entity(entry: &str) -> Option<(String, Vec<String>)> {
    let mut parts = entry.split(" :: ");
    let id = parts.next()?.trim();
    if !id.starts_with('@') || id.len() < 2 {
        return None;
    }
    let rest: Vec<&str> = parts.collect();
    let surfaces = match rest.last() {
        None => Vec::new(),
        Some(last) if last.trim_start().starts_with('[') => quoted_re()
            .captures_iter(last)
            .filter_map(|c| c.get(1).or_else(|| c.get(2)))
            .map(|m| m.as_str().trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
        Some(last) => vec![last.trim().to_string()].into_iter().filter(|s| !s.is_empty()).collect(),
    };
    Some((id.to_string(), surfaces))
}

fn merge(candidates: &mut Vec<Candidate>, id: String, surfaces: Vec<String>) {
    let entry = match candidates.iter().position(|c| c.id == id) {
        Some(i) => &mut candidates[i],
        None => {
            candidates.push(Candidate {
                id,
                surface_forms: Vec::new(),
            });
            candidates.last_mut().unwrap()
        }
    };
    for s in surfaces {
        if !entry.surface_forms.contains(&s) {
            entry.surface_forms.push(s);
        }
    }
}

fn deanonymize(text: &str, candidates: &[Candidate]) -> String {
    entity_id_re()
        .replace_all(text, |caps: &regex::Captures| {
            let id = &caps[0];
            candidates
                .iter()
                .find(|c| c.id == id)
                .and_then(|c| c.surface_forms.first().cloned())
                .unwrap_or_else(|| id.to_string())
        })
        .into_owned()
}

/// Converts BioMRC LITE records
/// `{"id"?, "abstract", "title", "entities_list": [..], "answer"}`.
///
/// The title carries the missing entity as `XXXX`. An entity id listed
/// more than once merges into one candidate with all its spellings.
pub fn convert_biomrc(path: &Path, options: &BiomrcOptions) -> Result<Conversion, IngestError> {
    let items = load_items(path)?;
    let mut out = Conversion::default();

    for (record, item) in items.iter().enumerate() {
        let rc = RecordCtx { path, record };
        let abstract_text = rc.str_field(item, "abstract")?;
        let title = rc.str_field(item, "title")?;
        let id = match item.get("id") {
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => format!("biomrc-{record}"),
        };

        let mut candidates = Vec::new();
        for (k, entry) in rc.array_field(item, "entities_list")?.iter().enumerate() {
            let (eid, surfaces) = entry
                .as_str()
                .and_then(parse_entity)
                .ok_or_else(|| rc.err(format!("entities_list[{k}] is not an entity entry")))?;
            merge(&mut candidates, eid, surfaces);
        }
        let answer = rc.str_field(item, "answer")?;
        let (gold_id, gold_surfaces) =
            parse_entity(answer).ok_or_else(|| rc.err("answer is not an entity entry"))?;

        if !candidates.iter().any(|c| c.id == gold_id) {
            out.warnings.push(ConversionWarning {
                record,
                instance_id: id.clone(),
                message: format!("gold entity {gold_id} missing from the candidate list; added from the answer field"),
            });
            merge(&mut candidates, gold_id.clone(), gold_surfaces);
        }
        // Entities without any spelling fall back to their pseudo-id.
        for c in &mut candidates {
            if c.surface_forms.is_empty() {
                c.surface_forms.push(c.id.clone());
            }
        }

        let (context_text, query) = if options.deanonymize {
            (deanonymize(abstract_text, &candidates), deanonymize(title, &candidates))
        } else {
            (abstract_text.to_string(), title.to_string())
        };
        let instance = MrcInstance {
            context: Context::new(id.clone(), context_text),
            id,
            dataset: DatasetTag::Biomrc,
            query_text: query,
            candidates,
            gold: GoldAnswer::OptionRef(gold_id),
        };
        ensure_valid(path, record, &instance)?;
        out.records.push(instance);
    }
    finish(path, out)
}
