//! Template assets and `{name}` marker substitution.

use std::collections::HashMap;
use std::path::Path;

use super::{PromptError, PromptKind};
use crate::model::DatasetTag;

macro_rules! asset {
    ($kind:literal, $ds:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/templates/", $kind, "/", $ds, ".txt"))
    };
}

macro_rules! asset_row {
    ($kind:literal) => {
        [
            asset!($kind, "processbank"),
            asset!($kind, "biomrc"),
            asset!($kind, "mashqa"),
            asset!($kind, "clicr"),
        ]
    };
}

const BUILTIN: [[&str; 4]; 6] = [
    asset_row!("basic"),
    asset_row!("cot"),
    asset_row!("ar"),
    asset_row!("irag"),
    asset_row!("irag_retrieve"),
    asset_row!("irag_final"),
];

fn dataset_slot(ds: DatasetTag) -> usize {
    match ds {
        DatasetTag::Processbank => 0,
        DatasetTag::Biomrc => 1,
        DatasetTag::Mashqa => 2,
        DatasetTag::Clicr => 3,
    }
}

fn kind_slot(kind: PromptKind) -> usize {
    match kind {
        PromptKind::Basic => 0,
        PromptKind::Cot => 1,
        PromptKind::Ar => 2,
        PromptKind::Irag => 3,
        PromptKind::IragRetrieve => 4,
        PromptKind::IragFinal => 5,
    }
}

/// One template per (prompt kind, dataset).
#[derive(Debug, Clone)]
pub struct TemplateSet {
    texts: Vec<Vec<String>>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    /// The checked-in templates compiled into the binary.
    pub fn builtin() -> Self {
        TemplateSet {
            texts: BUILTIN
                .iter()
                .map(|row| row.iter().map(|s| s.to_string()).collect())
                .collect(),
        }
    }

    /// Loads `<dir>/<kind>/<dataset>.txt` for every pair, falling back to
    /// the builtin text for files that do not exist.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::builtin();
        for kind in PromptKind::ALL {
            for ds in DatasetTag::ALL {
                let path = dir.join(kind.dir_name()).join(format!("{ds}.txt"));
                if path.exists() {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))?;
                    parse(&text)?;
                    set.texts[kind_slot(kind)][dataset_slot(ds)] = text;
                }
            }
        }
        Ok(set)
    }

    pub fn get(&self, kind: PromptKind, dataset: DatasetTag) -> &str {
        &self.texts[kind_slot(kind)][dataset_slot(dataset)]
    }
}

enum Piece<'a> {
    Literal(&'a str),
    Marker(&'a str),
}

fn parse(template: &str) -> Result<Vec<Piece<'_>>, PromptError> {
    let mut pieces = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        pieces.push(Piece::Literal(&rest[..open]));
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| PromptError::Template("unterminated '{' marker".into()))?;
        let name = &after[..close];
        if name.is_empty() || !name.bytes().all(|b| b.is_ascii_lowercase() || b == b'_') {
            return Err(PromptError::Template(format!("malformed marker '{{{name}}}'")));
        }
        pieces.push(Piece::Marker(name));
        rest = &after[close + 1..];
    }
    if rest.contains('}') {
        return Err(PromptError::Template("stray '}' in template".into()));
    }
    pieces.push(Piece::Literal(rest));
    Ok(pieces)
}

/// Substitutes every marker in one pass. Values are inserted verbatim and
/// never rescanned, so braces inside passages are harmless.
pub fn fill(template: &str, values: &HashMap<&str, String>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len() + values.values().map(String::len).sum::<usize>());
    for piece in parse(template)? {
        match piece {
            Piece::Literal(s) => out.push_str(s),
            Piece::Marker(name) => out.push_str(
                values
                    .get(name)
                    .ok_or_else(|| PromptError::UnresolvedPlaceholder(name.to_string()))?,
            ),
        }
    }
    Ok(out)
}

/// Marker names used by a template, in order of first appearance.
pub fn markers(template: &str) -> Result<Vec<String>, PromptError> {
    let mut names: Vec<String> = Vec::new();
    for piece in parse(template)? {
        if let Piece::Marker(m) = piece {
            if !names.iter().any(|n| n == m) {
                names.push(m.to_string());
            }
        }
    }
    Ok(names)
}
