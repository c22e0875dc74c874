use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use super::normalize::normalize;
use super::EvalError;

/// Equivalence classes of answer strings (acronym and expansion), keyed by
/// normalized text. Only consulted in lenient matching.
#[derive(Debug, Clone, Default)]
pub struct AliasTable {
    classes: Vec<BTreeSet<String>>,
    index: HashMap<String, usize>,
}

impl AliasTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut t = Self::new();
        for (a, b) in pairs {
            t.add(a, b);
        }
        t
    }

    /// Reads a JSON array of groups, e.g. `[["MI", "myocardial infarction"]]`.
    pub fn from_json_file(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EvalError::Aliases(format!("{}: {e}", path.display())))?;
        let groups: Vec<Vec<String>> = serde_json::from_str(&text)
            .map_err(|e| EvalError::Aliases(format!("{}: {e}", path.display())))?;
        let mut t = Self::new();
        for g in groups {
            for pair in g.windows(2) {
                t.add(&pair[0], &pair[1]);
            }
        }
        Ok(t)
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Declares `a` and `b` equivalent, merging their classes.
    pub fn add(&mut self, a: &str, b: &str) {
        let (a, b) = (normalize(a).into_string(), normalize(b).into_string());
        if a.is_empty() || b.is_empty() || a == b {
            return;
        }
        match (self.index.get(&a).copied(), self.index.get(&b).copied()) {
            (Some(i), Some(j)) if i == j => {}
            (Some(i), Some(j)) => {
                let moved = std::mem::take(&mut self.classes[j]);
                for s in &moved {
                    self.index.insert(s.clone(), i);
                }
                self.classes[i].extend(moved);
            }
            (Some(i), None) => {
                self.classes[i].insert(b.clone());
                self.index.insert(b, i);
            }
            (None, Some(j)) => {
                self.classes[j].insert(a.clone());
                self.index.insert(a, j);
            }
            (None, None) => {
                let i = self.classes.len();
                self.classes.push([a.clone(), b.clone()].into_iter().collect());
                self.index.insert(a, i);
                self.index.insert(b, i);
            }
        }
    }

    /// Other members of the class of `text` (normalized), excluding itself.
    pub fn equivalents(&self, text: &str) -> Vec<String> {
        let key = normalize(text).into_string();
        match self.index.get(&key) {
            Some(&i) => self.classes[i].iter().filter(|s| **s != key).cloned().collect(),
            None => Vec::new(),
        }
    }

    pub fn merge(&mut self, other: &AliasTable) {
        for class in &other.classes {
            let members: Vec<&String> = class.iter().collect();
            for pair in members.windows(2) {
                self.add(pair[0], pair[1]);
            }
        }
    }

    /// Collects `long form (SF)` definitions from running text.
    ///
    /// The short form must be 2-10 characters and its letters must be the
    /// initials of the words immediately before the parenthesis.
    pub fn harvest(text: &str) -> Self {
        static RE: OnceLock<Regex> = OnceLock::new();
        let re = RE.get_or_init(|| Regex::new(r"\(\s*([A-Za-z][A-Za-z0-9-]{1,9})\s*\)").unwrap());
        let mut table = Self::new();
        for caps in re.captures_iter(text) {
            let whole = caps.get(0).unwrap();
            let short = &caps[1];
            let letters: Vec<char> = short
                .chars()
                .filter(char::is_ascii_alphabetic)
                .map(|c| c.to_ascii_lowercase())
                .collect();
            if letters.len() < 2 {
                continue;
            }
            let before: Vec<&str> = text[..whole.start()].split_whitespace().collect();
            if before.len() < letters.len() {
                continue;
            }
            let words = &before[before.len() - letters.len()..];
            let initials_match = words.iter().zip(&letters).all(|(w, l)| {
                w.chars()
                    .find(|c| c.is_alphanumeric())
                    .is_some_and(|c| c.to_ascii_lowercase() == *l)
            });
            if initials_match {
                table.add(&words.join(" "), short);
            }
        }
        table
    }
}
