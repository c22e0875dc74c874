use std::fmt;

use serde::{Deserialize, Serialize};

/// Text after the answer-normalization pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizedText(String);

impl NormalizedText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.0.split(' ').filter(|t| !t.is_empty())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for NormalizedText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// ASCII punctuation plus the typographic marks models like to emit.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '\u{00A1}' | '\u{00A7}' | '\u{00AB}'
                | '\u{00B6}' | '\u{00B7}' | '\u{00BB}' | '\u{00BF}' | '\u{3001}' | '\u{3002}'
        )
}

/// Lowercase, strip punctuation, drop standalone articles, collapse whitespace.
pub fn normalize(text: &str) -> NormalizedText {
    let lowered = text.to_lowercase();
    let stripped: String = lowered.chars().filter(|&c| !is_punctuation(c)).collect();
    let kept: Vec<&str> = stripped
        .split_whitespace()
        .filter(|w| !ARTICLES.contains(w))
        .collect();
    NormalizedText(kept.join(" "))
}
