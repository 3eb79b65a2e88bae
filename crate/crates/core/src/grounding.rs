//! Concept recognition: greedy longest-match of token windows against the
//! normalized entity vocabulary.

use std::collections::HashSet;
use std::path::Path;

use serde::Serialize;

use crate::error::{read_to_string, Result};
use crate::kg::{EntityId, KnowledgeGraph};

/// Single-token concepts that are never grounded.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "an", "the", "is", "are", "was", "were", "be", "been", "am", "of", "to", "in", "on", "at",
    "for", "and", "or", "but", "it", "its", "this", "that", "these", "those", "with", "as", "by",
    "from", "do", "does", "did", "i", "you", "he", "she", "we", "they", "if", "so", "not", "no",
];

/// A lowercase token and its character range `[start, end)` in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Splits on anything that is not alphanumeric; offsets are in characters.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current: Option<Token> = None;
    for (i, c) in text.chars().enumerate() {
        if c.is_alphanumeric() {
            let tok = current.get_or_insert_with(|| Token {
                text: String::new(),
                start: i,
                end: i,
            });
            tok.text.extend(c.to_lowercase());
            tok.end = i + 1;
        } else if let Some(tok) = current.take() {
            tokens.push(tok);
        }
    }
    tokens.extend(current);
    tokens
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GroundedConcepts {
    /// Unique entity ids in order of first mention.
    pub ids: Vec<EntityId>,
    /// Character range of each id's first mention.
    pub spans: Vec<(usize, usize)>,
}

impl GroundedConcepts {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GroundingResult {
    pub question: GroundedConcepts,
    pub answer: GroundedConcepts,
}

#[derive(Debug, Clone)]
pub struct Grounder {
    stopwords: HashSet<String>,
    max_window: usize,
}

impl Grounder {
    pub fn new(kg: &KnowledgeGraph) -> Self {
        Grounder::with_stopwords(kg, DEFAULT_STOPWORDS.iter().map(|s| s.to_string()))
    }

    pub fn with_stopwords(
        kg: &KnowledgeGraph,
        stopwords: impl IntoIterator<Item = String>,
    ) -> Self {
        let max_window = kg
            .entities()
            .iter()
            .map(|e| e.split('_').count())
            .max()
            .unwrap_or(1);
        let stopwords = stopwords
            .into_iter()
            .map(|s| s.trim().to_lowercase())
            .filter(|s| !s.is_empty())
            .collect();
        Grounder {
            stopwords,
            max_window,
        }
    }

    /// Reads a stopword list, one token per line.
    pub fn with_stopword_file(kg: &KnowledgeGraph, path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        Ok(Grounder::with_stopwords(
            kg,
            text.lines().map(str::to_string),
        ))
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    /// Left-to-right greedy longest match; matched tokens are consumed.
    pub fn ground(&self, text: &str, kg: &KnowledgeGraph) -> GroundedConcepts {
        let tokens = tokenize(text);
        let mut out = GroundedConcepts::default();
        let mut i = 0;
        while i < tokens.len() {
            let longest = self.max_window.min(tokens.len() - i);
            let hit = (1..=longest).rev().find_map(|len| {
                if len == 1 && self.is_stopword(&tokens[i].text) {
                    return None;
                }
                let window: Vec<&str> =
                    tokens[i..i + len].iter().map(|t| t.text.as_str()).collect();
                kg.entity_id(&window.join("_")).map(|id| (id, len))
            });
            match hit {
                Some((id, len)) => {
                    if !out.ids.contains(&id) {
                        out.ids.push(id);
                        out.spans.push((tokens[i].start, tokens[i + len - 1].end));
                    }
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }

    /// Grounds both texts independently; a concept may appear on both sides.
    pub fn ground_pair(
        &self,
        question: &str,
        answer: &str,
        kg: &KnowledgeGraph,
    ) -> GroundingResult {
        GroundingResult {
            question: self.ground(question, kg),
            answer: self.ground(answer, kg),
        }
    }
}
