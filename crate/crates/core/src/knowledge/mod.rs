//! Vocabulary side of the knowledge graph: taxonomies, lexicon and NER
//! gazetteers. All three are immutable once loaded.

mod gazetteer;
mod lexicon;
mod taxonomy;

pub use gazetteer::{EntityType, Gazetteer, GazetteerEntry};
pub use lexicon::{Lexicon, LexiconEntry};
pub use taxonomy::{Concept, Taxonomy};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{item}: {message}")]
    Invariant { item: String, message: String },
    #[error("unknown concept {0}")]
    UnknownConcept(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl KnowledgeError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        KnowledgeError::Parse { line, message: message.into() }
    }
}

/// Non-blank, non-comment lines with 1-based line numbers.
pub(crate) fn records(source: &str) -> impl Iterator<Item = (usize, &str)> {
    source
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub(crate) fn fields(line: &str) -> impl Iterator<Item = &str> {
    line.split('|').map(str::trim).filter(|f| !f.is_empty())
}
