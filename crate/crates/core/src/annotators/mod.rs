//! Deterministic annotation services. Each takes a document plus read-only
//! resources and returns annotations; none of them touches the store.

pub mod concepts;
pub mod matching;
pub mod ner;
pub mod references;
pub mod temporal;
pub mod translate;
pub mod wsd;

pub use concepts::extract_concepts;
pub use ner::{ner_annotate, EntityRecognizer, GazetteerNer};
pub use references::{induce_reference_patterns, resolve_references, Feature, ReferencePattern};
pub use temporal::{extract_temporal, TemporalRule, TemporalRules};
pub use translate::translate_stub;
pub use wsd::{disambiguate, Disambiguator, SenseSignature};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnnotatorError {
    #[error("no labels for language {0}")]
    NoLabelsForLanguage(String),
    #[error("no temporal rules for language {0}")]
    NoRulesForLanguage(String),
    #[error("rule {0} needs an anchor date but none is available")]
    MissingAnchor(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}
