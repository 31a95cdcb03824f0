//! TF-IDF search, hybrid document similarity and question answering.

pub mod index;
pub mod qa;
pub mod similarity;

pub use index::Index;
pub use qa::{answer_question, formulate_query, Answer, DocumentSource, QueryContext};
pub use similarity::{cosine_similarity, entity_jaccard, hybrid_similarity, ReferenceSource, SimilarityConfig};

use thiserror::Error;

use crate::model::Document;
use crate::text::{content_terms, Stopwords};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("cannot index an empty collection")]
    EmptyCollection,
    #[error("document {0} appears twice")]
    DuplicateDocument(String),
    #[error("unknown document {0}")]
    UnknownDocument(String),
    #[error("query has no content terms")]
    EmptyQuery,
    #[error("no answer candidate found")]
    NoMatch,
    #[error("alpha {0} outside [0, 1]")]
    InvalidAlpha(f64),
}

pub fn build_index(collection_id: &str, docs: &[Document], stopwords: &Stopwords) -> Result<Index, RetrievalError> {
    Index::build(collection_id, docs, stopwords)
}

/// Top `k` documents by cosine with the weighted query, ties by id. Only
/// documents with a positive score are returned.
pub fn search(
    index: &Index,
    query: &str,
    language: &str,
    k: usize,
    stopwords: &Stopwords,
) -> Result<Vec<(String, f64)>, RetrievalError> {
    let terms = content_terms(query, language, stopwords);
    if terms.is_empty() {
        return Err(RetrievalError::EmptyQuery);
    }
    let qv = index.query_vector(&terms);
    let mut scored: Vec<(String, f64)> = index
        .doc_ids()
        .filter_map(|id| {
            let v = index.vector(id).ok()?;
            let s = index::dot(&qv, v).clamp(0.0, 1.0);
            (s > 0.0).then(|| (id.to_string(), s))
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k.max(1));
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_text_query_ranks_first() {
        let docs = [
            Document::new("http://d/1", "employment contract termination notice", "en"),
            Document::new("http://d/2", "geothermal drilling permit", "en"),
            Document::new("http://d/3", "employment of drilling staff", "en"),
        ];
        let sw = Stopwords::new();
        let idx = build_index("c", &docs, &sw).unwrap();
        let hits = search(&idx, &docs[1].content, "en", 2, &sw).unwrap();
        assert_eq!(hits[0].0, "http://d/2");
        assert!(hits.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn stopword_query() {
        let mut sw = Stopwords::new();
        sw.insert("en", ["the", "of"]);
        let idx = build_index("c", &[Document::new("http://d/1", "x", "en")], &sw).unwrap();
        assert_eq!(search(&idx, "the of", "en", 3, &sw), Err(RetrievalError::EmptyQuery));
    }
}
