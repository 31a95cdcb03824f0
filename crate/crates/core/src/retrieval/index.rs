use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::RetrievalError;
use crate::model::Document;
use crate::text::{content_terms, Stopwords};

/// Sparse TF-IDF vector, L2-normalised, keyed by term.
pub type Vector = BTreeMap<String, f64>;

/// Inverted TF-IDF index over one document set.
#[derive(Debug, Clone, Serialize)]
pub struct Index {
    pub collection_id: String,
    /// term -> document id -> raw term frequency
    pub postings: BTreeMap<String, BTreeMap<String, u32>>,
    /// Norm of each document's weighted vector before normalisation.
    pub doc_lengths: BTreeMap<String, f64>,
    pub doc_count: usize,
    pub df: BTreeMap<String, usize>,
    #[serde(skip)]
    vectors: HashMap<String, Vector>,
    #[serde(skip)]
    term_counts: HashMap<String, usize>,
}

pub fn tf_weight(tf: f64) -> f64 {
    if tf > 0.0 {
        1.0 + tf.ln()
    } else {
        0.0
    }
}

impl Index {
    pub fn build(collection_id: &str, docs: &[Document], stopwords: &Stopwords) -> Result<Self, RetrievalError> {
        let counts: Vec<(String, BTreeMap<String, u32>)> = docs
            .iter()
            .map(|d| {
                let mut tf: BTreeMap<String, u32> = BTreeMap::new();
                for t in content_terms(&d.content, &d.language, stopwords) {
                    *tf.entry(t).or_default() += 1;
                }
                (d.id.clone(), tf)
            })
            .collect();
        Self::from_counts(collection_id, counts)
    }

    /// Builds from raw per-document term counts.
    pub fn from_counts(collection_id: &str, counts: Vec<(String, BTreeMap<String, u32>)>) -> Result<Self, RetrievalError> {
        if counts.is_empty() {
            return Err(RetrievalError::EmptyCollection);
        }
        let mut postings: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
        let mut term_counts = HashMap::new();
        for (id, tf) in &counts {
            if term_counts.insert(id.clone(), tf.len()).is_some() {
                return Err(RetrievalError::DuplicateDocument(id.clone()));
            }
            for (term, &n) in tf {
                postings.entry(term.clone()).or_default().insert(id.clone(), n);
            }
        }
        let df = postings.iter().map(|(t, p)| (t.clone(), p.len())).collect();
        let mut index = Index {
            collection_id: collection_id.to_string(),
            postings,
            doc_lengths: BTreeMap::new(),
            doc_count: counts.len(),
            df,
            vectors: HashMap::new(),
            term_counts,
        };
        for (id, tf) in counts {
            let raw: Vector = tf.into_iter().map(|(t, n)| {
                let w = tf_weight(n as f64) * index.idf(&t);
                (t, w)
            }).collect();
            let (vector, norm) = normalize(raw);
            index.doc_lengths.insert(id.clone(), norm);
            index.vectors.insert(id, vector);
        }
        Ok(index)
    }

    pub fn idf(&self, term: &str) -> f64 {
        match self.df.get(term) {
            Some(&df) if df > 0 => (self.doc_count as f64 / df as f64).ln(),
            _ => 0.0,
        }
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.vectors.contains_key(doc_id)
    }

    pub fn vector(&self, doc_id: &str) -> Result<&Vector, RetrievalError> {
        self.vectors.get(doc_id).ok_or_else(|| RetrievalError::UnknownDocument(doc_id.to_string()))
    }

    /// Number of distinct terms indexed for a document.
    pub fn term_count(&self, doc_id: &str) -> usize {
        self.term_counts.get(doc_id).copied().unwrap_or(0)
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.doc_lengths.keys().map(String::as_str)
    }

    /// Weighted, normalised query vector. Terms unknown to the index are
    /// dropped.
    pub fn query_vector(&self, terms: &[String]) -> Vector {
        let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
        for t in terms.iter().filter(|t| self.df.contains_key(t.as_str())) {
            *tf.entry(t).or_default() += 1;
        }
        let raw = tf.into_iter().map(|(t, n)| (t.to_string(), tf_weight(n as f64) * self.idf(t))).collect();
        normalize(raw).0
    }
}

/// Drops zero weights and scales to unit length; returns the original norm.
pub fn normalize(raw: Vector) -> (Vector, f64) {
    let raw: Vector = raw.into_iter().filter(|(_, w)| *w > 0.0).collect();
    let norm = raw.values().map(|w| w * w).sum::<f64>().sqrt();
    if norm == 0.0 {
        return (Vector::new(), 0.0);
    }
    (raw.into_iter().map(|(t, w)| (t, w / norm)).collect(), norm)
}

/// Dot product summed in term order, so `dot(a, b) == dot(b, a)` exactly.
pub fn dot(a: &Vector, b: &Vector) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut shared: Vec<(&String, f64)> = small.iter().filter_map(|(t, w)| large.get(t).map(|v| (t, w * v))).collect();
    shared.sort_by(|x, y| x.0.cmp(y.0));
    shared.into_iter().map(|(_, p)| p).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_document_weights() {
        let docs = [Document::new("http://d/1", "a a b", "en"), Document::new("http://d/2", "c", "en")];
        let idx = Index::build("c", &docs, &Stopwords::new()).unwrap();
        assert_eq!(idx.postings["a"]["http://d/1"], 2);
        let ln2 = 2f64.ln();
        let (wa, wb) = ((1.0 + ln2) * ln2, ln2);
        let norm = (wa * wa + wb * wb).sqrt();
        assert!((idx.doc_lengths["http://d/1"] - norm).abs() < 1e-12);
        assert!((idx.vector("http://d/1").unwrap()["a"] - wa / norm).abs() < 1e-12);
    }

    #[test]
    fn ubiquitous_term_has_zero_idf() {
        let docs = [Document::new("http://d/1", "x y", "en"), Document::new("http://d/2", "x z", "en")];
        let idx = Index::build("c", &docs, &Stopwords::new()).unwrap();
        assert_eq!(idx.idf("x"), 0.0);
        assert!(!idx.vector("http://d/1").unwrap().contains_key("x"));
    }

    #[test]
    fn empty_and_duplicate() {
        assert!(matches!(Index::build("c", &[], &Stopwords::new()), Err(RetrievalError::EmptyCollection)));
        let d = Document::new("http://d/1", "x", "en");
        assert!(matches!(Index::build("c", &[d.clone(), d], &Stopwords::new()), Err(RetrievalError::DuplicateDocument(_))));
    }
}
