use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::index::{dot, Index};
use super::RetrievalError;
use crate::knowledge::Taxonomy;
use crate::store::LkgStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    /// Weight of the text component.
    pub alpha: f64,
    pub expansion_depth: usize,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self { alpha: 0.5, expansion_depth: 1 }
    }
}

impl SimilarityConfig {
    pub fn new(alpha: f64, expansion_depth: usize) -> Result<Self, RetrievalError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(RetrievalError::InvalidAlpha(alpha));
        }
        Ok(Self { alpha, expansion_depth })
    }
}

/// Where entity references of a document come from.
pub trait ReferenceSource {
    fn references(&self, doc_id: &str) -> Result<BTreeSet<String>, RetrievalError>;
}

impl ReferenceSource for LkgStore {
    fn references(&self, doc_id: &str) -> Result<BTreeSet<String>, RetrievalError> {
        self.references_of(doc_id).map_err(|_| RetrievalError::UnknownDocument(doc_id.to_string()))
    }
}

impl ReferenceSource for BTreeMap<String, BTreeSet<String>> {
    fn references(&self, doc_id: &str) -> Result<BTreeSet<String>, RetrievalError> {
        self.get(doc_id).cloned().ok_or_else(|| RetrievalError::UnknownDocument(doc_id.to_string()))
    }
}

/// Cosine of the stored vectors. A document compared with itself scores 1
/// whenever it has at least one indexed term; otherwise an empty vector
/// scores 0 against anything.
pub fn cosine_similarity(index: &Index, a: &str, b: &str) -> Result<f64, RetrievalError> {
    let (va, vb) = (index.vector(a)?, index.vector(b)?);
    if a == b && index.term_count(a) > 0 {
        return Ok(1.0);
    }
    Ok(dot(va, vb).clamp(0.0, 1.0))
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => a.intersection(b).count() as f64 / a.union(b).count() as f64,
    }
}

/// Jaccard overlap of the documents' references after expanding each over
/// the taxonomy to `depth` hops.
pub fn entity_jaccard(
    refs: &dyn ReferenceSource,
    taxonomy: &Taxonomy,
    a: &str,
    b: &str,
    depth: usize,
) -> Result<f64, RetrievalError> {
    let ea = taxonomy.expand(&refs.references(a)?, depth);
    let eb = taxonomy.expand(&refs.references(b)?, depth);
    Ok(jaccard(&ea, &eb))
}

/// `alpha * cosine + (1 - alpha) * jaccard`, clamped to [0, 1].
pub fn combine(alpha: f64, cosine: f64, jacc: f64) -> f64 {
    if cosine == jacc {
        return cosine;
    }
    (alpha * cosine + (1.0 - alpha) * jacc).clamp(0.0, 1.0)
}

pub fn hybrid_similarity(
    index: &Index,
    refs: &dyn ReferenceSource,
    taxonomy: &Taxonomy,
    a: &str,
    b: &str,
    cfg: &SimilarityConfig,
) -> Result<f64, RetrievalError> {
    let cos = cosine_similarity(index, a, b)?;
    let jacc = entity_jaccard(refs, taxonomy, a, b, cfg.expansion_depth)?;
    Ok(combine(cfg.alpha, cos, jacc))
}
