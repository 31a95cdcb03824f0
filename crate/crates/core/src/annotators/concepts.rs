use std::collections::BTreeSet;

use super::matching::{select_longest, PhraseMatcher};
use super::AnnotatorError;
use crate::knowledge::Taxonomy;
use crate::model::{Annotation, AnnotationKind, Document};
use crate::text::primary_subtag;

pub const PROVENANCE: &str = "concepts";
/// Metadata key listing the candidate concepts of an ambiguous mention.
pub const CANDIDATES: &str = "candidates";
pub const AMBIGUOUS_CONFIDENCE: f64 = 0.5;

/// Label matcher for one language of a taxonomy.
#[derive(Debug, Clone)]
pub struct ConceptMatcher {
    matcher: PhraseMatcher,
    targets: Vec<BTreeSet<String>>,
}

impl ConceptMatcher {
    pub fn new(taxonomy: &Taxonomy, lang: &str) -> Result<Self, AnnotatorError> {
        if !taxonomy.has_language(lang) {
            return Err(AnnotatorError::NoLabelsForLanguage(lang.to_string()));
        }
        let mut labels: Vec<(&str, &BTreeSet<String>)> = taxonomy.labels_in(lang).collect();
        labels.sort();
        let mut matcher = PhraseMatcher::new(true);
        let mut targets = Vec::with_capacity(labels.len());
        for (i, (label, ids)) in labels.into_iter().enumerate() {
            matcher.insert(label, i);
            targets.push(ids.clone());
        }
        Ok(Self { matcher, targets })
    }

    pub fn annotate(&self, doc: &Document) -> Vec<Annotation> {
        let hits = select_longest(self.matcher.find_all(&doc.content), |m| (m.begin, m.end));
        hits.into_iter()
            .map(|m| {
                let ids: BTreeSet<&String> = m.payloads.iter().flat_map(|&p| &self.targets[p]).collect();
                let ann = Annotation::over(doc, m.begin, m.end, AnnotationKind::ConceptMention, PROVENANCE);
                if ids.len() == 1 {
                    ann.with_reference(ids.into_iter().next().unwrap().as_str())
                } else {
                    let joined = ids.into_iter().map(String::as_str).collect::<Vec<_>>().join(" ");
                    ann.with_confidence(AMBIGUOUS_CONFIDENCE).with_meta(CANDIDATES, joined)
                }
            })
            .collect()
    }
}

/// Links every maximal label occurrence in the document's language to its
/// concept. Labels shared by several concepts yield an unresolved mention
/// carrying the candidate list, for word sense disambiguation.
pub fn extract_concepts(doc: &Document, taxonomy: &Taxonomy) -> Result<Vec<Annotation>, AnnotatorError> {
    let lang = if taxonomy.has_language(&doc.language) { &doc.language } else { primary_subtag(&doc.language) };
    Ok(ConceptMatcher::new(taxonomy, lang)?.annotate(doc))
}

/// Candidate concepts of a mention: the listed candidates, or its reference.
pub fn candidates(ann: &Annotation) -> Vec<String> {
    match ann.metadata.get(CANDIDATES) {
        Some(list) => list.split_whitespace().map(str::to_string).collect(),
        None => ann.reference.iter().cloned().collect(),
    }
}
