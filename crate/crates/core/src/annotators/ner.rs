use super::matching::{select_longest, PhraseMatcher};
use crate::knowledge::{EntityType, Gazetteer};
use crate::model::{Annotation, AnnotationKind, Document};

pub const PROVENANCE: &str = "ner";
pub const ENTITY_TYPE: &str = "entity_type";

/// Anything that can spot and link named entities in a document. The
/// gazetteer baseline implements it; a trained model can slot in behind the
/// same signature.
pub trait EntityRecognizer: Send + Sync {
    fn recognize(&self, doc: &Document) -> Vec<Annotation>;
}

/// Case-sensitive longest-match lookup of gazetteer surface forms.
#[derive(Debug, Clone)]
pub struct GazetteerNer {
    matcher: PhraseMatcher,
    entries: Vec<(EntityType, String)>,
}

impl GazetteerNer {
    pub fn new(gazetteer: &Gazetteer) -> Self {
        let mut matcher = PhraseMatcher::new(false);
        let mut entries = Vec::new();
        for e in gazetteer.entries() {
            let i = entries.len();
            entries.push((e.entity_type, e.reference.clone()));
            for sf in &e.surface_forms {
                matcher.insert(sf, i);
            }
        }
        Self { matcher, entries }
    }
}

impl EntityRecognizer for GazetteerNer {
    fn recognize(&self, doc: &Document) -> Vec<Annotation> {
        select_longest(self.matcher.find_all(&doc.content), |m| (m.begin, m.end))
            .into_iter()
            .map(|m| {
                // the first registered entry wins when surface forms collide
                let (ty, iri) = &self.entries[*m.payloads.iter().min().unwrap()];
                Annotation::over(doc, m.begin, m.end, AnnotationKind::EntityMention, PROVENANCE)
                    .with_reference(iri.as_str())
                    .with_meta(ENTITY_TYPE, ty.to_string())
            })
            .collect()
    }
}

pub fn ner_annotate(doc: &Document, gazetteer: &Gazetteer) -> Vec<Annotation> {
    GazetteerNer::new(gazetteer).recognize(doc)
}
