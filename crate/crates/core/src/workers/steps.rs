use serde::de::DeserializeOwned;
use serde::Serialize;

use super::services::{Params, ServiceOutput, ServiceRegistry, DEFAULT_LKG_COLLECTION};
use super::{
    EnrichedDocument, MemoryClient, StepError, StoreClient, ANNOTATIONS_PREFIX, DOCUMENT, ENRICHED_DOCUMENT, RESULT_PREFIX,
    SOURCE_DOCUMENT, STORED_DOCUMENT_ID,
};
use crate::annotators::translate_stub;
use crate::engine::{VariableValue, Variables};
use crate::knowledge::Lexicon;
use crate::memory::JSON;
use crate::model::{validate_annotation, Annotation, Document};

/// Reads a JSON value held inline or behind a shared-memory reference.
pub fn resolve<T: DeserializeOwned>(vars: &Variables, key: &str, memory: &dyn MemoryClient) -> Result<T, StepError> {
    let bad = |e: serde_json::Error| StepError::BadVariable { key: key.to_string(), message: e.to_string() };
    match vars.get(key).ok_or_else(|| StepError::MissingVariable(key.to_string()))? {
        VariableValue::Inline(v) => serde_json::from_value(v.clone()).map_err(bad),
        VariableValue::SharedRef(k) => serde_json::from_slice(&memory.get(k)?).map_err(bad),
    }
}

/// Stores `value` as JSON under a fresh key.
pub fn share<T: Serialize>(value: &T, memory: &dyn MemoryClient) -> Result<VariableValue, StepError> {
    let bytes = serde_json::to_vec(value).expect("step outputs serialize");
    Ok(VariableValue::SharedRef(memory.put(&bytes, JSON)?))
}

/// Runs one service over `document`. Annotation services produce
/// `annotations:<service>`, analysis services `result:<service>`.
pub fn enrichment_step(
    vars: &Variables,
    service: &str,
    params: &Params,
    registry: &ServiceRegistry,
    memory: &dyn MemoryClient,
) -> Result<Variables, StepError> {
    let doc: Document = resolve(vars, DOCUMENT, memory)?;
    let (key, value) = match registry.invoke(service, &doc, params)? {
        ServiceOutput::Annotations(anns) => (format!("{ANNOTATIONS_PREFIX}{service}"), share(&anns, memory)?),
        ServiceOutput::Result(v) => (format!("{RESULT_PREFIX}{service}"), share(&v, memory)?),
    };
    Ok(Variables::from([(key, value)]))
}

/// Concatenates every annotation list, ordered by
/// `(begin, end, kind, provenance)` with exact duplicates removed.
pub fn merge_annotations(lists: impl IntoIterator<Item = Vec<Annotation>>) -> Vec<Annotation> {
    let mut all: Vec<Annotation> = lists.into_iter().flatten().collect();
    all.sort_by(|a, b| {
        (a.begin, a.end, a.kind, &a.provenance)
            .cmp(&(b.begin, b.end, b.kind, &b.provenance))
            .then_with(|| serde_json::to_string(a).unwrap_or_default().cmp(&serde_json::to_string(b).unwrap_or_default()))
    });
    all.dedup();
    all
}

pub fn create_enriched_document_step(vars: &Variables, memory: &dyn MemoryClient) -> Result<Variables, StepError> {
    let document: Document = resolve(vars, DOCUMENT, memory)?;
    let mut lists = Vec::new();
    for key in vars.keys().filter(|k| k.starts_with(ANNOTATIONS_PREFIX)) {
        lists.push(resolve::<Vec<Annotation>>(vars, key, memory)?);
    }
    let enriched = EnrichedDocument { document, annotations: merge_annotations(lists) };
    Ok(Variables::from([(ENRICHED_DOCUMENT.to_string(), share(&enriched, memory)?)]))
}

/// Stores the enriched document into the collection labelled by the
/// `collection` parameter.
pub fn save_to_lkg_step(
    vars: &Variables,
    params: &Params,
    memory: &dyn MemoryClient,
    store: &dyn StoreClient,
) -> Result<Variables, StepError> {
    let enriched: EnrichedDocument = resolve(vars, ENRICHED_DOCUMENT, memory)?;
    for a in &enriched.annotations {
        validate_annotation(a, &enriched.document)
            .map_err(|v| StepError::BadVariable { key: ENRICHED_DOCUMENT.into(), message: format!("annotation {}: {v}", a.id) })?;
    }
    let label = params.get("collection").map_or(DEFAULT_LKG_COLLECTION, String::as_str);
    let collection_id = store.ensure_collection(label)?;
    let stored = store.put_document(&collection_id, enriched.document)?;
    store.add_annotations(&stored.id, enriched.annotations)?;
    Ok(Variables::from([(STORED_DOCUMENT_ID.to_string(), VariableValue::inline(stored.id))]))
}

/// Replaces `document` with its translation into `target` and keeps the
/// original under `source_document`.
pub fn translation_step(
    vars: &Variables,
    lexicon: &Lexicon,
    target: &str,
    memory: &dyn MemoryClient,
) -> Result<Variables, StepError> {
    let doc: Document = resolve(vars, DOCUMENT, memory)?;
    let translated = translate_stub(&doc, lexicon, target);
    let source = vars.get(DOCUMENT).cloned().expect("resolved above");
    Ok(Variables::from([(DOCUMENT.to_string(), share(&translated, memory)?), (SOURCE_DOCUMENT.to_string(), source)]))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::memory::SharedMemory;
    use crate::model::AnnotationKind;
    use crate::resources::Resources;
    use crate::store::LkgStore;

    fn doc_vars(sm: &SharedMemory, doc: &Document) -> Variables {
        Variables::from([(DOCUMENT.to_string(), share(doc, sm).unwrap())])
    }

    #[test]
    fn enrichment_output_key() {
        let sm = SharedMemory::default();
        let reg = ServiceRegistry::new(Arc::new(Resources::default()), None);
        let doc = Document::new("http://d/1", "Nothing here.", "en");
        let out = enrichment_step(&doc_vars(&sm, &doc), "timex", &Params::new(), &reg, &sm).unwrap();
        let anns: Vec<Annotation> = resolve(&out, "annotations:timex", &sm).unwrap();
        assert!(anns.is_empty());
        assert!(matches!(
            enrichment_step(&Variables::new(), "timex", &Params::new(), &reg, &sm),
            Err(StepError::MissingVariable(k)) if k == DOCUMENT
        ));
    }

    #[test]
    fn merge_keeps_distinct_provenance() {
        let doc = Document::new("http://d/1", "Berlin court", "en");
        let a = Annotation::over(&doc, 0, 6, AnnotationKind::EntityMention, "ner");
        let b = Annotation::over(&doc, 0, 6, AnnotationKind::EntityMention, "other");
        let merged = merge_annotations([vec![a.clone(), b.clone()], vec![a.clone()]]);
        assert_eq!(merged, vec![a, b]);
    }

    #[test]
    fn enriched_with_no_annotations() {
        let sm = SharedMemory::default();
        let doc = Document::new("http://d/1", "x", "en");
        let out = create_enriched_document_step(&doc_vars(&sm, &doc), &sm).unwrap();
        let e: EnrichedDocument = resolve(&out, ENRICHED_DOCUMENT, &sm).unwrap();
        assert_eq!(e.document, doc);
        assert!(e.annotations.is_empty());
    }

    #[test]
    fn save_round_trip_and_rerun() {
        let sm = SharedMemory::default();
        let store = LkgStore::in_memory();
        let doc = Document::new("http://d/1", "Berlin court", "en");
        let ann = Annotation::over(&doc, 0, 6, AnnotationKind::EntityMention, "ner").with_reference("http://e/berlin");
        let enriched = EnrichedDocument { document: doc.clone(), annotations: vec![ann] };
        let vars = Variables::from([(ENRICHED_DOCUMENT.to_string(), share(&enriched, &sm).unwrap())]);
        save_to_lkg_step(&vars, &Params::new(), &sm, &store).unwrap();
        let out = save_to_lkg_step(&vars, &Params::new(), &sm, &store).unwrap();
        assert_eq!(out[STORED_DOCUMENT_ID], VariableValue::inline("http://d/1"));
        let (stored, anns) = store.get_document("http://d/1").unwrap();
        assert_eq!(stored.version, 2);
        assert_eq!(anns.len(), 1);
        assert_eq!(store.list_collections().len(), 1);

        let mut broken = enriched.clone();
        broken.document.id = "http://d/2".into();
        broken.annotations[0].anchor = "Bonn".into();
        broken.annotations[0].document_id = "http://d/2".into();
        let vars = Variables::from([(ENRICHED_DOCUMENT.to_string(), share(&broken, &sm).unwrap())]);
        assert!(save_to_lkg_step(&vars, &Params::new(), &sm, &store).is_err());
        assert!(!store.contains_document("http://d/2"));
    }

    #[test]
    fn translation_keeps_source() {
        let sm = SharedMemory::default();
        let doc = Document::new("http://d/1", "Vertrag", "de");
        let vars = doc_vars(&sm, &doc);
        let out = translation_step(&vars, &Lexicon::default(), "en", &sm).unwrap();
        let t: Document = resolve(&out, DOCUMENT, &sm).unwrap();
        assert_eq!((t.language.as_str(), t.content.as_str()), ("en", "Vertrag"));
        assert_eq!(out[SOURCE_DOCUMENT], vars[DOCUMENT]);
    }
}
