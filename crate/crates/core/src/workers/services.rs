//! Named annotation and analysis services bound to workers.
//!
//! | name         | output                                                |
//! |--------------|-------------------------------------------------------|
//! | `ner`        | gazetteer entity mentions                             |
//! | `timex`      | normalized temporal expressions                       |
//! | `concepts`   | concept mentions, ambiguous ones resolved by WSD      |
//! | `references` | legal references from approved patterns               |
//! | `similarity` | ranked similar documents of a stored collection       |
//! | `qa`         | ranked answer sentences from a stored collection      |
//!
//! Common parameter: `lang` overrides the language used to pick resources.
//! Annotation services return nothing for languages they have no resources
//! for.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{StepError, StoreClient};
use crate::annotators::wsd::{Disambiguator, DEFAULT_THRESHOLD, DEFAULT_WINDOW};
use crate::annotators::{extract_concepts, extract_temporal, ner_annotate, resolve_references, AnnotatorError};
use crate::model::{Annotation, Document};
use crate::resources::Resources;
use crate::retrieval::{answer_question, hybrid_similarity, Index, QueryContext, RetrievalError, SimilarityConfig};

pub const SERVICES: &[&str] = &["ner", "timex", "concepts", "references", "similarity", "qa"];
pub const DEFAULT_LKG_COLLECTION: &str = "lkg";
pub const DEFAULT_FAQ_COLLECTION: &str = "faq";

pub type Params = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum ServiceOutput {
    Annotations(Vec<Annotation>),
    Result(serde_json::Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarDocument {
    pub document_id: String,
    pub score: f64,
}

pub struct ServiceRegistry {
    pub resources: Arc<Resources>,
    store: Option<Arc<dyn StoreClient>>,
}

impl std::fmt::Debug for ServiceRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServiceRegistry").field("store", &self.store.is_some()).finish_non_exhaustive()
    }
}

fn service_err(service: &str, e: impl ToString) -> StepError {
    StepError::Service { service: service.to_string(), message: e.to_string() }
}

fn param<T: std::str::FromStr>(service: &str, params: &Params, key: &str, default: T) -> Result<T, StepError> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| service_err(service, format!("bad parameter {key}={v:?}"))),
    }
}

impl ServiceRegistry {
    /// `store` is needed only by `similarity` and `qa`.
    pub fn new(resources: Arc<Resources>, store: Option<Arc<dyn StoreClient>>) -> Self {
        Self { resources, store }
    }

    pub fn has(&self, name: &str) -> bool {
        SERVICES.contains(&name)
    }

    pub fn invoke(&self, name: &str, doc: &Document, params: &Params) -> Result<ServiceOutput, StepError> {
        let mut view;
        let doc = match params.get("lang") {
            Some(lang) if *lang != doc.language => {
                view = doc.clone();
                view.language = lang.clone();
                &view
            }
            _ => doc,
        };
        let r = &self.resources;
        let annotations = match name {
            "ner" => ner_annotate(doc, &r.gazetteer),
            "timex" => {
                let anchor = match params.get("anchor") {
                    Some(a) => Some(
                        NaiveDate::parse_from_str(a, "%Y-%m-%d").map_err(|_| service_err(name, format!("bad anchor {a:?}")))?,
                    ),
                    None => None,
                };
                skip_unsupported(name, extract_temporal(doc, &r.temporal, anchor))?
            }
            "concepts" => {
                let found = skip_unsupported(name, extract_concepts(doc, &r.taxonomy))?;
                let (mut resolved, ambiguous): (Vec<_>, Vec<_>) = found.into_iter().partition(|a| a.reference.is_some());
                let mut wsd = Disambiguator::new(&r.taxonomy, &r.stopwords);
                wsd.window = param(name, params, "window", DEFAULT_WINDOW)?.max(1);
                wsd.threshold = param(name, params, "threshold", DEFAULT_THRESHOLD)?;
                resolved.extend(wsd.disambiguate(doc, &ambiguous));
                resolved.sort_by(|a, b| a.span_cmp(b));
                resolved
            }
            "references" => resolve_references(doc, &r.patterns),
            "similarity" => return self.similarity(doc, params).map(ServiceOutput::Result),
            "qa" => return self.qa(doc, params).map(ServiceOutput::Result),
            other => return Err(StepError::UnknownService(other.to_string())),
        };
        Ok(ServiceOutput::Annotations(annotations))
    }

    fn store(&self, service: &str) -> Result<&dyn StoreClient, StepError> {
        self.store.as_deref().ok_or_else(|| service_err(service, "no store is attached"))
    }

    /// Hybrid similarity of `doc` against every document of a stored
    /// collection. The incoming document's entities are its gazetteer and
    /// concept references.
    fn similarity(&self, doc: &Document, params: &Params) -> Result<serde_json::Value, StepError> {
        const NAME: &str = "similarity";
        let collection = params.get("collection").map_or(DEFAULT_LKG_COLLECTION, String::as_str);
        let cfg = SimilarityConfig::new(param(NAME, params, "alpha", 0.5)?, param(NAME, params, "depth", 1)?)
            .map_err(|e| service_err(NAME, e))?;
        let k: usize = param(NAME, params, "k", 5)?;
        let stored: Vec<(Document, Vec<Annotation>)> =
            self.store(NAME)?.collection_documents(collection)?.into_iter().filter(|(d, _)| d.id != doc.id).collect();
        let mut refs: BTreeMap<String, BTreeSet<String>> = stored
            .iter()
            .map(|(d, anns)| (d.id.clone(), anns.iter().filter_map(|a| a.reference.clone()).collect()))
            .collect();
        let mut own: BTreeSet<String> = BTreeSet::new();
        for svc in ["ner", "concepts"] {
            if let ServiceOutput::Annotations(anns) = self.invoke(svc, doc, params)? {
                own.extend(anns.into_iter().filter_map(|a| a.reference));
            }
        }
        refs.insert(doc.id.clone(), own);
        let mut docs: Vec<Document> = stored.into_iter().map(|(d, _)| d).collect();
        docs.push(doc.clone());
        let index = Index::build(collection, &docs, &self.resources.stopwords).map_err(|e| service_err(NAME, e))?;
        let mut ranked: Vec<SimilarDocument> = docs[..docs.len() - 1]
            .iter()
            .map(|d| {
                let score = hybrid_similarity(&index, &refs, &self.resources.taxonomy, &doc.id, &d.id, &cfg)?;
                Ok(SimilarDocument { document_id: d.id.clone(), score })
            })
            .collect::<Result<_, RetrievalError>>()
            .map_err(|e| service_err(NAME, e))?;
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.document_id.cmp(&b.document_id)));
        ranked.truncate(k);
        Ok(serde_json::to_value(ranked).expect("serializable"))
    }

    /// Treats the document content as a question over a stored collection.
    fn qa(&self, doc: &Document, params: &Params) -> Result<serde_json::Value, StepError> {
        const NAME: &str = "qa";
        let collection = params.get("collection").map_or(DEFAULT_FAQ_COLLECTION, String::as_str);
        let k: usize = param(NAME, params, "k", 3)?;
        let docs: BTreeMap<String, Document> =
            self.store(NAME)?.collection_documents(collection)?.into_iter().map(|(d, _)| (d.id.clone(), d)).collect();
        if docs.is_empty() {
            return Ok(serde_json::json!([]));
        }
        let mut targets: BTreeSet<String> = docs.values().map(|d| d.language.clone()).collect();
        targets.remove(&doc.language);
        let r = &self.resources;
        let ctx = QueryContext { lexicon: &r.lexicon, taxonomy: &r.taxonomy, stopwords: &r.stopwords, target_langs: &targets };
        let all: Vec<Document> = docs.values().cloned().collect();
        let index = Index::build(collection, &all, &r.stopwords).map_err(|e| service_err(NAME, e))?;
        match answer_question(&doc.content, &doc.language, &index, &docs, &ctx, k) {
            Ok(mut answers) => {
                answers.truncate(k);
                Ok(serde_json::to_value(answers).expect("serializable"))
            }
            Err(RetrievalError::NoMatch) => Ok(serde_json::json!([])),
            Err(e) => Err(service_err(NAME, e)),
        }
    }
}

fn skip_unsupported(service: &str, r: Result<Vec<Annotation>, AnnotatorError>) -> Result<Vec<Annotation>, StepError> {
    match r {
        Ok(v) => Ok(v),
        Err(AnnotatorError::NoRulesForLanguage(_) | AnnotatorError::NoLabelsForLanguage(_)) => Ok(Vec::new()),
        Err(e) => Err(service_err(service, e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotators::TemporalRules;
    use crate::knowledge::{Gazetteer, Taxonomy};
    use crate::store::LkgStore;

    fn registry(store: Option<Arc<dyn StoreClient>>) -> ServiceRegistry {
        let resources = Resources {
            gazetteer: Gazetteer::parse("G org http://e/acme | sf=ACME").unwrap(),
            taxonomy: Taxonomy::parse("t", "C http://t/lease | pref:en=lease\nC http://t/rent | pref:en=rent | related:http://t/lease")
                .unwrap(),
            temporal: TemporalRules::parse("V en MONTH january=1\nT en date | match=<MONTH> <DAY> <YEAR> | norm={Y}-{M}-{D}").unwrap(),
            ..Default::default()
        };
        ServiceRegistry::new(Arc::new(resources), store)
    }

    fn annotations(out: ServiceOutput) -> Vec<Annotation> {
        match out {
            ServiceOutput::Annotations(a) => a,
            ServiceOutput::Result(v) => panic!("unexpected result {v}"),
        }
    }

    #[test]
    fn annotation_services() {
        let reg = registry(None);
        let doc = Document::new("http://d/1", "ACME signed the lease on January 5 2020.", "en");
        let p = Params::new();
        assert_eq!(annotations(reg.invoke("ner", &doc, &p).unwrap()).len(), 1);
        let timex = annotations(reg.invoke("timex", &doc, &p).unwrap());
        assert_eq!(timex[0].normalized.as_deref(), Some("2020-01-05"));
        assert_eq!(annotations(reg.invoke("concepts", &doc, &p).unwrap())[0].reference.as_deref(), Some("http://t/lease"));
        assert!(annotations(reg.invoke("references", &doc, &p).unwrap()).is_empty());
        let es = Document::new("http://d/2", "El contrato.", "es");
        assert!(annotations(reg.invoke("timex", &es, &p).unwrap()).is_empty());
        assert!(matches!(reg.invoke("summarize", &doc, &p), Err(StepError::UnknownService(_))));
        assert!(matches!(reg.invoke("similarity", &doc, &p), Err(StepError::Service { .. })));
    }

    #[test]
    fn similarity_ranks_stored_documents() {
        let store = Arc::new(LkgStore::in_memory());
        let c = store.create_collection(DEFAULT_LKG_COLLECTION).unwrap();
        store.put_document(&c.id, Document::new("http://d/a", "the lease of the flat", "en")).unwrap();
        store.put_document(&c.id, Document::new("http://d/b", "weather report", "en")).unwrap();
        let reg = registry(Some(store.clone()));
        let q = Document::new("http://d/q", "lease flat", "en");
        let ServiceOutput::Result(v) = reg.invoke("similarity", &q, &Params::new()).unwrap() else { panic!() };
        let ranked: Vec<SimilarDocument> = serde_json::from_value(v).unwrap();
        assert_eq!(ranked[0].document_id, "http://d/a");
        assert!(ranked[0].score > ranked[1].score);
    }
}
