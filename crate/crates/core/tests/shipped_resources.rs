use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use lexflow_core::corpus::load_document_dir;
use lexflow_core::model::validate_annotation;
use lexflow_core::resources::Resources;
use lexflow_core::workers::services::Params;
use lexflow_core::workers::{ServiceOutput, ServiceRegistry};
use lexflow_core::{Annotation, AnnotationKind, Document};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn resources() -> Resources {
    Resources::load(&root().join("resources")).expect("shipped resources load")
}

fn annotate(reg: &ServiceRegistry, svc: &str, doc: &Document) -> Vec<Annotation> {
    match reg.invoke(svc, doc, &Params::new()).unwrap_or_else(|e| panic!("{svc} on {}: {e}", doc.id)) {
        ServiceOutput::Annotations(a) => a,
        ServiceOutput::Result(v) => panic!("{svc} returned {v}"),
    }
}

#[test]
fn workers_cover_every_workflow_topic() {
    let r = resources();
    let ids: BTreeSet<&str> = r.workflows.iter().map(|w| w.id.as_str()).collect();
    assert_eq!(ids, BTreeSet::from(["contract-analysis", "geothermal-analysis", "labour-law-qa", "lkg-population"]));
    let topics: BTreeSet<&str> = r.workers.iter().map(|w| w.topic.as_str()).collect();
    for wf in &r.workflows {
        for n in &wf.nodes {
            assert!(topics.contains(n.topic.as_str()), "no worker for {}", n.topic);
        }
    }
    let reg = ServiceRegistry::new(Arc::new(Resources::default()), None);
    for w in r.workers.iter().filter(|w| !w.service.is_empty()) {
        assert!(reg.has(&w.service), "{} uses unknown service {}", w.worker_id, w.service);
    }
}

#[test]
fn corpus_annotates_cleanly() {
    let r = resources();
    let docs = load_document_dir(&root().join("fixtures/corpus"), "en").unwrap();
    assert_eq!(docs.len(), 20);
    let reg = ServiceRegistry::new(Arc::new(r), None);
    let mut kinds = BTreeSet::new();
    for doc in &docs {
        for svc in ["ner", "timex", "concepts", "references"] {
            for a in annotate(&reg, svc, doc) {
                validate_annotation(&a, doc).unwrap_or_else(|v| panic!("{svc} on {}: {v}", doc.id));
                kinds.insert(a.kind);
            }
        }
    }
    assert_eq!(kinds.len(), 4, "{kinds:?}");
}

#[test]
fn shipped_temporal_rules() {
    let reg = ServiceRegistry::new(Arc::new(resources()), None);
    let cases = [
        ("de", "Geschlossen am 15. März 2019 in Wien.", "2019-03-15"),
        ("de", "Erteilt am 01.02.2022.", "2022-02-01"),
        ("en", "It ends two weeks after 1 March 2020.", "2020-03-15"),
        ("en", "Signed on March 3, 2020.", "2020-03-03"),
        ("en", "Delivered on 2021-09-14.", "2021-09-14"),
    ];
    for (lang, text, want) in cases {
        let anns = annotate(&reg, "timex", &Document::new("http://d/t", text, lang));
        assert_eq!(anns[0].normalized.as_deref(), Some(want), "{text}");
    }
}

#[test]
fn court_senses_split() {
    let reg = ServiceRegistry::new(Arc::new(resources()), None);
    let docs = load_document_dir(&root().join("fixtures/corpus"), "en").unwrap();
    let court_refs = |id: &str| -> BTreeSet<String> {
        let doc = docs.iter().find(|d| d.id == id).unwrap();
        annotate(&reg, "concepts", doc)
            .into_iter()
            .filter(|a| a.kind == AnnotationKind::ConceptMention && a.anchor.eq_ignore_ascii_case("court"))
            .filter_map(|a| a.reference)
            .collect()
    };
    assert_eq!(
        court_refs("http://lkg.local/doc/tennis-facility"),
        BTreeSet::from(["http://lkg.local/taxonomy/court-area".to_string()])
    );
    assert_eq!(
        court_refs("http://lkg.local/doc/judgment-dismissal"),
        BTreeSet::from(["http://lkg.local/taxonomy/court-tribunal".to_string()])
    );
}
