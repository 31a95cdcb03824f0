//! The document manager: collections, documents and stand-off annotations,
//! with an inverted mention index and a triple view of everything stored.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{self, Clock};
use crate::model::{
    document_to_triples, to_ntriples, validate_annotation, validate_document, Annotation, Collection, Document,
    DocumentError, Object, Triple, Violation,
};
use crate::persist::{ChangeLog, LogState, PersistError};

/// Base for IRIs minted by the store.
pub const IRI_BASE: &str = "http://lkg.local/";

const DEFAULT_COMPACT_EVERY: usize = 1000;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown collection {0}")]
    UnknownCollection(String),
    #[error("unknown document {0}")]
    UnknownDocument(String),
    #[error("invalid document: {0}")]
    InvalidDocument(#[from] DocumentError),
    #[error("annotation {id} is invalid: {violation}")]
    InvalidAnnotation { id: String, violation: Violation },
    #[error("storage failure: {0}")]
    Storage(#[from] PersistError),
}

impl StoreError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::UnknownCollection(_) => "unknown-collection",
            StoreError::UnknownDocument(_) => "unknown-document",
            StoreError::InvalidDocument(_) => "invalid-document",
            StoreError::InvalidAnnotation { .. } => "invalid-annotation",
            StoreError::Storage(_) => "storage",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum StoreOp {
    CreateCollection { collection: Collection },
    PutDocument { collection_id: String, document: Document },
    AddAnnotations { document_id: String, annotations: Vec<Annotation> },
    DeleteDocument { document_id: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum StoreRecord {
    Collection(Collection),
    Document(Document),
    Annotations { document_id: String, annotations: Vec<Annotation> },
}

/// Everything the store holds. Equality compares the persisted content only.
#[derive(Debug, Clone, Default)]
pub struct StoreState {
    pub collections: BTreeMap<String, Collection>,
    pub documents: BTreeMap<String, Document>,
    pub annotations: BTreeMap<String, Vec<Annotation>>,
    pub mention_index: BTreeMap<String, BTreeSet<String>>,
    epochs: HashMap<String, u64>,
    next_epoch: u64,
}

impl PartialEq for StoreState {
    fn eq(&self, other: &Self) -> bool {
        self.collections == other.collections
            && self.documents == other.documents
            && self.annotations == other.annotations
            && self.mention_index == other.mention_index
    }
}

impl StoreState {
    fn unindex(&mut self, document_id: &str) {
        let Some(anns) = self.annotations.get(document_id) else { return };
        let refs: BTreeSet<String> = anns.iter().filter_map(|a| a.reference.clone()).collect();
        for r in refs {
            if let Some(set) = self.mention_index.get_mut(&r) {
                set.remove(document_id);
                if set.is_empty() {
                    self.mention_index.remove(&r);
                }
            }
        }
    }

    fn bump_epoch(&mut self, document_id: &str) {
        self.next_epoch += 1;
        self.epochs.insert(document_id.to_string(), self.next_epoch);
    }

    /// Full scan of the state invariants. Returns the first problem found.
    pub fn audit(&self) -> Result<(), String> {
        for c in self.collections.values() {
            let mut seen = HashSet::new();
            for id in &c.document_ids {
                if !seen.insert(id) {
                    return Err(format!("collection {} lists {id} twice", c.id));
                }
                match self.documents.get(id) {
                    None => return Err(format!("collection {} points at missing document {id}", c.id)),
                    Some(d) if d.collection_id != c.id => {
                        return Err(format!("document {id} is listed in {} but belongs to {}", c.id, d.collection_id))
                    }
                    _ => {}
                }
            }
        }
        for d in self.documents.values() {
            let listed = self.collections.get(&d.collection_id).is_some_and(|c| c.document_ids.contains(&d.id));
            if !listed {
                return Err(format!("document {} missing from its collection", d.id));
            }
        }
        let mut expected: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (doc_id, anns) in &self.annotations {
            let Some(doc) = self.documents.get(doc_id) else {
                return Err(format!("annotations stored for missing document {doc_id}"));
            };
            for a in anns {
                validate_annotation(a, doc).map_err(|v| format!("annotation {} on {doc_id}: {v}", a.id))?;
                if let Some(r) = &a.reference {
                    expected.entry(r.clone()).or_default().insert(doc_id.clone());
                }
            }
        }
        if expected != self.mention_index {
            return Err("mention index is not the inverse of stored references".into());
        }
        Ok(())
    }
}

impl LogState for StoreState {
    type Op = StoreOp;
    type Record = StoreRecord;

    fn apply(&mut self, op: &StoreOp) {
        match op {
            StoreOp::CreateCollection { collection } => {
                self.collections.insert(collection.id.clone(), collection.clone());
            }
            StoreOp::PutDocument { collection_id, document } => {
                if let Some(old) = self.documents.get(&document.id) {
                    let old_collection = old.collection_id.clone();
                    if old_collection != *collection_id {
                        if let Some(c) = self.collections.get_mut(&old_collection) {
                            c.document_ids.retain(|d| d != &document.id);
                        }
                    }
                }
                self.unindex(&document.id);
                self.annotations.remove(&document.id);
                if let Some(c) = self.collections.get_mut(collection_id) {
                    if !c.document_ids.contains(&document.id) {
                        c.document_ids.push(document.id.clone());
                    }
                }
                self.documents.insert(document.id.clone(), document.clone());
                self.bump_epoch(&document.id);
            }
            StoreOp::AddAnnotations { document_id, annotations } => {
                for a in annotations {
                    if let Some(r) = &a.reference {
                        self.mention_index.entry(r.clone()).or_default().insert(document_id.clone());
                    }
                }
                self.annotations.entry(document_id.clone()).or_default().extend(annotations.iter().cloned());
            }
            StoreOp::DeleteDocument { document_id } => {
                self.unindex(document_id);
                self.annotations.remove(document_id);
                if let Some(doc) = self.documents.remove(document_id) {
                    if let Some(c) = self.collections.get_mut(&doc.collection_id) {
                        c.document_ids.retain(|d| d != document_id);
                    }
                }
                self.epochs.remove(document_id);
            }
        }
    }

    fn records(&self) -> Vec<StoreRecord> {
        let mut out: Vec<StoreRecord> = self.collections.values().cloned().map(StoreRecord::Collection).collect();
        out.extend(self.documents.values().cloned().map(StoreRecord::Document));
        out.extend(self.annotations.iter().filter(|(_, a)| !a.is_empty()).map(|(id, anns)| StoreRecord::Annotations {
            document_id: id.clone(),
            annotations: anns.clone(),
        }));
        out
    }

    fn restore(records: Vec<StoreRecord>) -> Self {
        let mut state = StoreState::default();
        for r in records {
            match r {
                StoreRecord::Collection(c) => {
                    state.collections.insert(c.id.clone(), c);
                }
                StoreRecord::Document(d) => {
                    state.bump_epoch(&d.id);
                    state.documents.insert(d.id.clone(), d);
                }
                StoreRecord::Annotations { document_id, annotations } => {
                    state.apply(&StoreOp::AddAnnotations { document_id, annotations });
                }
            }
        }
        state
    }
}

/// Single-pattern triple query; `None` components are wildcards.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TriplePattern {
    pub subject: Option<String>,
    pub predicate: Option<String>,
    pub object: Option<ObjectPattern>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ObjectPattern {
    /// Matches exactly this term, including the language tag.
    Exact(Object),
    /// Matches any literal with this lexical form, whatever its tag.
    Lexical(String),
}

impl ObjectPattern {
    /// Parses `<iri>`, `"literal"` / `"literal"@lang`, a bare absolute IRI, or
    /// any other string as a lexical form.
    pub fn parse(s: &str) -> Self {
        let s = s.trim();
        if let Some(iri) = s.strip_prefix('<').and_then(|r| r.strip_suffix('>')) {
            return ObjectPattern::Exact(Object::iri(iri));
        }
        if s.starts_with('"') {
            if let Ok(t) = Triple::parse_line(&format!("<s:s> <p:p> {s} .")) {
                return ObjectPattern::Exact(t.object);
            }
        }
        if crate::model::is_absolute_iri(s) {
            return ObjectPattern::Exact(Object::iri(s));
        }
        ObjectPattern::Lexical(s.to_string())
    }

    pub fn matches(&self, object: &Object) -> bool {
        match (self, object) {
            (ObjectPattern::Exact(o), obj) => o == obj,
            (ObjectPattern::Lexical(v), Object::Literal { value, .. }) => v == value,
            (ObjectPattern::Lexical(_), Object::Iri { .. }) => false,
        }
    }
}

impl TriplePattern {
    pub fn matches(&self, t: &Triple) -> bool {
        self.subject.as_ref().is_none_or(|s| *s == t.subject)
            && self.predicate.as_ref().is_none_or(|p| *p == t.predicate)
            && self.object.as_ref().is_none_or(|o| o.matches(&t.object))
    }
}

/// Order used by [`LkgStore::query_triples`]: subject, predicate, then the
/// object's N-Triples text.
pub fn triple_order(a: &Triple, b: &Triple) -> std::cmp::Ordering {
    (&a.subject, &a.predicate)
        .cmp(&(&b.subject, &b.predicate))
        .then_with(|| a.object.to_string().cmp(&b.object.to_string()))
}

/// Triples of one document, tagged with the (epoch, annotation count) they were built at.
type CachedTriples = ((u64, usize), Arc<Vec<Triple>>);

/// Shareable store handle. Readers never block each other; writers are
/// serialized and each mutation becomes visible atomically.
#[derive(Debug)]
pub struct LkgStore {
    state: RwLock<StoreState>,
    log: Mutex<Option<ChangeLog>>,
    triples: Mutex<HashMap<String, CachedTriples>>,
    clock: Arc<dyn Clock>,
    compact_every: usize,
}

impl LkgStore {
    pub fn in_memory() -> Self {
        Self::with_parts(StoreState::default(), None, clock::system())
    }

    pub fn open(root: &Path) -> Result<Self, StoreError> {
        Self::open_with_clock(root, clock::system())
    }

    pub fn open_with_clock(root: &Path, clock: Arc<dyn Clock>) -> Result<Self, StoreError> {
        let (log, state) = ChangeLog::open::<StoreState>(root)?;
        Ok(Self::with_parts(state, Some(log), clock))
    }

    fn with_parts(state: StoreState, log: Option<ChangeLog>, clock: Arc<dyn Clock>) -> Self {
        Self {
            state: RwLock::new(state),
            log: Mutex::new(log),
            triples: Mutex::new(HashMap::new()),
            clock,
            compact_every: DEFAULT_COMPACT_EVERY,
        }
    }

    pub fn set_compact_every(&mut self, n: usize) {
        self.compact_every = n.max(1);
    }

    /// Logs `op`, then applies it under the write lock. Caller holds the
    /// writer mutex.
    fn commit(&self, log: &mut Option<ChangeLog>, op: StoreOp) -> Result<(), StoreError> {
        if let Some(l) = log.as_mut() {
            l.append(&op)?;
        }
        let mut st = self.state.write();
        st.apply(&op);
        if let Some(l) = log.as_mut() {
            if l.ops_since_compaction() >= self.compact_every {
                l.compact(&*st)?;
            }
        }
        Ok(())
    }

    pub fn compact(&self) -> Result<(), StoreError> {
        let mut log = self.log.lock();
        if let Some(l) = log.as_mut() {
            l.compact(&*self.state.read())?;
        }
        Ok(())
    }

    pub fn create_collection(&self, label: &str) -> Result<Collection, StoreError> {
        let mut log = self.log.lock();
        let collection = Collection {
            id: format!("{IRI_BASE}collection/{}", uuid::Uuid::new_v4()),
            label: label.to_string(),
            document_ids: Vec::new(),
        };
        self.commit(&mut log, StoreOp::CreateCollection { collection: collection.clone() })?;
        Ok(collection)
    }

    pub fn get_collection(&self, id: &str) -> Result<Collection, StoreError> {
        self.state.read().collections.get(id).cloned().ok_or_else(|| StoreError::UnknownCollection(id.to_string()))
    }

    pub fn list_collections(&self) -> Vec<Collection> {
        self.state.read().collections.values().cloned().collect()
    }

    /// Inserts or replaces a document. Replacing bumps the version and drops
    /// all annotations, since their offsets no longer apply.
    pub fn put_document(&self, collection_id: &str, mut doc: Document) -> Result<Document, StoreError> {
        let mut log = self.log.lock();
        {
            let st = self.state.read();
            if !st.collections.contains_key(collection_id) {
                return Err(StoreError::UnknownCollection(collection_id.to_string()));
            }
            doc.version = 1;
            validate_document(&doc)?;
            doc.version = st.documents.get(&doc.id).map_or(1, |d| d.version + 1);
        }
        doc.collection_id = collection_id.to_string();
        self.commit(&mut log, StoreOp::PutDocument { collection_id: collection_id.to_string(), document: doc.clone() })?;
        Ok(doc)
    }

    /// Appends a batch atomically. Annotations whose
    /// `(begin, end, kind, reference, provenance)` already exists are skipped.
    pub fn add_annotations(&self, document_id: &str, anns: Vec<Annotation>) -> Result<usize, StoreError> {
        let mut log = self.log.lock();
        let fresh = {
            let st = self.state.read();
            let doc = st.documents.get(document_id).ok_or_else(|| StoreError::UnknownDocument(document_id.to_string()))?;
            for a in &anns {
                validate_annotation(a, doc)
                    .map_err(|violation| StoreError::InvalidAnnotation { id: a.id.clone(), violation })?;
            }
            let existing = st.annotations.get(document_id).map(Vec::as_slice).unwrap_or(&[]);
            let mut seen: HashSet<_> = existing.iter().map(identity_key).collect();
            let mut ids: HashSet<String> = existing.iter().map(|a| a.id.clone()).collect();
            let now = self.clock.now_ms();
            let mut fresh = Vec::new();
            for mut a in anns {
                if !seen.insert(identity_key(&a)) {
                    continue;
                }
                if a.created_at == 0 {
                    a.created_at = now;
                }
                if ids.contains(&a.id) {
                    let base = a.id.clone();
                    let mut n = 2;
                    while ids.contains(&format!("{base}-{n}")) {
                        n += 1;
                    }
                    a.id = format!("{base}-{n}");
                }
                ids.insert(a.id.clone());
                fresh.push(a);
            }
            fresh
        };
        let added = fresh.len();
        if added > 0 {
            self.commit(&mut log, StoreOp::AddAnnotations { document_id: document_id.to_string(), annotations: fresh })?;
        }
        Ok(added)
    }

    /// Current document and its annotations sorted by `(begin, end, kind)`.
    pub fn get_document(&self, document_id: &str) -> Result<(Document, Vec<Annotation>), StoreError> {
        let st = self.state.read();
        let doc = st.documents.get(document_id).ok_or_else(|| StoreError::UnknownDocument(document_id.to_string()))?;
        let mut anns = st.annotations.get(document_id).cloned().unwrap_or_default();
        anns.sort_by(Annotation::span_cmp);
        Ok((doc.clone(), anns))
    }

    pub fn contains_document(&self, document_id: &str) -> bool {
        self.state.read().documents.contains_key(document_id)
    }

    pub fn document_ids(&self) -> Vec<String> {
        self.state.read().documents.keys().cloned().collect()
    }

    pub fn documents(&self) -> Vec<Document> {
        self.state.read().documents.values().cloned().collect()
    }

    pub fn delete_document(&self, document_id: &str) -> Result<(), StoreError> {
        let mut log = self.log.lock();
        if !self.state.read().documents.contains_key(document_id) {
            return Err(StoreError::UnknownDocument(document_id.to_string()));
        }
        self.commit(&mut log, StoreOp::DeleteDocument { document_id: document_id.to_string() })?;
        self.triples.lock().remove(document_id);
        Ok(())
    }

    pub fn query_documents_by_reference(&self, reference: &str) -> BTreeSet<String> {
        self.state.read().mention_index.get(reference).cloned().unwrap_or_default()
    }

    /// References of every annotation stored for a document.
    pub fn references_of(&self, document_id: &str) -> Result<BTreeSet<String>, StoreError> {
        let st = self.state.read();
        if !st.documents.contains_key(document_id) {
            return Err(StoreError::UnknownDocument(document_id.to_string()));
        }
        Ok(st.annotations.get(document_id).into_iter().flatten().filter_map(|a| a.reference.clone()).collect())
    }

    fn document_triples(&self, st: &StoreState, doc: &Document) -> Arc<Vec<Triple>> {
        let anns = st.annotations.get(&doc.id).map(Vec::as_slice).unwrap_or(&[]);
        let key = (st.epochs.get(&doc.id).copied().unwrap_or(0), anns.len());
        if let Some((k, cached)) = self.triples.lock().get(&doc.id) {
            if *k == key {
                return cached.clone();
            }
        }
        // stored annotations always validate, so this cannot fail
        let triples = Arc::new(document_to_triples(doc, anns).unwrap_or_default());
        self.triples.lock().insert(doc.id.clone(), (key, triples.clone()));
        triples
    }

    /// All triples in document-id order.
    pub fn all_triples(&self) -> Vec<Triple> {
        let st = self.state.read();
        let mut out = Vec::new();
        for doc in st.documents.values() {
            out.extend(self.document_triples(&st, doc).iter().cloned());
        }
        out
    }

    pub fn export_triples(&self) -> String {
        to_ntriples(&self.all_triples())
    }

    pub fn query_triples(&self, pattern: &TriplePattern) -> Vec<Triple> {
        let mut hits: Vec<Triple> = self.all_triples().into_iter().filter(|t| pattern.matches(t)).collect();
        hits.sort_by(triple_order);
        hits
    }

    /// Copy of the current state, for audits and persistence checks.
    pub fn snapshot(&self) -> StoreState {
        self.state.read().clone()
    }

    pub fn audit(&self) -> Result<(), String> {
        self.state.read().audit()
    }
}

fn identity_key(a: &Annotation) -> (usize, usize, crate::model::AnnotationKind, Option<String>, String) {
    let (b, e, k, r, p) = a.identity();
    (b, e, k, r.map(str::to_string), p.to_string())
}
