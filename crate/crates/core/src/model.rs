//! Documents, stand-off annotations and their triple view.
//!
//! Offsets are counted in Unicode code points, so `begin..end` addresses the
//! same characters regardless of how the content is encoded on the wire.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Predicate linking a document to every entity or concept it mentions.
pub const MENTIONS: &str = "http://schema.org/mentions";
/// Predicate linking an annotation IRI to the text it covers.
pub const ANCHOR_OF: &str = "http://persistence.uni-leipzig.org/nlp2rdf/ontologies/nif-core#anchorOf";
/// Namespace for metadata keys without a well-known predicate.
pub const META_NS: &str = "http://lkg.local/ns/meta#";

const DCTERMS: &str = "http://purl.org/dc/terms/";

/// Metadata keys whose values are not natural-language text and therefore get
/// plain (untagged) literals.
const NON_TEXTUAL_KEYS: &[&str] = &["dct"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub collection_id: String,
    pub content: String,
    pub language: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    #[serde(default = "default_version")]
    pub version: u64,
}

fn default_version() -> u64 {
    1
}

impl Document {
    pub fn new(id: impl Into<String>, content: impl Into<String>, language: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            collection_id: String::new(),
            content: content.into(),
            language: language.into(),
            metadata: BTreeMap::new(),
            version: 1,
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    /// Length of the content in code points.
    pub fn char_len(&self) -> usize {
        self.content.chars().count()
    }

    /// The content between two code-point offsets.
    pub fn slice(&self, begin: usize, end: usize) -> Option<&str> {
        slice_chars(&self.content, begin, end)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum DocumentError {
    #[error("document id is empty")]
    EmptyId,
    #[error("document id {0:?} is not an absolute IRI")]
    IdNotIri(String),
    #[error("invalid language tag {0:?}")]
    InvalidLanguage(String),
    #[error("document version must be at least 1")]
    ZeroVersion,
}

/// Checks the invariants a document must satisfy before it can be stored.
pub fn validate_document(doc: &Document) -> Result<(), DocumentError> {
    if doc.id.is_empty() {
        return Err(DocumentError::EmptyId);
    }
    if !is_absolute_iri(&doc.id) {
        return Err(DocumentError::IdNotIri(doc.id.clone()));
    }
    if !is_language_tag(&doc.language) {
        return Err(DocumentError::InvalidLanguage(doc.language.clone()));
    }
    if doc.version == 0 {
        return Err(DocumentError::ZeroVersion);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnnotationKind {
    EntityMention,
    ConceptMention,
    TemporalExpression,
    LegalReference,
    Structure,
}

impl AnnotationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AnnotationKind::EntityMention => "EntityMention",
            AnnotationKind::ConceptMention => "ConceptMention",
            AnnotationKind::TemporalExpression => "TemporalExpression",
            AnnotationKind::LegalReference => "LegalReference",
            AnnotationKind::Structure => "Structure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub document_id: String,
    pub begin: usize,
    pub end: usize,
    pub anchor: String,
    pub kind: AnnotationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized: Option<String>,
    pub confidence: f64,
    pub provenance: String,
    /// Milliseconds since the Unix epoch; 0 means not yet stamped by a store.
    #[serde(default)]
    pub created_at: i64,
    /// Service specific extras such as entity type or WSD candidates.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl Annotation {
    /// Builds an annotation over `doc[begin..end)`, deriving the anchor and a
    /// deterministic id from kind, provenance and span.
    ///
    /// Panics if the span is outside the document.
    pub fn over(doc: &Document, begin: usize, end: usize, kind: AnnotationKind, provenance: &str) -> Self {
        let anchor = doc
            .slice(begin, end)
            .unwrap_or_else(|| panic!("span {begin}..{end} outside document {}", doc.id))
            .to_string();
        Self {
            id: format!("{provenance}-{}-{begin}-{end}", kind_slug(kind)),
            document_id: doc.id.clone(),
            begin,
            end,
            anchor,
            kind,
            reference: None,
            normalized: None,
            confidence: 1.0,
            provenance: provenance.to_string(),
            created_at: 0,
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_reference(mut self, reference: impl Into<String>) -> Self {
        self.reference = Some(reference.into());
        self
    }

    pub fn with_normalized(mut self, value: impl Into<String>) -> Self {
        self.normalized = Some(value.into());
        self
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    /// IRI minted for this annotation inside its document.
    pub fn iri(&self) -> String {
        format!("{}#ann-{}", self.document_id, self.id)
    }

    /// Tuple under which the store treats two annotations as duplicates.
    pub fn identity(&self) -> (usize, usize, AnnotationKind, Option<&str>, &str) {
        (self.begin, self.end, self.kind, self.reference.as_deref(), self.provenance.as_str())
    }

    /// Ordering by `(begin, end, kind)`.
    pub fn span_cmp(&self, other: &Self) -> Ordering {
        (self.begin, self.end, self.kind).cmp(&(other.begin, other.end, other.kind))
    }

    pub fn overlaps(&self, other: &Self) -> bool {
        self.begin < other.end && other.begin < self.end
    }
}

fn kind_slug(kind: AnnotationKind) -> &'static str {
    match kind {
        AnnotationKind::EntityMention => "ent",
        AnnotationKind::ConceptMention => "con",
        AnnotationKind::TemporalExpression => "tmx",
        AnnotationKind::LegalReference => "ref",
        AnnotationKind::Structure => "str",
    }
}

/// The first invariant an annotation violates against its document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("document_id")]
    DocumentMismatch,
    #[error("begin<end")]
    EmptyOrReversedSpan,
    #[error("end<=length")]
    OutOfBounds,
    #[error("anchor=content[begin,end)")]
    AnchorMismatch,
    #[error("confidence in [0,1]")]
    ConfidenceRange,
}

impl Violation {
    pub fn name(self) -> &'static str {
        match self {
            Violation::DocumentMismatch => "document_id",
            Violation::EmptyOrReversedSpan => "begin<end",
            Violation::OutOfBounds => "end<=length",
            Violation::AnchorMismatch => "anchor=content[begin,end)",
            Violation::ConfidenceRange => "confidence in [0,1]",
        }
    }
}

/// Checks every annotation invariant against `doc`, in a fixed order.
pub fn validate_annotation(ann: &Annotation, doc: &Document) -> Result<(), Violation> {
    if ann.document_id != doc.id {
        return Err(Violation::DocumentMismatch);
    }
    if ann.begin >= ann.end {
        return Err(Violation::EmptyOrReversedSpan);
    }
    let Some(slice) = slice_chars(&doc.content, ann.begin, ann.end) else {
        return Err(Violation::OutOfBounds);
    };
    if slice != ann.anchor {
        return Err(Violation::AnchorMismatch);
    }
    if !(0.0..=1.0).contains(&ann.confidence) {
        return Err(Violation::ConfidenceRange);
    }
    Ok(())
}

/// Substring between two code-point offsets, `None` when out of range.
pub fn slice_chars(s: &str, begin: usize, end: usize) -> Option<&str> {
    if begin > end {
        return None;
    }
    let mut offsets = s.char_indices().map(|(b, _)| b).chain(std::iter::once(s.len()));
    let start = offsets.nth(begin)?;
    let stop = if end == begin { start } else { offsets.nth(end - begin - 1)? };
    Some(&s[start..stop])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Collection {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub document_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Object {
    Iri { value: String },
    Literal {
        value: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        language: Option<String>,
    },
}

impl Object {
    pub fn iri(value: impl Into<String>) -> Self {
        Object::Iri { value: value.into() }
    }

    pub fn literal(value: impl Into<String>, language: Option<&str>) -> Self {
        Object::Literal { value: value.into(), language: language.map(str::to_string) }
    }
}

impl fmt::Display for Object {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Object::Iri { value } => write!(f, "<{value}>"),
            Object::Literal { value, language } => {
                write!(f, "\"{}\"", escape_literal(value))?;
                if let Some(lang) = language {
                    write!(f, "@{lang}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: Object,
}

impl Triple {
    pub fn new(subject: impl Into<String>, predicate: impl Into<String>, object: Object) -> Self {
        Self { subject: subject.into(), predicate: predicate.into(), object }
    }

    /// Parses one N-Triples line of the subset this crate emits.
    pub fn parse_line(line: &str) -> Result<Triple, TripleParseError> {
        let mut rest = line.trim();
        let subject = take_iri(&mut rest)?;
        let predicate = take_iri(&mut rest)?;
        rest = rest.trim_start();
        let object = if rest.starts_with('<') {
            Object::Iri { value: take_iri(&mut rest)? }
        } else if rest.starts_with('"') {
            take_literal(&mut rest)?
        } else {
            return Err(TripleParseError::new("object must be an IRI or a literal"));
        };
        if rest.trim() != "." {
            return Err(TripleParseError::new("missing terminating '.'"));
        }
        Ok(Triple { subject, predicate, object })
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}> <{}> {} .", self.subject, self.predicate, self.object)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("malformed triple: {0}")]
pub struct TripleParseError(String);

impl TripleParseError {
    fn new(msg: &str) -> Self {
        Self(msg.to_string())
    }
}

fn take_iri(rest: &mut &str) -> Result<String, TripleParseError> {
    let s = rest.trim_start();
    let body = s.strip_prefix('<').ok_or_else(|| TripleParseError::new("expected '<'"))?;
    let close = body.find('>').ok_or_else(|| TripleParseError::new("unterminated IRI"))?;
    let iri = body[..close].to_string();
    *rest = &body[close + 1..];
    Ok(iri)
}

fn take_literal(rest: &mut &str) -> Result<Object, TripleParseError> {
    let s = rest.trim_start();
    let mut chars = s.char_indices().skip(1);
    let mut value = String::new();
    let mut end = None;
    while let Some((i, c)) = chars.next() {
        match c {
            '"' => {
                end = Some(i);
                break;
            }
            '\\' => {
                let (_, e) = chars.next().ok_or_else(|| TripleParseError::new("dangling escape"))?;
                value.push(match e {
                    'n' => '\n',
                    'r' => '\r',
                    't' => '\t',
                    'b' => '\u{8}',
                    'f' => '\u{c}',
                    '"' => '"',
                    '\'' => '\'',
                    '\\' => '\\',
                    _ => return Err(TripleParseError::new("unknown escape")),
                });
            }
            c => value.push(c),
        }
    }
    let end = end.ok_or_else(|| TripleParseError::new("unterminated literal"))?;
    let mut after = &s[end + 1..];
    let language = if let Some(tagged) = after.strip_prefix('@') {
        let len = tagged.find(|c: char| c.is_whitespace() || c == '.').unwrap_or(tagged.len());
        let tag = tagged[..len].to_string();
        after = &tagged[len..];
        Some(tag)
    } else {
        None
    };
    *rest = after;
    Ok(Object::Literal { value, language })
}

fn escape_literal(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            '\u{8}' => out.push_str("\\b"),
            '\u{c}' => out.push_str("\\f"),
            c => out.push(c),
        }
    }
    out
}

/// Predicate IRI for a metadata key.
pub fn metadata_predicate(key: &str) -> String {
    match key {
        "title" => format!("{DCTERMS}title"),
        "subject" => format!("{DCTERMS}subject"),
        "type" => format!("{DCTERMS}type"),
        "jurisdiction" => format!("{DCTERMS}coverage"),
        "dct" => format!("{DCTERMS}created"),
        other => format!("{META_NS}{}", percent_encode(other)),
    }
}

fn percent_encode(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.' | b'~') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("annotation {id} is invalid: {violation}")]
    InvalidAnnotation { id: String, violation: Violation },
}

/// Triplifies a document: metadata in key order, then per annotation (in
/// `(begin, end)` order) an optional mention triple and its anchor triple.
pub fn document_to_triples(doc: &Document, anns: &[Annotation]) -> Result<Vec<Triple>, ModelError> {
    for ann in anns {
        validate_annotation(ann, doc)
            .map_err(|violation| ModelError::InvalidAnnotation { id: ann.id.clone(), violation })?;
    }
    let mut triples = Vec::with_capacity(doc.metadata.len() + 2 * anns.len());
    for (key, value) in &doc.metadata {
        let lang = (!NON_TEXTUAL_KEYS.contains(&key.as_str())).then_some(doc.language.as_str());
        triples.push(Triple::new(&doc.id, metadata_predicate(key), Object::literal(value, lang)));
    }
    let mut ordered: Vec<&Annotation> = anns.iter().collect();
    ordered.sort_by(|a, b| (a.begin, a.end).cmp(&(b.begin, b.end)).then_with(|| a.id.cmp(&b.id)));
    for ann in ordered {
        if let Some(reference) = &ann.reference {
            triples.push(Triple::new(&doc.id, MENTIONS, Object::iri(reference)));
        }
        triples.push(Triple::new(ann.iri(), ANCHOR_OF, Object::literal(&ann.anchor, None)));
    }
    Ok(triples)
}

/// Renders triples as N-Triples text, one LF-terminated line each.
pub fn to_ntriples<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> String {
    let mut out = String::new();
    for t in triples {
        out.push_str(&t.to_string());
        out.push('\n');
    }
    out
}

/// Scheme followed by ':' and a non-empty remainder, no characters that are
/// illegal inside an N-Triples IRI.
pub fn is_absolute_iri(s: &str) -> bool {
    let Some((scheme, rest)) = s.split_once(':') else {
        return false;
    };
    let mut sc = scheme.chars();
    let scheme_ok = sc.next().is_some_and(|c| c.is_ascii_alphabetic())
        && sc.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'));
    scheme_ok
        && !rest.is_empty()
        && !s.chars().any(|c| c.is_whitespace() || c.is_control() || matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\'))
}

/// BCP-47 shaped tag: 2-3 lowercase letters, then optional `-` subtags of
/// 1-8 alphanumerics.
pub fn is_language_tag(tag: &str) -> bool {
    let mut parts = tag.split('-');
    let primary = parts.next().unwrap_or("");
    (2..=3).contains(&primary.len())
        && primary.chars().all(|c| c.is_ascii_lowercase())
        && parts.all(|p| (1..=8).contains(&p.len()) && p.chars().all(|c| c.is_ascii_alphanumeric()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(content: &str) -> Document {
        Document::new("http://lkg.local/doc/1", content, "en")
    }

    fn ann(d: &Document, begin: usize, end: usize, anchor: &str) -> Annotation {
        Annotation {
            id: "a".into(),
            document_id: d.id.clone(),
            begin,
            end,
            anchor: anchor.into(),
            kind: AnnotationKind::ConceptMention,
            reference: None,
            normalized: None,
            confidence: 1.0,
            provenance: "test".into(),
            created_at: 0,
            metadata: BTreeMap::new(),
        }
    }

    #[test]
    fn whole_string_span_is_valid() {
        let d = doc("abc");
        assert_eq!(validate_annotation(&ann(&d, 0, 3, "abc"), &d), Ok(()));
    }

    #[test]
    fn empty_span_is_rejected() {
        let d = doc("abc");
        let v = validate_annotation(&ann(&d, 2, 2, ""), &d).unwrap_err();
        assert_eq!(v.name(), "begin<end");
    }

    #[test]
    fn multibyte_character_counts_once() {
        let d = doc("Ärzte");
        assert_eq!(validate_annotation(&ann(&d, 0, 1, "Ä"), &d), Ok(()));
        assert_eq!(validate_annotation(&ann(&d, 1, 5, "rzte"), &d), Ok(()));
    }

    #[test]
    fn violations_in_order() {
        let d = doc("abc");
        assert_eq!(validate_annotation(&ann(&d, 1, 4, "bc"), &d), Err(Violation::OutOfBounds));
        assert_eq!(validate_annotation(&ann(&d, 0, 2, "ac"), &d), Err(Violation::AnchorMismatch));
        let mut a = ann(&d, 0, 1, "a");
        a.confidence = 1.5;
        assert_eq!(validate_annotation(&a, &d), Err(Violation::ConfidenceRange));
        a.document_id = "http://other".into();
        assert_eq!(validate_annotation(&a, &d), Err(Violation::DocumentMismatch));
    }

    #[test]
    fn slice_edges() {
        assert_eq!(slice_chars("", 0, 0), Some(""));
        assert_eq!(slice_chars("añb", 1, 2), Some("ñ"));
        assert_eq!(slice_chars("añb", 3, 3), Some(""));
        assert_eq!(slice_chars("añb", 0, 4), None);
        assert_eq!(slice_chars("añb", 2, 1), None);
    }

    #[test]
    fn metadata_only_document() {
        let d = doc("x").with_meta("type", "contract");
        let triples = document_to_triples(&d, &[]).unwrap();
        assert_eq!(triples.len(), 1);
        assert_eq!(triples[0].to_string(), "<http://lkg.local/doc/1> <http://purl.org/dc/terms/type> \"contract\"@en .");
    }

    #[test]
    fn reference_produces_mention_triple() {
        let d = doc("employment contract");
        let a = ann(&d, 11, 19, "contract").with_reference("http://lkg/concept/7");
        let triples = document_to_triples(&d, &[a]).unwrap();
        assert!(triples.contains(&Triple::new(&d.id, MENTIONS, Object::iri("http://lkg/concept/7"))));
        assert!(triples.iter().any(|t| t.subject == "http://lkg.local/doc/1#ann-a" && t.predicate == ANCHOR_OF));
    }

    #[test]
    fn invalid_annotation_rejected() {
        let d = doc("abc");
        let err = document_to_triples(&d, &[ann(&d, 0, 2, "zz")]).unwrap_err();
        assert!(matches!(err, ModelError::InvalidAnnotation { violation: Violation::AnchorMismatch, .. }));
    }

    #[test]
    fn dct_is_plain_literal() {
        let d = doc("x").with_meta("dct", "2019-03-15");
        let line = document_to_triples(&d, &[]).unwrap()[0].to_string();
        assert!(line.ends_with("\"2019-03-15\" ."), "{line}");
    }

    #[test]
    fn ntriples_line_roundtrip() {
        let t = Triple::new("http://a", "http://b", Object::literal("say \"hi\"\nnow\\", Some("de")));
        let line = t.to_string();
        assert_eq!(Triple::parse_line(&line).unwrap(), t);
        let t = Triple::new("http://a", "http://b", Object::iri("urn:x:1"));
        assert_eq!(Triple::parse_line(&t.to_string()).unwrap(), t);
        assert!(Triple::parse_line("<a> <b> junk .").is_err());
    }

    #[test]
    fn language_tags() {
        for ok in ["en", "de", "nl", "it", "es", "gsw", "en-GB", "zh-Hant-TW"] {
            assert!(is_language_tag(ok), "{ok}");
        }
        for bad in ["", "e", "EN", "engl", "en_GB", "en-", "en-toolongtag"] {
            assert!(!is_language_tag(bad), "{bad}");
        }
    }

    #[test]
    fn iris() {
        assert!(is_absolute_iri("http://lkg/concept/7"));
        assert!(is_absolute_iri("urn:lexflow:doc:1"));
        assert!(!is_absolute_iri("doc-1"));
        assert!(!is_absolute_iri("http://a b"));
        assert!(!is_absolute_iri("1http://x"));
    }

    #[test]
    fn document_validation() {
        assert_eq!(validate_document(&Document::new("", "x", "en")), Err(DocumentError::EmptyId));
        assert!(matches!(validate_document(&Document::new("d1", "x", "en")), Err(DocumentError::IdNotIri(_))));
        assert!(matches!(
            validate_document(&Document::new("http://d/1", "x", "English")),
            Err(DocumentError::InvalidLanguage(_))
        ));
        assert_eq!(validate_document(&Document::new("http://d/1", "x", "de")), Ok(()));
    }
}
