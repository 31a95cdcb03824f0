use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{fields, KnowledgeError};
use crate::text::fold_label;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub id: String,
    pub pref_label: BTreeMap<String, String>,
    #[serde(default)]
    pub alt_labels: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub definition: BTreeMap<String, String>,
    #[serde(default)]
    pub broader: BTreeSet<String>,
    #[serde(default)]
    pub narrower: BTreeSet<String>,
    #[serde(default)]
    pub related: BTreeSet<String>,
}

impl Concept {
    /// Every label in `lang`, preferred first.
    pub fn labels(&self, lang: &str) -> Vec<&str> {
        let mut out: Vec<&str> = self.pref_label.get(lang).map(String::as_str).into_iter().collect();
        out.extend(self.alt_labels.get(lang).into_iter().flatten().map(String::as_str));
        out
    }

    pub fn all_labels(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pref_label
            .iter()
            .map(|(l, s)| (l.as_str(), s.as_str()))
            .chain(self.alt_labels.iter().flat_map(|(l, v)| v.iter().map(move |s| (l.as_str(), s.as_str()))))
    }
}

/// A controlled vocabulary with a folded label index.
#[derive(Debug, Clone, Default)]
pub struct Taxonomy {
    pub id: String,
    pub concepts: BTreeMap<String, Concept>,
    label_index: HashMap<(String, String), BTreeSet<String>>,
}

impl Taxonomy {
    /// Parses the line-oriented vocabulary format:
    ///
    /// ```text
    /// C <iri> | pref:<lang>=<label> | alt:<lang>=<label> | broader:<iri> | narrower:<iri> | related:<iri> | def:<lang>=<text>
    /// ```
    pub fn parse(id: &str, source: &str) -> Result<Self, KnowledgeError> {
        let mut concepts: BTreeMap<String, Concept> = BTreeMap::new();
        for (line_no, line) in super::records(source) {
            let mut parts = fields(line);
            let head = parts.next().unwrap_or_default();
            let iri = head
                .strip_prefix("C ")
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| KnowledgeError::parse(line_no, "expected `C <iri>`"))?;
            if concepts.contains_key(iri) {
                return Err(KnowledgeError::parse(line_no, format!("duplicate concept {iri}")));
            }
            let mut c = Concept { id: iri.to_string(), ..Default::default() };
            for field in parts {
                let (key, value) =
                    field.split_once(':').ok_or_else(|| KnowledgeError::parse(line_no, format!("bad field {field:?}")))?;
                let value = value.trim();
                match key.trim() {
                    "pref" => {
                        let (lang, label) = lang_value(line_no, value)?;
                        if c.pref_label.insert(lang.clone(), label).is_some() {
                            return Err(KnowledgeError::parse(line_no, format!("two pref labels for {lang}")));
                        }
                    }
                    "alt" => {
                        let (lang, label) = lang_value(line_no, value)?;
                        c.alt_labels.entry(lang).or_default().push(label);
                    }
                    "def" => {
                        let (lang, text) = lang_value(line_no, value)?;
                        c.definition.insert(lang, text);
                    }
                    "broader" => {
                        c.broader.insert(value.to_string());
                    }
                    "narrower" => {
                        c.narrower.insert(value.to_string());
                    }
                    "related" => {
                        c.related.insert(value.to_string());
                    }
                    other => return Err(KnowledgeError::parse(line_no, format!("unknown field {other:?}"))),
                }
            }
            concepts.insert(iri.to_string(), c);
        }
        Self::from_concepts(id, concepts.into_values())
    }

    /// Builds a taxonomy from concepts, adding missing broader/narrower and
    /// related inverses and indexing every label.
    pub fn from_concepts(id: &str, concepts: impl IntoIterator<Item = Concept>) -> Result<Self, KnowledgeError> {
        let mut concepts: BTreeMap<String, Concept> = concepts.into_iter().map(|c| (c.id.clone(), c)).collect();
        for c in concepts.values() {
            if c.pref_label.is_empty() {
                return Err(KnowledgeError::Invariant { item: c.id.clone(), message: "no pref label".into() });
            }
        }
        let mut inverses: Vec<(String, &'static str, String)> = Vec::new();
        for c in concepts.values() {
            inverses.extend(c.broader.iter().map(|b| (b.clone(), "narrower", c.id.clone())));
            inverses.extend(c.narrower.iter().map(|n| (n.clone(), "broader", c.id.clone())));
            inverses.extend(c.related.iter().map(|r| (r.clone(), "related", c.id.clone())));
        }
        for (target, rel, source) in inverses {
            if let Some(t) = concepts.get_mut(&target) {
                match rel {
                    "narrower" => t.narrower.insert(source),
                    "broader" => t.broader.insert(source),
                    _ => t.related.insert(source),
                };
            }
        }
        let mut label_index: HashMap<(String, String), BTreeSet<String>> = HashMap::new();
        for c in concepts.values() {
            for (lang, label) in c.all_labels() {
                label_index.entry((lang.to_string(), fold_label(label))).or_default().insert(c.id.clone());
            }
        }
        Ok(Self { id: id.to_string(), concepts, label_index })
    }

    pub fn get(&self, id: &str) -> Option<&Concept> {
        self.concepts.get(id)
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    /// Concepts carrying `label` (folded) in `lang`.
    pub fn lookup(&self, lang: &str, label: &str) -> Option<&BTreeSet<String>> {
        self.label_index.get(&(lang.to_string(), fold_label(label)))
    }

    /// Folded labels in `lang` with the concepts they denote.
    pub fn labels_in<'a>(&'a self, lang: &'a str) -> impl Iterator<Item = (&'a str, &'a BTreeSet<String>)> + 'a {
        self.label_index.iter().filter(move |((l, _), _)| l == lang).map(|((_, label), ids)| (label.as_str(), ids))
    }

    pub fn has_language(&self, lang: &str) -> bool {
        self.label_index.keys().any(|(l, _)| l == lang)
    }

    /// Number of `(language, label, concept)` index entries.
    pub fn label_entry_count(&self) -> usize {
        self.label_index.values().map(BTreeSet::len).sum()
    }

    /// Concepts within `depth` hops over broader, narrower and related.
    /// Depth 0 is the concept itself. Links leaving the taxonomy are skipped.
    pub fn neighbors(&self, concept_id: &str, depth: usize) -> Result<BTreeSet<String>, KnowledgeError> {
        if !self.concepts.contains_key(concept_id) {
            return Err(KnowledgeError::UnknownConcept(concept_id.to_string()));
        }
        let mut seen = BTreeSet::from([concept_id.to_string()]);
        let mut queue = VecDeque::from([(concept_id, 0usize)]);
        while let Some((id, d)) = queue.pop_front() {
            if d == depth {
                continue;
            }
            let c = &self.concepts[id];
            for next in c.broader.iter().chain(&c.narrower).chain(&c.related) {
                if let Some((key, _)) = self.concepts.get_key_value(next) {
                    if seen.insert(key.clone()) {
                        queue.push_back((key.as_str(), d + 1));
                    }
                }
            }
        }
        Ok(seen)
    }

    /// Expands a set of references; references outside the taxonomy are kept
    /// as they are.
    pub fn expand(&self, refs: &BTreeSet<String>, depth: usize) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for r in refs {
            match self.neighbors(r, depth) {
                Ok(n) => out.extend(n),
                Err(_) => {
                    out.insert(r.clone());
                }
            }
        }
        out
    }
}

fn lang_value(line: usize, value: &str) -> Result<(String, String), KnowledgeError> {
    let (lang, text) = value.split_once('=').ok_or_else(|| KnowledgeError::parse(line, format!("expected <lang>=<text> in {value:?}")))?;
    let (lang, text) = (lang.trim(), text.trim());
    if lang.is_empty() || text.is_empty() {
        return Err(KnowledgeError::parse(line, format!("empty language or text in {value:?}")));
    }
    Ok((lang.to_string(), text.to_string()))
}
