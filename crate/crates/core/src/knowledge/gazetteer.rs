use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{fields, KnowledgeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityType {
    Person,
    Organization,
    Location,
    Norm,
    Other,
}

impl FromStr for EntityType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "person" | "per" => EntityType::Person,
            "organization" | "organisation" | "org" => EntityType::Organization,
            "location" | "loc" => EntityType::Location,
            "norm" => EntityType::Norm,
            "other" | "misc" => EntityType::Other,
            _ => return Err(format!("unknown entity type {s:?}")),
        })
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub surface_forms: Vec<String>,
    pub entity_type: EntityType,
    pub reference: String,
}

#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: Vec<GazetteerEntry>,
}

impl Gazetteer {
    /// Parses `G <type> <iri> | sf=<surface form>` records.
    pub fn parse(source: &str) -> Result<Self, KnowledgeError> {
        let mut entries = Vec::new();
        for (line_no, line) in super::records(source) {
            let mut parts = fields(line);
            let head = parts.next().unwrap_or_default();
            let mut words = head.split_whitespace();
            if words.next() != Some("G") {
                return Err(KnowledgeError::parse(line_no, "expected `G <type> <iri>`"));
            }
            let (Some(ty), Some(iri), None) = (words.next(), words.next(), words.next()) else {
                return Err(KnowledgeError::parse(line_no, "expected `G <type> <iri>`"));
            };
            let entity_type = ty.parse().map_err(|e: String| KnowledgeError::parse(line_no, e))?;
            let mut surface_forms = Vec::new();
            for field in parts {
                let sf = field
                    .strip_prefix("sf=")
                    .ok_or_else(|| KnowledgeError::parse(line_no, format!("bad field {field:?}")))?;
                surface_forms.push(sf.trim().to_string());
            }
            entries.push(GazetteerEntry { surface_forms, entity_type, reference: iri.to_string() });
        }
        Self::from_entries(entries)
    }

    pub fn from_entries(entries: impl IntoIterator<Item = GazetteerEntry>) -> Result<Self, KnowledgeError> {
        let entries: Vec<_> = entries.into_iter().collect();
        for e in &entries {
            if e.surface_forms.is_empty() || e.surface_forms.iter().any(String::is_empty) {
                return Err(KnowledgeError::Invariant { item: e.reference.clone(), message: "needs non-empty surface forms".into() });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[GazetteerEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
