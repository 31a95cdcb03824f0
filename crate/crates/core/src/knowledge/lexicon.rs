use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{fields, KnowledgeError};
use crate::text::fold_label;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub headword: String,
    pub language: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
    #[serde(default)]
    pub translations: BTreeMap<String, Vec<String>>,
}

/// Synonyms and translations keyed by `(language, folded headword)`.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
    index: HashMap<(String, String), Vec<usize>>,
}

impl Lexicon {
    /// Parses `L <lang>:<headword> | syn=<w> | <lang>=<w>` records.
    pub fn parse(source: &str) -> Result<Self, KnowledgeError> {
        let mut entries = Vec::new();
        for (line_no, line) in super::records(source) {
            let mut parts = fields(line);
            let head = parts.next().unwrap_or_default();
            let (language, headword) = head
                .strip_prefix("L ")
                .and_then(|h| h.trim().split_once(':'))
                .ok_or_else(|| KnowledgeError::parse(line_no, "expected `L <lang>:<headword>`"))?;
            let mut entry = LexiconEntry {
                headword: headword.trim().to_string(),
                language: language.trim().to_string(),
                synonyms: Vec::new(),
                translations: BTreeMap::new(),
            };
            for field in parts {
                let (key, value) =
                    field.split_once('=').ok_or_else(|| KnowledgeError::parse(line_no, format!("bad field {field:?}")))?;
                let (key, value) = (key.trim(), value.trim().to_string());
                if key == "syn" {
                    entry.synonyms.push(value);
                } else {
                    entry.translations.entry(key.to_string()).or_default().push(value);
                }
            }
            entries.push(entry);
        }
        Self::from_entries(entries)
    }

    pub fn from_entries(entries: impl IntoIterator<Item = LexiconEntry>) -> Result<Self, KnowledgeError> {
        let mut lex = Lexicon::default();
        for e in entries {
            if e.headword.is_empty() {
                return Err(KnowledgeError::Invariant { item: format!("{}:", e.language), message: "empty headword".into() });
            }
            if e.translations.values().flatten().chain(&e.synonyms).any(String::is_empty) {
                return Err(KnowledgeError::Invariant { item: e.headword.clone(), message: "empty translation".into() });
            }
            lex.index.entry((e.language.clone(), fold_label(&e.headword))).or_default().push(lex.entries.len());
            lex.entries.push(e);
        }
        Ok(lex)
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn lookup(&self, lang: &str, word: &str) -> impl Iterator<Item = &LexiconEntry> {
        self.index.get(&(lang.to_string(), fold_label(word))).into_iter().flatten().map(|&i| &self.entries[i])
    }

    /// First listed translation of `word` into `target`.
    pub fn translate(&self, source: &str, word: &str, target: &str) -> Option<&str> {
        self.lookup(source, word).find_map(|e| e.translations.get(target).and_then(|v| v.first())).map(String::as_str)
    }

    /// The term itself, its synonyms and its translations into each target
    /// language, deduplicated case-insensitively per language (first spelling
    /// wins).
    pub fn expand_terms(&self, term: &str, source_lang: &str, target_langs: &BTreeSet<String>) -> BTreeSet<(String, String)> {
        let mut seen: BTreeMap<(String, String), String> = BTreeMap::new();
        let mut add = |lang: &str, word: &str| {
            seen.entry((lang.to_string(), fold_label(word))).or_insert_with(|| word.to_string());
        };
        add(source_lang, term);
        for e in self.lookup(source_lang, term) {
            for s in &e.synonyms {
                add(source_lang, s);
            }
            for t in target_langs {
                for w in e.translations.get(t).into_iter().flatten() {
                    add(t, w);
                }
            }
        }
        seen.into_iter().map(|((lang, _), word)| (lang, word)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[(&str, &str)]) -> BTreeSet<(String, String)> {
        items.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn unknown_term_is_kept() {
        let lex = Lexicon::default();
        assert_eq!(lex.expand_terms("zzz", "en", &BTreeSet::new()), set(&[("en", "zzz")]));
    }

    #[test]
    fn synonyms_and_translations() {
        let lex = Lexicon::parse("L en:lawyer | syn=attorney | de=Anwalt | es=abogado").unwrap();
        let targets = BTreeSet::from(["de".to_string()]);
        assert_eq!(
            lex.expand_terms("lawyer", "en", &targets),
            set(&[("en", "lawyer"), ("en", "attorney"), ("de", "Anwalt")])
        );
        assert_eq!(lex.translate("en", "Lawyer", "es"), Some("abogado"));
    }

    #[test]
    fn case_fold_dedup() {
        let lex = Lexicon::parse("L en:Court | syn=court | syn=tribunal").unwrap();
        assert_eq!(lex.expand_terms("court", "en", &BTreeSet::new()), set(&[("en", "court"), ("en", "tribunal")]));
    }

    #[test]
    fn empty_translation_rejected() {
        assert!(Lexicon::parse("L en:x | de=").is_err());
        assert!(Lexicon::parse("L en: | de=y").is_err());
        assert!(matches!(Lexicon::parse("nonsense"), Err(KnowledgeError::Parse { line: 1, .. })));
    }
}
