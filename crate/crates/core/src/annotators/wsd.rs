//! Word sense disambiguation by collocation overlap.
//!
//! Each candidate concept gets a signature: the word tokens of its labels and
//! definition plus the labels of its direct neighbours. A mention's context
//! is the word tokens within a window around it. The candidate whose
//! signature overlaps the context most (relative to signature size) wins if
//! it clears the threshold; otherwise the mention is treated as a
//! non-vocabulary sense and dropped.

use std::collections::{BTreeMap, BTreeSet};

use super::concepts::{candidates, CANDIDATES};
use crate::knowledge::Taxonomy;
use crate::model::{Annotation, Document};
use crate::text::{fold_label, tokenize, Stopwords, Token};

pub const DEFAULT_THRESHOLD: f64 = 0.05;
pub const DEFAULT_WINDOW: usize = 10;
pub const SCORE_KEY: &str = "wsd_score";

#[derive(Debug, Clone, PartialEq)]
pub struct SenseSignature {
    pub concept_id: String,
    pub terms: BTreeMap<String, f64>,
}

impl SenseSignature {
    pub fn build(taxonomy: &Taxonomy, concept_id: &str, lang: &str, stopwords: &Stopwords) -> Option<Self> {
        let concept = taxonomy.get(concept_id)?;
        let mut texts: Vec<&str> = concept.labels(lang);
        texts.extend(concept.definition.get(lang).map(String::as_str));
        let neighbors = taxonomy.neighbors(concept_id, 1).ok()?;
        for n in neighbors.iter().filter(|n| n.as_str() != concept_id) {
            if let Some(c) = taxonomy.get(n) {
                texts.extend(c.labels(lang));
            }
        }
        let terms: BTreeMap<String, f64> = texts
            .into_iter()
            .flat_map(tokenize)
            .filter(Token::is_word)
            .map(|t| fold_label(t.text))
            .filter(|t| !stopwords.is_stop(lang, t))
            .map(|t| (t, 1.0))
            .collect();
        (!terms.is_empty()).then(|| Self { concept_id: concept_id.to_string(), terms })
    }

    /// Weighted overlap with the context, normalised by signature weight.
    pub fn score(&self, context: &BTreeSet<String>) -> f64 {
        let total: f64 = self.terms.values().sum();
        let hit: f64 = self.terms.iter().filter(|(t, _)| context.contains(*t)).map(|(_, w)| w).sum();
        hit / total
    }
}

#[derive(Debug, Clone)]
pub struct Disambiguator<'a> {
    pub taxonomy: &'a Taxonomy,
    pub window: usize,
    pub threshold: f64,
    pub stopwords: &'a Stopwords,
}

impl<'a> Disambiguator<'a> {
    pub fn new(taxonomy: &'a Taxonomy, stopwords: &'a Stopwords) -> Self {
        Self { taxonomy, window: DEFAULT_WINDOW, threshold: DEFAULT_THRESHOLD, stopwords }
    }

    /// Folded word tokens within `window` word tokens on either side of the
    /// span, excluding the span itself.
    pub fn context(&self, doc: &Document, begin: usize, end: usize) -> BTreeSet<String> {
        let words: Vec<Token> = tokenize(&doc.content).into_iter().filter(Token::is_word).collect();
        let first = words.iter().position(|t| t.end > begin).unwrap_or(words.len());
        let last = words.iter().rposition(|t| t.begin < end).map_or(first, |i| i + 1).max(first);
        let lo = first.saturating_sub(self.window);
        let hi = (last + self.window).min(words.len());
        words[lo..first]
            .iter()
            .chain(&words[last..hi])
            .map(|t| fold_label(t.text))
            .filter(|t| !self.stopwords.is_stop(&doc.language, t))
            .collect()
    }

    /// Resolves each mention to its best-scoring candidate or drops it.
    pub fn disambiguate(&self, doc: &Document, mentions: &[Annotation]) -> Vec<Annotation> {
        let mut out = Vec::new();
        for ann in mentions {
            let context = self.context(doc, ann.begin, ann.end);
            let mut scored: Vec<(f64, String)> = candidates(ann)
                .into_iter()
                .filter_map(|c| SenseSignature::build(self.taxonomy, &c, &doc.language, self.stopwords))
                .map(|s| (s.score(&context), s.concept_id))
                .collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0));
            let Some((best, winner)) = scored.first().cloned() else { continue };
            let tied = scored.iter().filter(|(s, _)| *s == best).count() > 1;
            if tied || best < self.threshold {
                continue;
            }
            let mut resolved = ann.clone().with_reference(winner).with_confidence(best);
            resolved.metadata.remove(CANDIDATES);
            resolved.metadata.insert(SCORE_KEY.into(), format!("{best:.6}"));
            out.push(resolved);
        }
        out
    }
}

/// Convenience wrapper with the default threshold and the given window.
pub fn disambiguate(
    doc: &Document,
    ambiguous: &[Annotation],
    taxonomy: &Taxonomy,
    window: usize,
    stopwords: &Stopwords,
) -> Vec<Annotation> {
    Disambiguator { window: window.max(1), ..Disambiguator::new(taxonomy, stopwords) }.disambiguate(doc, ambiguous)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AnnotationKind;

    fn taxonomy() -> Taxonomy {
        Taxonomy::parse(
            "t",
            "C http://t/tribunal | pref:en=court | alt:en=tribunal | def:en=body that decides legal disputes | broader:http://t/judiciary\n\
             C http://t/judiciary | pref:en=judiciary\n\
             C http://t/pitch | pref:en=court | def:en=area marked for playing tennis or basketball",
        )
        .unwrap()
    }

    fn mention(doc: &Document, word: &str) -> Annotation {
        let begin = doc.content.find(word).unwrap();
        let begin = doc.content[..begin].chars().count();
        Annotation::over(doc, begin, begin + word.chars().count(), AnnotationKind::ConceptMention, "concepts")
            .with_confidence(0.5)
            .with_meta(CANDIDATES, "http://t/pitch http://t/tribunal")
    }

    #[test]
    fn picks_overlapping_sense() {
        let sw = Stopwords::new();
        let doc = Document::new("http://d/1", "The court decides legal disputes quickly.", "en");
        let out = disambiguate(&doc, &[mention(&doc, "court")], &taxonomy(), 5, &sw);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].reference.as_deref(), Some("http://t/tribunal"));
        // signature {court, tribunal, body, that, decides, legal, disputes, judiciary}; context hits decides, legal, disputes
        assert!((out[0].confidence - 3.0 / 8.0).abs() < 1e-12);
        assert!(!out[0].metadata.contains_key(CANDIDATES));
    }

    #[test]
    fn no_overlap_drops() {
        let sw = Stopwords::new();
        let doc = Document::new("http://d/1", "A court appeared nowhere else.", "en");
        assert!(disambiguate(&doc, &[mention(&doc, "court")], &taxonomy(), 3, &sw).is_empty());
    }

    #[test]
    fn single_candidate_is_scored() {
        let sw = Stopwords::new();
        let doc = Document::new("http://d/1", "the judiciary court", "en");
        let ann = mention(&doc, "court").with_reference("http://t/tribunal");
        let mut ann = ann;
        ann.metadata.clear();
        let out = disambiguate(&doc, &[ann], &taxonomy(), 3, &sw);
        assert_eq!(out[0].reference.as_deref(), Some("http://t/tribunal"));
        assert!((out[0].confidence - 1.0 / 8.0).abs() < 1e-12);
    }
}
