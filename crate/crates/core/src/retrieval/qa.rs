use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::index::Index;
use super::{search, RetrievalError};
use crate::annotators::concepts::{candidates, ConceptMatcher};
use crate::knowledge::{Lexicon, Taxonomy};
use crate::model::Document;
use crate::store::LkgStore;
use crate::text::{content_terms, fold_label, sentences, tokenize, Stopwords, Token};

/// Read-only resources used to expand and answer questions.
#[derive(Debug, Clone, Copy)]
pub struct QueryContext<'a> {
    pub lexicon: &'a Lexicon,
    pub taxonomy: &'a Taxonomy,
    pub stopwords: &'a Stopwords,
    pub target_langs: &'a BTreeSet<String>,
}

/// Language-tagged, folded query terms. Multi-word terms keep their spaces.
pub type QueryTerms = BTreeSet<(String, String)>;

/// Content tokens of the question, their lexicon expansions, and the
/// alternative labels of every concept whose label occurs in the question.
pub fn formulate_query(question: &str, lang: &str, ctx: &QueryContext) -> QueryTerms {
    let mut out = QueryTerms::new();
    for term in content_terms(question, lang, ctx.stopwords) {
        for (l, w) in ctx.lexicon.expand_terms(&term, lang, ctx.target_langs) {
            out.insert((l, fold_label(&w)));
        }
        out.insert((lang.to_string(), term));
    }
    if let Ok(matcher) = ConceptMatcher::new(ctx.taxonomy, lang) {
        let doc = Document::new("urn:question", question, lang);
        for ann in matcher.annotate(&doc) {
            for id in candidates(&ann) {
                let Some(concept) = ctx.taxonomy.get(&id) else { continue };
                for l in std::iter::once(lang).chain(ctx.target_langs.iter().map(String::as_str)) {
                    for alt in concept.alt_labels.get(l).into_iter().flatten() {
                        out.insert((l.to_string(), fold_label(alt)));
                    }
                }
            }
        }
    }
    out
}

pub trait DocumentSource {
    fn document(&self, id: &str) -> Option<Document>;
}

impl DocumentSource for LkgStore {
    fn document(&self, id: &str) -> Option<Document> {
        self.get_document(id).ok().map(|(d, _)| d)
    }
}

impl DocumentSource for BTreeMap<String, Document> {
    fn document(&self, id: &str) -> Option<Document> {
        self.get(id).cloned()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub sentence: String,
    pub document_id: String,
    pub begin: usize,
    pub end: usize,
    pub score: f64,
}

/// `(matched / total) * (1 + 1 / (1 + d))` where `d` is the smallest token
/// distance between occurrences of two different matched terms; the
/// proximity bonus is 0 when fewer than two terms match.
pub fn score_sentence(sentence: &str, terms: &[Vec<String>]) -> f64 {
    if terms.is_empty() {
        return 0.0;
    }
    let words: Vec<String> = tokenize(sentence).into_iter().filter(Token::is_word).map(|t| fold_label(t.text)).collect();
    let positions: Vec<Vec<usize>> = terms
        .iter()
        .map(|term| {
            if term.is_empty() || term.len() > words.len() {
                return Vec::new();
            }
            (0..=words.len() - term.len()).filter(|&i| words[i..i + term.len()] == term[..]).collect()
        })
        .filter(|p: &Vec<usize>| !p.is_empty())
        .collect();
    let coverage = positions.len() as f64 / terms.len() as f64;
    let mut min_dist: Option<usize> = None;
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            for &a in &positions[i] {
                for &b in &positions[j] {
                    let d = a.abs_diff(b);
                    min_dist = Some(min_dist.map_or(d, |m| m.min(d)));
                }
            }
        }
    }
    let bonus = min_dist.map_or(0.0, |d| 1.0 / (1.0 + d as f64));
    coverage * (1.0 + bonus)
}

/// Distinct term word sequences, regardless of language tag.
pub fn term_sequences(terms: &QueryTerms) -> Vec<Vec<String>> {
    let seqs: BTreeSet<Vec<String>> = terms
        .iter()
        .map(|(_, t)| tokenize(t).into_iter().filter(Token::is_word).map(|w| fold_label(w.text)).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect();
    seqs.into_iter().collect()
}

/// Query formulation, retrieval of the top `k` documents, then sentence
/// scoring. Answers are ordered by score, then document rank, then position.
pub fn answer_question(
    question: &str,
    lang: &str,
    index: &Index,
    docs: &dyn DocumentSource,
    ctx: &QueryContext,
    k: usize,
) -> Result<Vec<Answer>, RetrievalError> {
    let terms = formulate_query(question, lang, ctx);
    let seqs = term_sequences(&terms);
    let query: Vec<String> = terms.iter().map(|(_, t)| t.clone()).collect();
    let hits = match search(index, &query.join(" "), lang, k, ctx.stopwords) {
        Ok(h) => h,
        Err(RetrievalError::EmptyQuery) => return Err(RetrievalError::NoMatch),
        Err(e) => return Err(e),
    };
    let mut scored: Vec<(f64, usize, usize, Answer)> = Vec::new();
    for (rank, (doc_id, _)) in hits.iter().enumerate() {
        let Some(doc) = docs.document(doc_id) else { continue };
        let chars: Vec<char> = doc.content.chars().collect();
        for (pos, (b, e)) in sentences(&doc.content).into_iter().enumerate() {
            let sentence: String = chars[b..e].iter().collect();
            let score = score_sentence(&sentence, &seqs);
            if score > 0.0 {
                let answer = Answer { sentence, document_id: doc_id.clone(), begin: b, end: e, score };
                scored.push((score, rank, pos, answer));
            }
        }
    }
    if scored.is_empty() {
        return Err(RetrievalError::NoMatch);
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    Ok(scored.into_iter().map(|(_, _, _, a)| a).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx<'a>(lex: &'a Lexicon, tax: &'a Taxonomy, sw: &'a Stopwords, t: &'a BTreeSet<String>) -> QueryContext<'a> {
        QueryContext { lexicon: lex, taxonomy: tax, stopwords: sw, target_langs: t }
    }

    #[test]
    fn plain_question_terms() {
        let (lex, tax, t) = (Lexicon::default(), Taxonomy::default(), BTreeSet::new());
        let mut sw = Stopwords::new();
        sw.insert("en", ["can", "a"]);
        let q = formulate_query("Can a lawyer terminate?", "en", &ctx(&lex, &tax, &sw, &t));
        assert_eq!(q, BTreeSet::from([("en".into(), "lawyer".into()), ("en".into(), "terminate".into())]));
    }

    #[test]
    fn synonyms_and_alt_labels() {
        let lex = Lexicon::parse("L en:lawyer | syn=attorney").unwrap();
        let tax = Taxonomy::parse("t", "C http://t/n | pref:en=notice | alt:en=notice period").unwrap();
        let (sw, t) = (Stopwords::new(), BTreeSet::new());
        let q = formulate_query("lawyer notice", "en", &ctx(&lex, &tax, &sw, &t));
        assert!(q.contains(&("en".into(), "attorney".into())));
        assert!(q.contains(&("en".into(), "notice period".into())));
    }

    #[test]
    fn sentence_scoring() {
        let terms = vec![vec!["notice".to_string()], vec!["weeks".to_string()]];
        // coverage 1, distance 3
        assert!((score_sentence("Notice is four weeks.", &terms) - (1.0 + 1.0 / 4.0)).abs() < 1e-12);
        assert_eq!(score_sentence("Only notice here.", &terms), 0.5);
        assert_eq!(score_sentence("Nothing.", &terms), 0.0);
    }

    #[test]
    fn answers_exact_sentence() {
        let docs: BTreeMap<String, Document> = [
            Document::new("http://d/1", "Salaries are paid monthly. The notice period is four weeks.", "en"),
            Document::new("http://d/2", "Holidays accrue yearly.", "en"),
        ]
        .into_iter()
        .map(|d| (d.id.clone(), d))
        .collect();
        let all: Vec<Document> = docs.values().cloned().collect();
        let (lex, tax, sw, t) = (Lexicon::default(), Taxonomy::default(), Stopwords::new(), BTreeSet::new());
        let idx = Index::build("c", &all, &sw).unwrap();
        let c = ctx(&lex, &tax, &sw, &t);
        let answers = answer_question("notice period four weeks", "en", &idx, &docs, &c, 3).unwrap();
        assert_eq!(answers[0].sentence, "The notice period is four weeks.");
        assert!(matches!(answer_question("zebra", "en", &idx, &docs, &c, 3), Err(RetrievalError::NoMatch)));
    }
}
