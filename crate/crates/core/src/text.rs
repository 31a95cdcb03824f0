//! Shared tokenizer, case folding, sentence splitting and stopword lists.
//!
//! Every annotator and the retrieval index tokenize through [`tokenize`] so
//! that offsets computed in one place line up with offsets in another.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io;
use std::path::Path;

use unicode_normalization::UnicodeNormalization;
use unicode_segmentation::UnicodeSegmentation;

/// A token with code-point offsets into the text it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub begin: usize,
    pub end: usize,
}

impl Token<'_> {
    pub fn is_word(&self) -> bool {
        self.text.chars().any(char::is_alphanumeric)
    }
}

/// Splits on Unicode word boundaries. Whitespace is dropped; punctuation
/// runs become one token per character.
pub fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut pos = 0;
    for segment in text.split_word_bounds() {
        let len = segment.chars().count();
        if segment.chars().any(char::is_alphanumeric) {
            tokens.push(Token { text: segment, begin: pos, end: pos + len });
        } else {
            for (i, (byte, c)) in segment.char_indices().enumerate() {
                if !c.is_whitespace() {
                    let text = &segment[byte..byte + c.len_utf8()];
                    tokens.push(Token { text, begin: pos + i, end: pos + i + 1 });
                }
            }
        }
        pos += len;
    }
    tokens
}

/// Simple case fold of one character. Characters whose lowercase form is
/// longer than one code point are kept as-is so folding never moves offsets.
pub fn fold_char(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

/// Length-preserving fold used on document text.
pub fn fold_text(text: &str) -> String {
    text.chars().map(fold_char).collect()
}

/// NFC followed by simple case fold, used for labels and index keys.
pub fn fold_label(label: &str) -> String {
    label.nfc().map(fold_char).collect()
}

/// Sentence spans `(begin, end)` in code points. A sentence ends at `.`, `!`
/// or `?` followed by whitespace or end of text; leading whitespace is not
/// part of a sentence.
pub fn sentences(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut start = None;
    for (i, &c) in chars.iter().enumerate() {
        if start.is_none() {
            if c.is_whitespace() {
                continue;
            }
            start = Some(i);
        }
        let terminal = matches!(c, '.' | '!' | '?') && chars.get(i + 1).is_none_or(|n| n.is_whitespace());
        if terminal {
            spans.push((start.take().unwrap(), i + 1));
        }
    }
    if let Some(s) = start {
        let mut end = chars.len();
        while end > s && chars[end - 1].is_whitespace() {
            end -= 1;
        }
        spans.push((s, end));
    }
    spans
}

/// Per-language stopword sets.
#[derive(Debug, Clone, Default)]
pub struct Stopwords {
    by_lang: HashMap<String, HashSet<String>>,
}

impl Stopwords {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads every `<lang>.stop` file in `dir`.
    pub fn load_dir(dir: &Path) -> io::Result<Self> {
        let mut out = Self::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("stop") {
                continue;
            }
            let Some(lang) = path.file_stem().and_then(|s| s.to_str()) else { continue };
            let words = fs::read_to_string(&path)?;
            out.insert(lang, words.lines());
        }
        Ok(out)
    }

    pub fn insert<'a>(&mut self, lang: &str, words: impl IntoIterator<Item = &'a str>) {
        let set = self.by_lang.entry(lang.to_string()).or_default();
        for w in words {
            let w = w.trim();
            if !w.is_empty() && !w.starts_with('#') {
                set.insert(fold_label(w));
            }
        }
    }

    pub fn is_stop(&self, lang: &str, folded: &str) -> bool {
        self.by_lang.get(primary_subtag(lang)).is_some_and(|s| s.contains(folded))
    }
}

/// Folded word tokens of `text` with stopwords removed.
pub fn content_terms(text: &str, lang: &str, stopwords: &Stopwords) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(Token::is_word)
        .map(|t| fold_label(t.text))
        .filter(|t| !stopwords.is_stop(lang, t))
        .collect()
}

pub fn primary_subtag(lang: &str) -> &str {
    lang.split('-').next().unwrap_or(lang)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(s: &str) -> Vec<&str> {
        tokenize(s).into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn punctuation_is_split_per_char() {
        assert_eq!(texts("Decision (EU) 2015/1523"), ["Decision", "(", "EU", ")", "2015", "/", "1523"]);
        assert_eq!(texts("end.)"), ["end", ".", ")"]);
    }

    #[test]
    fn offsets_are_code_points() {
        let toks = tokenize("Die Ärzte kommen");
        assert_eq!((toks[1].text, toks[1].begin, toks[1].end), ("Ärzte", 4, 9));
        assert_eq!((toks[2].begin, toks[2].end), (10, 16));
    }

    #[test]
    fn german_date_tokens() {
        assert_eq!(texts("15. März 2019"), ["15", ".", "März", "2019"]);
    }

    #[test]
    fn folding_preserves_length() {
        let s = "İstanbul ÄRZTE";
        assert_eq!(fold_text(s).chars().count(), s.chars().count());
        assert_eq!(fold_text("ÄRZTE"), "ärzte");
        assert_eq!(fold_label("Cafe\u{301}"), "café");
    }

    #[test]
    fn sentence_spans() {
        let text = "One two. Three? Four 3.5 five";
        let spans = sentences(text);
        let got: Vec<&str> = spans.iter().map(|&(b, e)| crate::model::slice_chars(text, b, e).unwrap()).collect();
        assert_eq!(got, ["One two.", "Three?", "Four 3.5 five"]);
        assert!(sentences("   ").is_empty());
    }

    #[test]
    fn stopwords_filter_terms() {
        let mut sw = Stopwords::new();
        sw.insert("en", ["the", "a"]);
        assert_eq!(content_terms("The lawyer, a Notary.", "en", &sw), ["lawyer", "notary"]);
        assert_eq!(content_terms("The lawyer", "en-GB", &sw), ["lawyer"]);
    }
}
