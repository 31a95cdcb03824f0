//! Legal reference pattern induction and resolution.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::matching::select_longest;
use super::AnnotatorError;
use crate::model::{Annotation, AnnotationKind, Document};
use crate::text::tokenize;

pub const PROVENANCE: &str = "references";
pub const MIN_NGRAM: usize = 2;
pub const MAX_NGRAM: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Feature {
    Literal(String),
    Digits,
    DigitsSlashDigits,
    Roman,
    UppercaseAbbr,
}

impl Feature {
    pub fn is_placeholder(&self) -> bool {
        !matches!(self, Feature::Literal(_))
    }

    /// Feature of a single (possibly merged) token.
    pub fn of(text: &str) -> Feature {
        if !text.is_empty() && text.bytes().all(|b| b.is_ascii_digit()) {
            Feature::Digits
        } else if is_digits_slash_digits(text) {
            Feature::DigitsSlashDigits
        } else if is_roman(text) {
            Feature::Roman
        } else if (2..=5).contains(&text.chars().count()) && text.chars().all(|c| c.is_uppercase()) {
            Feature::UppercaseAbbr
        } else {
            Feature::Literal(text.to_string())
        }
    }

    fn matches(&self, token: &FeatureToken) -> bool {
        match self {
            Feature::Literal(s) => *s == token.text,
            other => *other == token.feature,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feature::Literal(s) => write!(f, "{}", serde_json::to_string(s).map_err(|_| fmt::Error)?),
            Feature::Digits => f.write_str("DIGITS"),
            Feature::DigitsSlashDigits => f.write_str("DIGITS_SLASH_DIGITS"),
            Feature::Roman => f.write_str("ROMAN"),
            Feature::UppercaseAbbr => f.write_str("UPPERCASE_ABBR"),
        }
    }
}

fn is_digits_slash_digits(text: &str) -> bool {
    text.split_once('/').is_some_and(|(a, b)| {
        [a, b].iter().all(|s| !s.is_empty() && s.bytes().all(|c| c.is_ascii_digit()))
    })
}

/// Canonical upper-case roman numerals from 1 to 3999.
pub fn is_roman(text: &str) -> bool {
    fn digit(s: &str, one: char, five: char, ten: char) -> usize {
        let table = [
            String::new(),
            format!("{one}"),
            format!("{one}{one}"),
            format!("{one}{one}{one}"),
            format!("{one}{five}"),
            format!("{five}"),
            format!("{five}{one}"),
            format!("{five}{one}{one}"),
            format!("{five}{one}{one}{one}"),
            format!("{one}{ten}"),
        ];
        // longest matching prefix
        table.iter().filter(|t| s.starts_with(t.as_str())).map(String::len).max().unwrap_or(0)
    }
    if text.is_empty() {
        return false;
    }
    let mut rest = text;
    let thousands = rest.bytes().take_while(|&b| b == b'M').count().min(3);
    rest = &rest[thousands..];
    for (one, five, ten) in [('C', 'D', 'M'), ('X', 'L', 'C'), ('I', 'V', 'X')] {
        rest = &rest[digit(rest, one, five, ten)..];
    }
    rest.is_empty()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureToken {
    pub text: String,
    pub feature: Feature,
    pub begin: usize,
    pub end: usize,
}

/// Tokenizes and maps tokens to features; adjacent `digits / digits` token
/// triples with no gap are merged first.
pub fn feature_tokens(text: &str) -> Vec<FeatureToken> {
    let tokens = tokenize(text);
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        if let [a, slash, b, ..] = &tokens[i..] {
            if digits(a.text) && slash.text == "/" && digits(b.text) && a.end == slash.begin && slash.end == b.begin {
                let merged = format!("{}/{}", a.text, b.text);
                out.push(FeatureToken { feature: Feature::DigitsSlashDigits, text: merged, begin: a.begin, end: b.end });
                i += 3;
                continue;
            }
        }
        let t = &tokens[i];
        out.push(FeatureToken { text: t.text.to_string(), feature: Feature::of(t.text), begin: t.begin, end: t.end });
        i += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferencePattern {
    pub id: String,
    pub features: Vec<Feature>,
    pub support: usize,
    pub approved: bool,
}

impl ReferencePattern {
    /// One review-file line: `<id> support=<n> approved=<bool> | <features>`.
    pub fn to_line(&self) -> String {
        let feats: Vec<String> = self.features.iter().map(Feature::to_string).collect();
        format!("{} support={} approved={} | {}", self.id, self.support, self.approved, feats.join(" "))
    }

    pub fn parse_line(line: &str) -> Result<Self, String> {
        let (head, feats) = line.split_once('|').ok_or("missing `|`")?;
        let mut head = head.split_whitespace();
        let id = head.next().ok_or("missing id")?.to_string();
        let (mut support, mut approved) = (None, None);
        for field in head {
            if let Some(v) = field.strip_prefix("support=") {
                support = Some(v.parse::<usize>().map_err(|e| format!("bad support: {e}"))?);
            } else if let Some(v) = field.strip_prefix("approved=") {
                approved = Some(v.parse::<bool>().map_err(|e| format!("bad approved flag: {e}"))?);
            } else {
                return Err(format!("unknown field {field:?}"));
            }
        }
        let features = parse_features(feats.trim())?;
        let pattern = ReferencePattern {
            id,
            features,
            support: support.ok_or("missing support=")?,
            approved: approved.ok_or("missing approved=")?,
        };
        pattern.check()?;
        Ok(pattern)
    }

    pub fn check(&self) -> Result<(), String> {
        if self.features.is_empty() {
            return Err(format!("{}: no features", self.id));
        }
        if self.features.iter().all(Feature::is_placeholder) {
            return Err(format!("{}: pattern has no literal", self.id));
        }
        if self.support == 0 {
            return Err(format!("{}: support must be at least 1", self.id));
        }
        Ok(())
    }
}

fn parse_features(src: &str) -> Result<Vec<Feature>, String> {
    let mut out = Vec::new();
    let mut rest = src.trim_start();
    while !rest.is_empty() {
        if rest.starts_with('"') {
            let mut stream = serde_json::Deserializer::from_str(rest).into_iter::<String>();
            let lit = stream.next().ok_or("unterminated literal")?.map_err(|e| e.to_string())?;
            rest = &rest[stream.byte_offset()..];
            out.push(Feature::Literal(lit));
        } else {
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            out.push(match &rest[..end] {
                "DIGITS" => Feature::Digits,
                "DIGITS_SLASH_DIGITS" => Feature::DigitsSlashDigits,
                "ROMAN" => Feature::Roman,
                "UPPERCASE_ABBR" => Feature::UppercaseAbbr,
                other => return Err(format!("unknown feature {other}")),
            });
            rest = &rest[end..];
        }
        rest = rest.trim_start();
    }
    Ok(out)
}

pub fn write_review_file(patterns: &[ReferencePattern]) -> String {
    patterns.iter().map(|p| p.to_line() + "\n").collect()
}

pub fn parse_review_file(src: &str) -> Result<Vec<ReferencePattern>, AnnotatorError> {
    crate::knowledge::records(src)
        .map(|(line, text)| ReferencePattern::parse_line(text).map_err(|message| AnnotatorError::Parse { line, message }))
        .collect()
}

/// Counts feature n-grams (length 2 to 6) that start at a trigger literal
/// and end at a placeholder, keeping those seen at least `min_support`
/// times. Output is sorted by support, then length (both descending), then
/// features; ids are `p1`, `p2`, ... in that order.
pub fn induce_reference_patterns(
    corpus: &[Document],
    triggers: &BTreeSet<String>,
    min_support: usize,
) -> Result<Vec<ReferencePattern>, AnnotatorError> {
    if corpus.is_empty() {
        return Err(AnnotatorError::EmptyCorpus);
    }
    let min_support = min_support.max(1);
    let mut counts: HashMap<Vec<Feature>, usize> = HashMap::new();
    for doc in corpus {
        let tokens = feature_tokens(&doc.content);
        for start in 0..tokens.len() {
            if tokens[start].feature.is_placeholder() || !triggers.contains(&tokens[start].text) {
                continue;
            }
            for len in MIN_NGRAM..=MAX_NGRAM.min(tokens.len() - start) {
                let gram = &tokens[start..start + len];
                if gram[len - 1].feature.is_placeholder() {
                    *counts.entry(gram.iter().map(|t| t.feature.clone()).collect()).or_default() += 1;
                }
            }
        }
    }
    let mut found: Vec<(Vec<Feature>, usize)> = counts.into_iter().filter(|(_, n)| *n >= min_support).collect();
    found.sort_by(|(fa, na), (fb, nb)| nb.cmp(na).then(fb.len().cmp(&fa.len())).then(fa.cmp(fb)));
    Ok(found
        .into_iter()
        .enumerate()
        .map(|(i, (features, support))| ReferencePattern { id: format!("p{}", i + 1), features, support, approved: false })
        .collect())
}

/// Annotates citations matching approved patterns. The normalized key is the
/// pattern id followed by the text captured by each placeholder, joined with
/// `:`.
pub fn resolve_references(doc: &Document, patterns: &[ReferencePattern]) -> Vec<Annotation> {
    let tokens = feature_tokens(&doc.content);
    let approved: Vec<&ReferencePattern> = patterns.iter().filter(|p| p.approved && !p.features.is_empty()).collect();
    let mut candidates = Vec::new();
    for start in 0..tokens.len() {
        for p in &approved {
            let n = p.features.len();
            let Some(window) = tokens.get(start..start + n) else { continue };
            if p.features.iter().zip(window).all(|(f, t)| f.matches(t)) {
                let mut key = vec![p.id.as_str()];
                key.extend(p.features.iter().zip(window).filter(|(f, _)| f.is_placeholder()).map(|(_, t)| t.text.as_str()));
                candidates.push((window[0].begin, window[n - 1].end, key.join(":")));
            }
        }
    }
    select_longest(candidates, |c| (c.0, c.1))
        .into_iter()
        .map(|(b, e, key)| {
            Annotation::over(doc, b, e, AnnotationKind::LegalReference, PROVENANCE).with_normalized(key)
        })
        .collect()
}
