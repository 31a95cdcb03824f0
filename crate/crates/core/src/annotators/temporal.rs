//! Rule-driven temporal expression tagging with ISO-8601 normalization.
//!
//! Rule file records:
//!
//! ```text
//! V <lang> MONTH|NUMWORD|UNIT <word>=<value>, <word>=<value>, ...
//! T <lang> <id> | match=<pattern> | norm=<template>
//! ```
//!
//! A pattern is a whitespace-separated token sequence. Items are slots
//! (`<DAY> <MONTH> <MONTHNUM> <YEAR> <NUM> <UNIT> <DOTDATE>`) or literals,
//! where `a/b` lists alternatives; a trailing `?` makes an item optional.
//! Templates substitute `{Y} {M} {D} {N} {U}` from the captured slots and
//! `{ANCHOR}`, `{ANCHOR+P1D}`, `{AY+1}`, `{AM-2}` and similar from the anchor
//! date. A template prefixed `AFTER:` or `BEFORE:` holds a duration that is
//! applied to the next absolute date in the same sentence.

use std::collections::HashMap;

use chrono::{Datelike, Days, Months, NaiveDate};

use super::matching::select_longest;
use super::AnnotatorError;
use crate::knowledge::{fields, records};
use crate::model::{Annotation, AnnotationKind, Document};
use crate::text::{fold_label, primary_subtag, sentences, tokenize, Token};

pub const PROVENANCE: &str = "timex";
pub const RULE_KEY: &str = "rule";
/// Document metadata key holding the creation date used as anchor.
pub const ANCHOR_KEY: &str = "dct";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Day,
    Month,
    MonthNum,
    Year,
    Num,
    Unit,
    DotDate,
}

impl Slot {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "DAY" => Slot::Day,
            "MONTH" => Slot::Month,
            "MONTHNUM" => Slot::MonthNum,
            "YEAR" => Slot::Year,
            "NUM" => Slot::Num,
            "UNIT" => Slot::Unit,
            "DOTDATE" => Slot::DotDate,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    Slot(Slot),
    /// Folded alternatives.
    Literal(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternItem {
    pub item: Item,
    pub optional: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    After,
    Before,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalRule {
    pub id: String,
    pub language: String,
    pub recognizer: Vec<PatternItem>,
    pub normalizer: String,
    pub retrospective: Option<Direction>,
}

impl TemporalRule {
    pub fn needs_anchor(&self) -> bool {
        self.normalizer.contains("{A")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum VocabClass {
    Month,
    NumWord,
    Unit,
}

/// A rule set with its per-language vocabularies.
#[derive(Debug, Clone, Default)]
pub struct TemporalRules {
    rules: Vec<TemporalRule>,
    vocab: HashMap<(String, VocabClass), HashMap<String, String>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Captures {
    y: Option<i32>,
    m: Option<u32>,
    d: Option<u32>,
    n: Option<u32>,
    u: Option<char>,
}

enum Rendered {
    Value(String),
    Invalid,
    NeedsAnchor,
}

impl TemporalRules {
    pub fn parse(source: &str) -> Result<Self, AnnotatorError> {
        let err = |line: usize, message: String| AnnotatorError::Parse { line, message };
        let mut out = Self::default();
        for (line, text) in records(source) {
            if let Some(rest) = text.strip_prefix("V ") {
                let mut head = rest.splitn(3, char::is_whitespace);
                let (Some(lang), Some(class), Some(list)) = (head.next(), head.next(), head.next()) else {
                    return Err(err(line, "expected `V <lang> <CLASS> <word>=<value>, ...`".into()));
                };
                let class = match class {
                    "MONTH" => VocabClass::Month,
                    "NUMWORD" => VocabClass::NumWord,
                    "UNIT" => VocabClass::Unit,
                    other => return Err(err(line, format!("unknown vocabulary class {other}"))),
                };
                let map = out.vocab.entry((lang.to_string(), class)).or_default();
                for pair in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                    let (word, value) = pair.split_once('=').ok_or_else(|| err(line, format!("bad entry {pair:?}")))?;
                    let value = value.trim();
                    let ok = match class {
                        VocabClass::Month => value.parse::<u32>().is_ok_and(|m| (1..=12).contains(&m)),
                        VocabClass::NumWord => value.parse::<u32>().is_ok(),
                        VocabClass::Unit => matches!(value, "D" | "W" | "M" | "Y"),
                    };
                    if !ok {
                        return Err(err(line, format!("bad value in {pair:?}")));
                    }
                    map.insert(fold_label(word.trim()), value.to_string());
                }
            } else if let Some(rest) = text.strip_prefix("T ") {
                out.rules.push(parse_rule(line, rest)?);
            } else {
                return Err(err(line, "expected a `T` or `V` record".into()));
            }
        }
        Ok(out)
    }

    pub fn rules(&self) -> &[TemporalRule] {
        &self.rules
    }

    pub fn has_language(&self, lang: &str) -> bool {
        self.rules.iter().any(|r| r.language == lang)
    }

    pub fn merge(&mut self, other: TemporalRules) {
        self.rules.extend(other.rules);
        for (k, v) in other.vocab {
            self.vocab.entry(k).or_default().extend(v);
        }
    }

    fn vocab(&self, lang: &str, class: VocabClass, token: &str) -> Option<&str> {
        self.vocab.get(&(lang.to_string(), class))?.get(&fold_label(token)).map(String::as_str)
    }

    fn match_one(&self, lang: &str, item: &Item, token: &Token, caps: Captures) -> Option<Captures> {
        let text = token.text;
        let digits = !text.is_empty() && text.bytes().all(|b| b.is_ascii_digit());
        let mut c = caps;
        match item {
            Item::Literal(alts) => return alts.contains(&fold_label(text)).then_some(caps),
            Item::Slot(Slot::Day) => {
                let d: u32 = text.parse().ok().filter(|_| digits && text.len() <= 2)?;
                c.d = Some(d).filter(|d| (1..=31).contains(d));
                c.d?;
            }
            Item::Slot(Slot::MonthNum) => {
                let m: u32 = text.parse().ok().filter(|_| digits && text.len() <= 2)?;
                c.m = Some(m).filter(|m| (1..=12).contains(m));
                c.m?;
            }
            Item::Slot(Slot::Year) => {
                c.y = Some(text.parse().ok().filter(|_| digits && text.len() == 4)?);
            }
            Item::Slot(Slot::Month) => c.m = Some(self.vocab(lang, VocabClass::Month, text)?.parse().ok()?),
            Item::Slot(Slot::Num) => {
                c.n = if digits && text.len() <= 4 {
                    text.parse().ok()
                } else {
                    self.vocab(lang, VocabClass::NumWord, text)?.parse().ok()
                };
                c.n?;
            }
            Item::Slot(Slot::Unit) => c.u = self.vocab(lang, VocabClass::Unit, text)?.chars().next(),
            Item::Slot(Slot::DotDate) => {
                let parts: Vec<&str> = text.split('.').collect();
                let [d, m, y] = parts[..] else { return None };
                let num = |s: &str, lens: &[usize]| {
                    (lens.contains(&s.len()) && s.bytes().all(|b| b.is_ascii_digit())).then(|| s.parse::<u32>().ok()).flatten()
                };
                c.d = Some(num(d, &[1, 2])?);
                c.m = Some(num(m, &[1, 2])?);
                c.y = Some(num(y, &[4])? as i32);
            }
        }
        Some(c)
    }

    fn match_items(
        &self,
        lang: &str,
        items: &[PatternItem],
        tokens: &[Token],
        pos: usize,
        caps: Captures,
        out: &mut Vec<(usize, Captures)>,
    ) {
        let Some(first) = items.first() else {
            out.push((pos, caps));
            return;
        };
        if first.optional {
            self.match_items(lang, &items[1..], tokens, pos, caps, out);
        }
        if let Some(token) = tokens.get(pos) {
            if let Some(next) = self.match_one(lang, &first.item, token, caps) {
                self.match_items(lang, &items[1..], tokens, pos + 1, next, out);
            }
        }
    }
}

fn parse_rule(line: usize, rest: &str) -> Result<TemporalRule, AnnotatorError> {
    let err = |message: String| AnnotatorError::Parse { line, message };
    let mut parts = fields(rest);
    let head = parts.next().unwrap_or_default();
    let mut head = head.split_whitespace();
    let (Some(lang), Some(id), None) = (head.next(), head.next(), head.next()) else {
        return Err(err("expected `T <lang> <id>`".into()));
    };
    let (mut recognizer, mut normalizer) = (None, None);
    for field in parts {
        if let Some(p) = field.strip_prefix("match=") {
            recognizer = Some(parse_pattern(p).map_err(err)?);
        } else if let Some(t) = field.strip_prefix("norm=") {
            normalizer = Some(t.trim().to_string());
        } else {
            return Err(err(format!("unknown field {field:?}")));
        }
    }
    let recognizer = recognizer.ok_or_else(|| err("missing match=".into()))?;
    let mut normalizer = normalizer.ok_or_else(|| err("missing norm=".into()))?;
    if recognizer.iter().all(|i| i.optional) {
        return Err(err("pattern matches the empty sequence".into()));
    }
    let mut retrospective = None;
    for (prefix, dir) in [("AFTER:", Direction::After), ("BEFORE:", Direction::Before)] {
        if let Some(t) = normalizer.strip_prefix(prefix) {
            retrospective = Some(dir);
            normalizer = t.to_string();
        }
    }
    let mut rest = normalizer.as_str();
    while let Some(open) = rest.find('{') {
        let close = rest[open..].find('}').ok_or_else(|| err("unclosed placeholder".into()))? + open;
        let name = &rest[open + 1..close];
        if !known_placeholder(name) {
            return Err(err(format!("unknown placeholder {{{name}}}")));
        }
        rest = &rest[close + 1..];
    }
    Ok(TemporalRule { id: id.to_string(), language: lang.to_string(), recognizer, normalizer, retrospective })
}

fn parse_pattern(src: &str) -> Result<Vec<PatternItem>, String> {
    let mut items = Vec::new();
    for raw in src.split_whitespace() {
        let (body, optional) = match raw.strip_suffix('?') {
            Some(b) if !b.is_empty() => (b, true),
            _ => (raw, false),
        };
        let item = match body.strip_prefix('<').and_then(|b| b.strip_suffix('>')) {
            Some(name) => Item::Slot(Slot::parse(name).ok_or_else(|| format!("unknown slot <{name}>"))?),
            None => Item::Literal(body.split('/').filter(|a| !a.is_empty()).map(fold_label).collect()),
        };
        items.push(PatternItem { item, optional });
    }
    if items.is_empty() {
        return Err("empty pattern".into());
    }
    Ok(items)
}

fn known_placeholder(name: &str) -> bool {
    matches!(name, "Y" | "M" | "D" | "N" | "U") || parse_anchor_expr(name).is_some()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum AnchorExpr {
    Date(i64, char),
    Year(i32),
    Month(i32),
}

/// `ANCHOR`, `ANCHOR+P3D`, `ANCHOR-P1M`, `AY`, `AY+1`, `AM`, `AM-2`.
fn parse_anchor_expr(name: &str) -> Option<AnchorExpr> {
    let signed = |s: &str| -> Option<i32> {
        if s.is_empty() {
            return Some(0);
        }
        let (sign, digits) = s.split_at(1);
        let n: i32 = digits.parse().ok()?;
        match sign {
            "+" => Some(n),
            "-" => Some(-n),
            _ => None,
        }
    };
    if let Some(rest) = name.strip_prefix("ANCHOR") {
        if rest.is_empty() {
            return Some(AnchorExpr::Date(0, 'D'));
        }
        let (sign, dur) = rest.split_at(1);
        let dur = dur.strip_prefix('P')?;
        let unit = dur.chars().last()?;
        if !matches!(unit, 'D' | 'W' | 'M' | 'Y') {
            return None;
        }
        let n: i64 = dur[..dur.len() - 1].parse().ok()?;
        return match sign {
            "+" => Some(AnchorExpr::Date(n, unit)),
            "-" => Some(AnchorExpr::Date(-n, unit)),
            _ => None,
        };
    }
    if let Some(rest) = name.strip_prefix("AY") {
        return signed(rest).map(AnchorExpr::Year);
    }
    if let Some(rest) = name.strip_prefix("AM") {
        return signed(rest).map(AnchorExpr::Month);
    }
    None
}

/// Shifts a date by `n` units of D, W, M or Y.
pub fn shift_date(date: NaiveDate, n: i64, unit: char) -> Option<NaiveDate> {
    let months = |m: i64| -> Option<NaiveDate> {
        let abs = Months::new(u32::try_from(m.unsigned_abs()).ok()?);
        if m >= 0 {
            date.checked_add_months(abs)
        } else {
            date.checked_sub_months(abs)
        }
    };
    match unit {
        'D' | 'W' => {
            let days = if unit == 'W' { n.checked_mul(7)? } else { n };
            let abs = Days::new(days.unsigned_abs());
            if days >= 0 {
                date.checked_add_days(abs)
            } else {
                date.checked_sub_days(abs)
            }
        }
        'M' => months(n),
        'Y' => months(n.checked_mul(12)?),
        _ => None,
    }
}

fn render(template: &str, caps: &Captures, anchor: Option<NaiveDate>) -> Rendered {
    let mut out = String::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = open + rest[open..].find('}').unwrap_or(rest.len() - open);
        let name = &rest[open + 1..close.min(rest.len())];
        let piece = match name {
            "Y" => caps.y.map(|y| format!("{y:04}")),
            "M" => caps.m.map(|m| format!("{m:02}")),
            "D" => caps.d.map(|d| format!("{d:02}")),
            "N" => caps.n.map(|n| n.to_string()),
            "U" => caps.u.map(String::from),
            other => {
                let Some(a) = anchor else { return Rendered::NeedsAnchor };
                match parse_anchor_expr(other) {
                    Some(AnchorExpr::Date(n, u)) => shift_date(a, n, u).map(|d| d.format("%Y-%m-%d").to_string()),
                    Some(AnchorExpr::Year(n)) => Some(format!("{:04}", a.year() + n)),
                    Some(AnchorExpr::Month(n)) => shift_date(a.with_day(1).unwrap_or(a), n as i64, 'M')
                        .map(|d| d.format("%Y-%m").to_string()),
                    None => None,
                }
            }
        };
        match piece {
            Some(p) => out.push_str(&p),
            None => return Rendered::Invalid,
        }
        rest = rest.get(close + 1..).unwrap_or("");
    }
    out.push_str(rest);
    if is_iso_value(&out) {
        Rendered::Value(out)
    } else {
        Rendered::Invalid
    }
}

/// Calendar dates (`YYYY`, `YYYY-MM`, `YYYY-MM-DD`) and single-unit
/// durations (`P<n>D|W|M|Y`).
pub fn is_iso_value(v: &str) -> bool {
    if let Some(d) = v.strip_prefix('P') {
        let Some(unit) = d.chars().last() else { return false };
        let n = &d[..d.len() - unit.len_utf8()];
        return matches!(unit, 'D' | 'W' | 'M' | 'Y') && !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit());
    }
    parse_calendar(v).is_some()
}

fn parse_calendar(v: &str) -> Option<(i32, Option<u32>, Option<u32>)> {
    let parts: Vec<&str> = v.split('-').collect();
    let num = |s: &str, len: usize| (s.len() == len && s.bytes().all(|b| b.is_ascii_digit())).then(|| s.parse::<u32>().ok()).flatten();
    match parts[..] {
        [y] => Some((num(y, 4)? as i32, None, None)),
        [y, m] => {
            let m = num(m, 2).filter(|m| (1..=12).contains(m))?;
            Some((num(y, 4)? as i32, Some(m), None))
        }
        [y, m, d] => {
            let (y, m, d) = (num(y, 4)? as i32, num(m, 2)?, num(d, 2)?);
            NaiveDate::from_ymd_opt(y, m, d)?;
            Some((y, Some(m), Some(d)))
        }
        _ => None,
    }
}

fn parse_full_date(v: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(v.get(..10)?, "%Y-%m-%d").ok()
}

fn parse_duration(v: &str) -> Option<(i64, char)> {
    let d = v.strip_prefix('P')?;
    let unit = d.chars().last()?;
    Some((d[..d.len() - 1].parse().ok()?, unit))
}

struct Candidate<'r> {
    begin: usize,
    end: usize,
    rule: &'r TemporalRule,
    value: Option<String>,
}

/// Tags temporal expressions in `doc`. The document's `dct` metadata, when
/// it holds a date, takes precedence over the caller's `anchor`.
pub fn extract_temporal(
    doc: &Document,
    rules: &TemporalRules,
    anchor: Option<NaiveDate>,
) -> Result<Vec<Annotation>, AnnotatorError> {
    let lang = if rules.has_language(&doc.language) { doc.language.as_str() } else { primary_subtag(&doc.language) };
    let lang_rules: Vec<&TemporalRule> = rules.rules.iter().filter(|r| r.language == lang).collect();
    if lang_rules.is_empty() {
        return Err(AnnotatorError::NoRulesForLanguage(doc.language.clone()));
    }
    let anchor = doc.metadata.get(ANCHOR_KEY).and_then(|v| parse_full_date(v)).or(anchor);
    let tokens = tokenize(&doc.content);
    let mut candidates = Vec::new();
    for rule in &lang_rules {
        for start in 0..tokens.len() {
            let mut ends = Vec::new();
            rules.match_items(lang, &rule.recognizer, &tokens, start, Captures::default(), &mut ends);
            let Some(&(end, caps)) = ends.iter().filter(|(e, _)| *e > start).max_by_key(|(e, _)| *e) else { continue };
            let value = match render(&rule.normalizer, &caps, anchor) {
                Rendered::Value(v) => Some(v),
                Rendered::Invalid => continue,
                Rendered::NeedsAnchor => None,
            };
            candidates.push(Candidate { begin: tokens[start].begin, end: tokens[end - 1].end, rule, value });
        }
    }
    let selected = select_longest(candidates, |c| (c.begin, c.end));
    if let Some(c) = selected.iter().find(|c| c.value.is_none()) {
        return Err(AnnotatorError::MissingAnchor(c.rule.id.clone()));
    }
    let spans = sentences(&doc.content);
    let sentence_of = |pos: usize| spans.iter().position(|&(b, e)| b <= pos && pos < e);
    let mut out = Vec::with_capacity(selected.len());
    for (i, c) in selected.iter().enumerate() {
        let value = c.value.clone().unwrap_or_default();
        let normalized = match c.rule.retrospective {
            None => Some(value),
            Some(dir) => {
                let base = selected[i + 1..]
                    .iter()
                    .filter(|o| o.rule.retrospective.is_none() && sentence_of(o.begin) == sentence_of(c.begin))
                    .find_map(|o| o.value.as_deref().filter(|v| v.len() == 10).and_then(parse_full_date));
                let (n, unit) = parse_duration(&value).unwrap_or((0, 'D'));
                let n = if dir == Direction::Before { -n } else { n };
                base.and_then(|b| shift_date(b, n, unit)).map(|d| d.format("%Y-%m-%d").to_string())
            }
        };
        let mut ann = Annotation::over(doc, c.begin, c.end, AnnotationKind::TemporalExpression, PROVENANCE)
            .with_meta(RULE_KEY, c.rule.id.clone());
        ann.normalized = normalized;
        out.push(ann);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const RULES: &str = "\
V en MONTH january=1, march=3, february=2
V en NUMWORD two=2, three=3
V en UNIT day=D, days=D, week=W, weeks=W, month=M, months=M
T en dmy | match=<DAY> <MONTH> <YEAR> | norm={Y}-{M}-{D}
T en mdy | match=<MONTH> <DAY> ,? <YEAR> | norm={Y}-{M}-{D}
T en my | match=<MONTH> <YEAR> | norm={Y}-{M}
T en within | match=within <NUM> <UNIT> | norm=P{N}{U}
T en tomorrow | match=tomorrow | norm={ANCHOR+P1D}
T en next-year | match=next year | norm={AY+1}
T en after | match=<NUM> <UNIT> after | norm=AFTER:P{N}{U}
";

    fn run(text: &str, anchor: Option<NaiveDate>) -> Result<Vec<(String, Option<String>)>, AnnotatorError> {
        let rules = TemporalRules::parse(RULES).unwrap();
        let doc = Document::new("http://d/1", text, "en");
        Ok(extract_temporal(&doc, &rules, anchor)?.into_iter().map(|a| (a.anchor, a.normalized)).collect())
    }

    fn one(text: &str) -> Option<String> {
        let anchor = NaiveDate::from_ymd_opt(2019, 12, 31);
        let out = run(text, anchor).unwrap();
        assert_eq!(out.len(), 1, "{out:?}");
        out[0].1.clone()
    }

    #[test]
    fn absolute_dates() {
        assert_eq!(one("on 15 March 2019 the"), Some("2019-03-15".into()));
        assert_eq!(one("March 15, 2019"), Some("2019-03-15".into()));
        assert_eq!(one("since March 2019"), Some("2019-03".into()));
    }

    #[test]
    fn durations_and_anchor() {
        assert_eq!(one("within 30 days"), Some("P30D".into()));
        assert_eq!(one("within two weeks"), Some("P2W".into()));
        assert_eq!(one("tomorrow"), Some("2020-01-01".into()));
        assert_eq!(one("next year"), Some("2020".into()));
    }

    #[test]
    fn invalid_date_falls_back() {
        assert_eq!(one("31 February 2019"), Some("2019-02".into()));
    }

    #[test]
    fn missing_anchor() {
        assert_eq!(run("tomorrow", None), Err(AnnotatorError::MissingAnchor("tomorrow".into())));
        let rules = TemporalRules::parse(RULES).unwrap();
        let doc = Document::new("http://d/1", "tomorrow", "en").with_meta("dct", "2020-02-28");
        assert_eq!(extract_temporal(&doc, &rules, None).unwrap()[0].normalized.as_deref(), Some("2020-02-29"));
    }

    #[test]
    fn retrospective() {
        let out = run("three months after 1 January 2020 it ends.", None).unwrap();
        assert_eq!(out[0], ("three months after".into(), Some("2020-04-01".into())));
        assert_eq!(out[1].1.as_deref(), Some("2020-01-01"));
        let out = run("three months after that. 1 January 2020", None).unwrap();
        assert_eq!(out[0].1, None);
    }

    #[test]
    fn no_rules() {
        let rules = TemporalRules::parse(RULES).unwrap();
        let doc = Document::new("http://d/1", "x", "it");
        assert_eq!(extract_temporal(&doc, &rules, None), Err(AnnotatorError::NoRulesForLanguage("it".into())));
    }

    #[test]
    fn rule_errors() {
        assert!(matches!(TemporalRules::parse("T en x | match=<FOO> | norm={Y}"), Err(AnnotatorError::Parse { line: 1, .. })));
        assert!(matches!(TemporalRules::parse("T en x | match=a | norm={Q}"), Err(AnnotatorError::Parse { .. })));
        assert!(matches!(TemporalRules::parse("V en MONTH jan=13"), Err(AnnotatorError::Parse { .. })));
    }

    #[test]
    fn iso_values() {
        for v in ["2019", "2019-03", "2020-02-29", "P30D", "P2W"] {
            assert!(is_iso_value(v), "{v}");
        }
        for v in ["2019-13", "2019-02-30", "P", "PD", "19-03-01", "P3X"] {
            assert!(!is_iso_value(v), "{v}");
        }
    }
}
