//! Token-boundary phrase matching and overlap resolution shared by the
//! dictionary-driven annotators.

use std::collections::{BTreeSet, HashMap};

use crate::text::{fold_char, fold_label, tokenize};

/// A phrase occurrence `[begin, end)` in code points; `payloads` indexes the
/// values registered for that phrase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseMatch {
    pub begin: usize,
    pub end: usize,
    pub payloads: Vec<usize>,
}

#[derive(Debug, Default, Clone)]
struct Node {
    children: HashMap<char, usize>,
    terminal: Vec<usize>,
}

/// Character trie over phrases. Matches must start at a token start and end
/// at a token end of the searched text.
#[derive(Debug, Clone)]
pub struct PhraseMatcher {
    nodes: Vec<Node>,
    fold: bool,
}

impl PhraseMatcher {
    /// `fold` selects case-insensitive matching (NFC + simple case fold).
    pub fn new(fold: bool) -> Self {
        Self { nodes: vec![Node::default()], fold }
    }

    pub fn insert(&mut self, phrase: &str, payload: usize) {
        let key: Vec<char> = if self.fold { fold_label(phrase).chars().collect() } else { phrase.chars().collect() };
        if key.is_empty() {
            return;
        }
        let mut node = 0;
        for c in key {
            node = match self.nodes[node].children.get(&c) {
                Some(&n) => n,
                None => {
                    self.nodes.push(Node::default());
                    let n = self.nodes.len() - 1;
                    self.nodes[node].children.insert(c, n);
                    n
                }
            };
        }
        if !self.nodes[node].terminal.contains(&payload) {
            self.nodes[node].terminal.push(payload);
        }
    }

    /// Every boundary-aligned occurrence, overlapping ones included.
    pub fn find_all(&self, text: &str) -> Vec<PhraseMatch> {
        let chars: Vec<char> = if self.fold { text.chars().map(fold_char).collect() } else { text.chars().collect() };
        let tokens = tokenize(text);
        let ends: BTreeSet<usize> = tokens.iter().map(|t| t.end).collect();
        let mut starts: Vec<usize> = tokens.iter().map(|t| t.begin).collect();
        starts.dedup();
        let mut out = Vec::new();
        for start in starts {
            let mut node = 0;
            for (offset, c) in chars[start..].iter().enumerate() {
                let Some(&next) = self.nodes[node].children.get(c) else { break };
                node = next;
                let end = start + offset + 1;
                if !self.nodes[node].terminal.is_empty() && ends.contains(&end) {
                    out.push(PhraseMatch { begin: start, end, payloads: self.nodes[node].terminal.clone() });
                }
            }
        }
        out
    }
}

/// Keeps a non-overlapping subset: longest spans first, leftmost among equal
/// lengths, earlier input order among identical spans. Output is sorted by
/// position.
pub fn select_longest<T, F>(mut candidates: Vec<T>, span: F) -> Vec<T>
where
    F: Fn(&T) -> (usize, usize),
{
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&i| {
        let (b, e) = span(&candidates[i]);
        (std::cmp::Reverse(e - b), b, i)
    });
    let mut taken: Vec<(usize, usize)> = Vec::new();
    let mut keep = vec![false; candidates.len()];
    for i in order {
        let (b, e) = span(&candidates[i]);
        if taken.iter().all(|&(tb, te)| e <= tb || te <= b) {
            taken.push((b, e));
            keep[i] = true;
        }
    }
    let mut idx = 0;
    candidates.retain(|_| {
        idx += 1;
        keep[idx - 1]
    });
    candidates.sort_by_key(|c| span(c));
    candidates
}
