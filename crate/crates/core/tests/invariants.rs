use std::collections::BTreeSet;

use lexflow_core::annotators::matching::select_longest;
use lexflow_core::annotators::references::{is_roman, Feature, ReferencePattern};
use lexflow_core::clock::ManualClock;
use lexflow_core::engine::{Engine, NodeDef, TopicLock, Variables, WorkflowDefinition};
use lexflow_core::memory::{format_key, is_key, parse_key, SharedMemory};
use lexflow_core::model::validate_annotation;
use lexflow_core::retrieval::similarity::{combine, jaccard};
use lexflow_core::text::{fold_text, sentences, tokenize};
use lexflow_core::{Annotation, AnnotationKind, Document, LkgStore, Object, Triple};
use proptest::prelude::*;

fn text() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[a-zA-ZäöüßñéÄ0-9 .,;:!?()/'\\-\n\t🙂法]{0,80}").unwrap()
}

fn to_roman(mut n: u32) -> String {
    let table = [
        (1000, "M"),
        (900, "CM"),
        (500, "D"),
        (400, "CD"),
        (100, "C"),
        (90, "XC"),
        (50, "L"),
        (40, "XL"),
        (10, "X"),
        (9, "IX"),
        (5, "V"),
        (4, "IV"),
        (1, "I"),
    ];
    let mut out = String::new();
    for (v, s) in table {
        while n >= v {
            out.push_str(s);
            n -= v;
        }
    }
    out
}

#[test]
fn roman_numerals_are_exactly_the_canonical_forms() {
    let canonical: BTreeSet<String> = (1..4000).map(to_roman).collect();
    for n in 1..4000 {
        assert!(is_roman(&to_roman(n)));
    }
    // every short string over the numeral alphabet
    let letters = ['I', 'V', 'X', 'L', 'C', 'D', 'M'];
    let mut words = vec![String::new()];
    for _ in 0..4 {
        words = words.iter().flat_map(|w| letters.iter().map(move |c| format!("{w}{c}"))).collect();
        for w in &words {
            assert_eq!(is_roman(w), canonical.contains(w), "{w}");
        }
    }
}

proptest! {
    #[test]
    fn tokens_are_ordered_slices(s in text()) {
        let chars: Vec<char> = s.chars().collect();
        let mut last = 0;
        for t in tokenize(&s) {
            prop_assert!(t.begin >= last && t.begin < t.end && t.end <= chars.len());
            prop_assert_eq!(chars[t.begin..t.end].iter().collect::<String>(), t.text);
            prop_assert!(!t.text.chars().all(char::is_whitespace));
            last = t.end;
        }
    }

    #[test]
    fn folding_keeps_offsets(s in text()) {
        prop_assert_eq!(fold_text(&s).chars().count(), s.chars().count());
    }

    #[test]
    fn sentences_are_disjoint_and_trimmed(s in text()) {
        let chars: Vec<char> = s.chars().collect();
        let mut last = 0;
        for (b, e) in sentences(&s) {
            prop_assert!(last <= b && b < e && e <= chars.len());
            prop_assert!(!chars[b].is_whitespace() && !chars[e - 1].is_whitespace());
            last = e;
        }
    }

    #[test]
    fn longest_selection_is_disjoint_and_maximal(spans in prop::collection::vec((0usize..40, 1usize..10), 0..30)) {
        let spans: Vec<(usize, usize)> = spans.into_iter().map(|(b, l)| (b, b + l)).collect();
        let kept = select_longest(spans.clone(), |s| *s);
        for w in kept.windows(2) {
            prop_assert!(w[0].1 <= w[1].0);
        }
        for s in &spans {
            let blocked = kept.iter().any(|k| k.0 < s.1 && s.0 < k.1 && (k.1 - k.0) >= (s.1 - s.0));
            prop_assert!(kept.contains(s) || blocked, "{:?} dropped without a longer overlap", s);
        }
    }

    #[test]
    fn similarity_parts_are_bounded(
        a in prop::collection::btree_set("[a-e]", 0..5),
        b in prop::collection::btree_set("[a-e]", 0..5),
        alpha in 0.0f64..=1.0,
        cos in 0.0f64..=1.0,
    ) {
        let j = jaccard(&a, &b);
        prop_assert_eq!(j, jaccard(&b, &a));
        prop_assert!((0.0..=1.0).contains(&j));
        let c = combine(alpha, cos, j);
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert!(c >= cos.min(j) - 1e-12 && c <= cos.max(j) + 1e-12);
    }

    #[test]
    fn literals_round_trip_through_ntriples(value in "\\PC*", tag in prop::option::of("[a-z]{2}(-[A-Z]{2})?")) {
        let t = Triple::new("http://s.local/x", "http://p.local/y", Object::literal(value, tag.as_deref()));
        let line = t.to_string();
        prop_assert!(!line.contains('\n'));
        prop_assert_eq!(Triple::parse_line(&line).unwrap(), t);
    }

    #[test]
    fn review_lines_round_trip(
        lits in prop::collection::vec("[^\\n]{1,12}", 1..3),
        holes in prop::collection::vec(0u8..4, 0..4),
        support in 1usize..1000,
        approved: bool,
    ) {
        let mut features: Vec<Feature> = lits.into_iter().map(Feature::Literal).collect();
        features.extend(holes.into_iter().map(|h| match h {
            0 => Feature::Digits,
            1 => Feature::DigitsSlashDigits,
            2 => Feature::Roman,
            _ => Feature::UppercaseAbbr,
        }));
        let p = ReferencePattern { id: "p7".into(), features, support, approved };
        prop_assert_eq!(ReferencePattern::parse_line(&p.to_line()).unwrap(), p);
    }

    #[test]
    fn annotations_over_any_span_validate(s in text(), a in 0usize..100, b in 0usize..100) {
        let doc = Document::new("http://d.local/1", s, "de");
        let n = doc.char_len();
        let (b, e) = (a.min(b).min(n), a.max(b).min(n));
        prop_assume!(b < e);
        let ann = Annotation::over(&doc, b, e, AnnotationKind::Structure, "prop");
        prop_assert!(validate_annotation(&ann, &doc).is_ok());
        prop_assert_eq!(ann.anchor.chars().count(), e - b);
    }

    #[test]
    fn memory_round_trips(payload in prop::collection::vec(any::<u8>(), 0..2048), big: bool) {
        let clock = ManualClock::new(1_000);
        let dir = tempfile::tempdir().unwrap();
        let mem = SharedMemory::new(big.then(|| dir.path()), clock);
        let key = mem.put(&payload, "application/octet-stream", None).unwrap();
        prop_assert!(is_key(&key));
        prop_assert_eq!(&mem.get(&key).unwrap().payload[..], &payload[..]);
        prop_assert_eq!(format_key(parse_key(&key).unwrap()), key);
    }
}

#[derive(Debug, Clone)]
enum Op {
    Start,
    Fetch(u8, u8, i64),
    Complete(u8, u8),
    Fail(u8, u8, i64),
    Advance(i64),
    Cancel(u8),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        2 => Just(Op::Start),
        4 => (0u8..3, 0u8..3, 10i64..500).prop_map(|(w, t, l)| Op::Fetch(w, t, l)),
        4 => (0u8..3, any::<u8>()).prop_map(|(w, j)| Op::Complete(w, j)),
        1 => (0u8..3, any::<u8>(), 0i64..200).prop_map(|(w, j, b)| Op::Fail(w, j, b)),
        2 => (1i64..400).prop_map(Op::Advance),
        1 => any::<u8>().prop_map(Op::Cancel),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn engine_replay_matches_live_state(ops in prop::collection::vec(op(), 1..60)) {
        let dir = tempfile::tempdir().unwrap();
        let clock = ManualClock::new(10_000);
        let def = WorkflowDefinition {
            id: "w".into(),
            nodes: ["a", "b", "c"].iter().enumerate().map(|(i, n)| NodeDef { id: n.to_string(), topic: format!("t{i}"), retries: 2 }).collect(),
            edges: vec![("a".into(), "c".into()), ("b".into(), "c".into())],
        };
        let (hash, jobs_seen) = {
            let engine = Engine::open(dir.path(), clock.clone()).unwrap();
            engine.deploy_workflow(def).unwrap();
            let mut pids = Vec::new();
            let mut held: Vec<(String, String)> = Vec::new();
            for op in ops {
                match op {
                    Op::Start => pids.push(engine.start_process("w", Variables::new()).unwrap().id),
                    Op::Fetch(w, t, lock) => {
                        let worker = format!("w{w}");
                        for j in engine.fetch_and_lock(&worker, &[TopicLock::new(format!("t{t}"), lock)], 2).unwrap() {
                            held.push((j.id, worker.clone()));
                        }
                    }
                    Op::Complete(w, j) if !held.is_empty() => {
                        let (job, owner) = held[j as usize % held.len()].clone();
                        let worker = if w == 0 { format!("w{w}") } else { owner };
                        let _ = engine.complete_job(&job, &worker, Variables::new());
                    }
                    Op::Fail(w, j, backoff) if !held.is_empty() => {
                        let (job, owner) = held[j as usize % held.len()].clone();
                        let worker = if w == 0 { format!("w{w}") } else { owner };
                        let _ = engine.fail_job(&job, &worker, "boom", backoff);
                    }
                    Op::Advance(ms) => {
                        clock.advance(ms);
                        engine.expire_locks(clock.advance(0)).unwrap();
                    }
                    Op::Cancel(p) if !pids.is_empty() => {
                        let _ = engine.cancel_process(&pids[p as usize % pids.len()]);
                    }
                    _ => {}
                }
                prop_assert!(engine.audit().is_ok(), "{:?}", engine.audit());
            }
            (engine.state_hash(), held.len())
        };
        let reopened = Engine::open(dir.path(), clock).unwrap();
        prop_assert_eq!(reopened.state_hash(), hash, "after {} locks", jobs_seen);
    }

    #[test]
    fn store_reopens_to_the_same_state(
        ops in prop::collection::vec((0u8..3, 0u8..8, "[a-zäö ]{1,20}", prop::option::of(0u8..4)), 1..40)
    ) {
        let dir = tempfile::tempdir().unwrap();
        let live = {
            let store = LkgStore::open(dir.path()).unwrap();
            let cid = store.create_collection("c").unwrap().id;
            for (kind, n, content, reference) in ops {
                let id = format!("http://lkg.local/doc/{n}");
                match kind {
                    0 => {
                        store.put_document(&cid, Document::new(&id, content, "de")).unwrap();
                    }
                    1 => {
                        let _ = store.delete_document(&id);
                    }
                    _ => {
                        if let Ok((doc, _)) = store.get_document(&id) {
                            let mut ann = Annotation::over(&doc, 0, 1, AnnotationKind::EntityMention, "p");
                            ann.reference = reference.map(|r| format!("http://r.local/{r}"));
                            store.add_annotations(&id, vec![ann]).unwrap();
                        }
                    }
                }
            }
            prop_assert!(store.audit().is_ok());
            (store.snapshot(), store.export_triples())
        };
        let again = LkgStore::open(dir.path()).unwrap();
        prop_assert!(again.snapshot() == live.0);
        prop_assert_eq!(again.export_triples(), live.1);
    }
}
