use std::time::Duration;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use lexflow_bench::{documents, references, resources};
use lexflow_core::annotators::concepts::extract_concepts;
use lexflow_core::clock;
use lexflow_core::engine::{Engine, NodeDef, TopicLock, Variables, WorkflowDefinition};
use lexflow_core::retrieval::{self, hybrid_similarity, SimilarityConfig};

fn search(c: &mut Criterion) {
    let res = resources();
    let mut group = c.benchmark_group("search");
    for n in [100, 1000] {
        let docs = documents(&res, n, 7);
        let index = retrieval::build_index("bench", &docs, &res.stopwords).unwrap();
        group.bench_function(format!("index_{n}"), |b| b.iter(|| retrieval::build_index("bench", &docs, &res.stopwords).unwrap()));
        group.bench_function(format!("query_{n}"), |b| {
            b.iter(|| retrieval::search(&index, "employer notice period salary", "en", 10, &res.stopwords).unwrap())
        });
    }
    group.finish();
}

fn similarity(c: &mut Criterion) {
    let res = resources();
    let docs = documents(&res, 200, 11);
    let refs = references(&res, &docs, 13);
    let index = retrieval::build_index("bench", &docs, &res.stopwords).unwrap();
    let mut group = c.benchmark_group("similarity");
    for depth in [0, 1, 2] {
        let cfg = SimilarityConfig::new(0.5, depth).unwrap();
        group.bench_function(format!("hybrid_depth_{depth}"), |b| {
            let mut i = 0;
            b.iter(|| {
                i = (i + 1) % (docs.len() - 1);
                hybrid_similarity(&index, &refs, &res.taxonomy, &docs[i].id, &docs[i + 1].id, &cfg).unwrap()
            })
        });
    }
    group.finish();
}

fn concepts(c: &mut Criterion) {
    let res = resources();
    let docs = documents(&res, 50, 17);
    let chars: usize = docs.iter().map(|d| d.char_len()).sum();
    let mut group = c.benchmark_group("concepts");
    group.throughput(Throughput::Bytes(chars as u64));
    group.bench_function("extract_50_docs", |b| {
        b.iter(|| docs.iter().map(|d| extract_concepts(d, &res.taxonomy).unwrap().len()).sum::<usize>())
    });
    group.finish();
}

fn engine(c: &mut Criterion) {
    let def = WorkflowDefinition {
        id: "chain".into(),
        nodes: (0..3).map(|i| NodeDef { id: format!("n{i}"), topic: format!("t{i}"), retries: 1 }).collect(),
        edges: vec![("n0".into(), "n1".into()), ("n1".into(), "n2".into())],
    };
    let processes = 100;
    let mut group = c.benchmark_group("engine");
    group.throughput(Throughput::Elements((processes * def.nodes.len()) as u64));
    group.measurement_time(Duration::from_secs(8));
    group.bench_function("chain_of_3_x100", |b| {
        b.iter_batched(
            || {
                let engine = Engine::in_memory(clock::system());
                engine.deploy_workflow(def.clone()).unwrap();
                for _ in 0..processes {
                    engine.start_process("chain", Variables::new()).unwrap();
                }
                engine
            },
            |engine| {
                let topics: Vec<TopicLock> = (0..3).map(|i| TopicLock::new(format!("t{i}"), 60_000)).collect();
                loop {
                    let jobs = engine.fetch_and_lock("w", &topics, 32).unwrap();
                    if jobs.is_empty() {
                        break;
                    }
                    for j in jobs {
                        engine.complete_job(&j.id, "w", Variables::new()).unwrap();
                    }
                }
            },
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, search, similarity, concepts, engine);
criterion_main!(benches);
