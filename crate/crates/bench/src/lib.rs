//! Synthetic inputs shared by the benchmarks.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use lexflow_core::resources::Resources;
use lexflow_core::Document;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn resources_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../resources")
}

pub fn resources() -> Resources {
    Resources::load(&resources_dir()).expect("shipped resources load")
}

/// `n` English documents drawn from the taxonomy labels and a filler vocabulary.
pub fn documents(resources: &Resources, n: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vocab: Vec<String> = resources.taxonomy.labels_in("en").map(|(l, _)| l.to_string()).collect();
    vocab.extend(
        ["court", "employer", "notice", "salary", "tribunal", "appeal", "statute", "clause", "party", "damages", "period", "license"]
            .iter()
            .map(|s| s.to_string()),
    );
    (0..n)
        .map(|i| {
            let sentences: Vec<String> = (0..rng.random_range(3..8))
                .map(|_| {
                    let words: Vec<&str> = (0..rng.random_range(6..16)).map(|_| vocab.choose(&mut rng).unwrap().as_str()).collect();
                    format!("The {}.", words.join(" "))
                })
                .collect();
            Document::new(format!("http://lkg.local/doc/b{i}"), sentences.join(" "), "en")
        })
        .collect()
}

/// Random concept references per document.
pub fn references(resources: &Resources, docs: &[Document], seed: u64) -> BTreeMap<String, BTreeSet<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = resources.taxonomy.labels_in("en").flat_map(|(_, c)| c.iter().cloned()).collect();
    docs.iter()
        .map(|d| {
            let refs = (0..rng.random_range(0..6)).filter_map(|_| ids.choose(&mut rng).cloned()).collect();
            (d.id.clone(), refs)
        })
        .collect()
}
