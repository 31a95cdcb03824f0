#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use lexflow_core::corpus::load_document_dir;
use lexflow_core::engine::{Engine, ProcessInstance, ProcessState, VariableValue, Variables};
use lexflow_core::memory::{SharedMemory, JSON};
use lexflow_core::resources::Resources;
use lexflow_core::workers::DOCUMENT;
use lexflow_core::Document;

pub fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn resources_dir() -> PathBuf {
    root().join("resources")
}

pub fn resources() -> Resources {
    Resources::load(&resources_dir()).expect("shipped resources load")
}

pub fn corpus() -> Vec<Document> {
    load_document_dir(&root().join("fixtures/corpus"), "en").expect("corpus loads")
}

pub fn faq() -> Vec<Document> {
    load_document_dir(&root().join("fixtures/faq"), "en").expect("faq loads")
}

/// Tab-separated fixture rows, `#` lines skipped.
pub fn tsv(name: &str) -> Vec<Vec<String>> {
    let src = std::fs::read_to_string(root().join("fixtures").join(name)).expect("fixture readable");
    src.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

/// `{"document": <shared ref>}` for starting a process.
pub fn document_vars(memory: &SharedMemory, doc: &Document) -> Variables {
    let key = memory.put(&serde_json::to_vec(doc).unwrap(), JSON, None).expect("memory put");
    Variables::from([(DOCUMENT.to_string(), VariableValue::SharedRef(key))])
}

pub fn wait_terminal(engine: &Engine, pids: &[String], timeout: Duration) -> Vec<ProcessInstance> {
    let deadline = Instant::now() + timeout;
    loop {
        let states: Vec<ProcessInstance> = pids.iter().map(|p| engine.get_process_state(p).unwrap()).collect();
        if states.iter().all(|p| p.state != ProcessState::Running) || Instant::now() >= deadline {
            return states;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
}
