mod common;

use std::time::Duration;

use lexflow_cli::platform::Platform;
use lexflow_core::engine::ProcessState;
use lexflow_core::workers::{StoreClient, WorkerPool};

#[test]
fn reopened_platform_reproduces_store_and_engine() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::corpus();
    let (export, hash, snapshot, pids) = {
        let platform = Platform::open(Some(dir.path()), common::resources()).unwrap();
        let pool = WorkerPool::spawn(&platform.resources.workers, &platform.worker_context());
        let lkg = platform.store.ensure_collection("lkg").unwrap();
        let mut pids = Vec::new();
        for doc in &corpus[..8] {
            platform.store.put_document(&lkg, doc.clone()).unwrap();
            let vars = common::document_vars(&platform.memory, doc);
            pids.push(platform.engine.start_process("lkg-population", vars).unwrap().id);
        }
        let done = common::wait_terminal(&platform.engine, &pids, Duration::from_secs(60));
        assert!(done.iter().all(|p| p.state == ProcessState::Completed), "{done:?}");
        pool.stop();
        (platform.store.export_triples(), platform.engine.state_hash(), platform.store.snapshot(), pids)
    };
    assert!(export.lines().count() > pids.len());

    let again = Platform::open(Some(dir.path()), common::resources()).unwrap();
    assert_eq!(again.store.export_triples(), export);
    assert!(again.store.snapshot() == snapshot);
    assert_eq!(again.engine.state_hash(), hash);
    for pid in &pids {
        assert_eq!(again.engine.get_process_state(pid).unwrap().state, ProcessState::Completed);
    }
    // shipped workflows are not duplicated by reopening
    assert!(again.deploy_shipped().unwrap().is_empty());
}
