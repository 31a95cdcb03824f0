//! Workflow engine: turns deployed DAG workflows into leasable jobs that
//! workers fetch by topic, lock, and complete or fail.
//!
//! All transitions go through one mutex, so they are linearizable. Each
//! successful transition is appended to a change log; replaying the log
//! (with the recorded timestamps and ids) rebuilds identical state.

pub mod definition;
mod state;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use definition::{NodeDef, WorkflowDefinition};
pub use state::{EngineState, EventKind, EngineEvent, EngineOp};

use crate::clock::{self, Clock};
use crate::memory;
use crate::persist::{ChangeLog, PersistError};

pub const DEFAULT_WAIT_CAP: Duration = Duration::from_secs(10);
pub const DEFAULT_TICK: Duration = Duration::from_secs(1);
const COMPACT_EVERY: usize = 2000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("workflow graph has a cycle: {}", .0.join(" -> "))]
    CyclicGraph(Vec<String>),
    #[error("edge {from} -> {to} references a missing node")]
    DanglingEdge { from: String, to: String },
    #[error("node {0} is declared twice")]
    DuplicateNode(String),
    #[error("invalid workflow definition: {0}")]
    InvalidDefinition(String),
    #[error("unknown workflow {0}")]
    UnknownWorkflow(String),
    #[error("unknown process {0}")]
    UnknownProcess(String),
    #[error("unknown job {0}")]
    UnknownJob(String),
    #[error("job {job} is not locked by {worker}")]
    NotLockOwner { job: String, worker: String },
    #[error("lock on job {0} expired")]
    LockExpired(String),
    #[error("process {0} was cancelled")]
    ProcessCancelled(String),
    #[error("process {0} already finished")]
    AlreadyTerminal(String),
    #[error("invalid variable {key}: {message}")]
    InvalidVariable { key: String, message: String },
    #[error("storage failure: {0}")]
    Storage(String),
}

impl From<PersistError> for EngineError {
    fn from(e: PersistError) -> Self {
        EngineError::Storage(e.to_string())
    }
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::CyclicGraph(_) => "cyclic-graph",
            EngineError::DanglingEdge { .. } => "dangling-edge",
            EngineError::DuplicateNode(_) => "duplicate-node",
            EngineError::InvalidDefinition(_) => "invalid-definition",
            EngineError::UnknownWorkflow(_) => "unknown-workflow",
            EngineError::UnknownProcess(_) => "unknown-process",
            EngineError::UnknownJob(_) => "unknown-job",
            EngineError::NotLockOwner { .. } => "not-lock-owner",
            EngineError::LockExpired(_) => "lock-expired",
            EngineError::ProcessCancelled(_) => "process-cancelled",
            EngineError::AlreadyTerminal(_) => "already-terminal",
            EngineError::InvalidVariable { .. } => "invalid-variable",
            EngineError::Storage(_) => "storage",
        }
    }
}

/// A process variable: an inline JSON value or a shared-memory reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum VariableValue {
    Inline(serde_json::Value),
    SharedRef(String),
}

impl VariableValue {
    pub fn inline(v: impl Into<serde_json::Value>) -> Self {
        VariableValue::Inline(v.into())
    }

    pub fn as_shared_ref(&self) -> Option<&str> {
        match self {
            VariableValue::SharedRef(k) => Some(k),
            VariableValue::Inline(_) => None,
        }
    }

    pub fn as_inline(&self) -> Option<&serde_json::Value> {
        match self {
            VariableValue::Inline(v) => Some(v),
            VariableValue::SharedRef(_) => None,
        }
    }
}

pub type Variables = BTreeMap<String, VariableValue>;

pub fn check_variables(vars: &Variables) -> Result<(), EngineError> {
    for (key, v) in vars {
        if let VariableValue::SharedRef(k) = v {
            if !memory::is_key(k) {
                return Err(EngineError::InvalidVariable { key: key.clone(), message: format!("{k:?} is not a shared-memory key") });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProcessState {
    Running,
    Completed,
    Failed,
    Cancelled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeState {
    Pending,
    Ready,
    Locked,
    Done,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobState {
    Available,
    Locked,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessInstance {
    pub id: String,
    pub workflow_id: String,
    pub workflow_version: usize,
    pub state: ProcessState,
    pub variables: Variables,
    pub node_states: BTreeMap<String, NodeState>,
    pub created_at: i64,
    pub finished_at: Option<i64>,
    #[serde(default)]
    pub error_message: Option<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub process_id: String,
    pub node_id: String,
    pub topic: String,
    pub state: JobState,
    pub retries_left: u32,
    pub lock_owner: Option<String>,
    pub lock_expiry: Option<i64>,
    pub variables_snapshot: Variables,
    pub error_message: Option<String>,
    /// Earliest time a failed job may be fetched again.
    #[serde(default)]
    pub retry_at: i64,
    /// Workers whose lock on this job expired.
    #[serde(default)]
    pub previous_owners: Vec<String>,
    pub created_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicLock {
    pub topic: String,
    pub lock_duration_ms: i64,
}

impl TopicLock {
    pub fn new(topic: impl Into<String>, lock_duration_ms: i64) -> Self {
        Self { topic: topic.into(), lock_duration_ms }
    }
}

struct Inner {
    state: EngineState,
    log: Option<ChangeLog>,
}

/// The engine handle; share it behind an `Arc`.
pub struct Engine {
    inner: Mutex<Inner>,
    work: Condvar,
    clock: Arc<dyn Clock>,
    pub wait_cap: Duration,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").finish_non_exhaustive()
    }
}

impl Engine {
    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        Self::with_parts(EngineState::default(), None, clock)
    }

    pub fn open(root: &Path, clock: Arc<dyn Clock>) -> Result<Self, EngineError> {
        let (log, state) = ChangeLog::open::<EngineState>(root)?;
        Ok(Self::with_parts(state, Some(log), clock))
    }

    fn with_parts(state: EngineState, log: Option<ChangeLog>, clock: Arc<dyn Clock>) -> Self {
        Self { inner: Mutex::new(Inner { state, log }), work: Condvar::new(), clock, wait_cap: DEFAULT_WAIT_CAP }
    }

    pub fn now(&self) -> i64 {
        self.clock.now_ms()
    }

    pub fn clock(&self) -> Arc<dyn Clock> {
        self.clock.clone()
    }

    /// Applies `op`; on success appends it to the log.
    fn commit(inner: &mut Inner, op: EngineOp) -> Result<state::Outcome, EngineError> {
        let outcome = inner.state.try_apply(&op)?;
        if let Some(log) = inner.log.as_mut() {
            log.append(&op)?;
            if log.ops_since_compaction() >= COMPACT_EVERY {
                log.compact(&inner.state)?;
            }
        }
        Ok(outcome)
    }

    pub fn deploy_workflow(&self, def: WorkflowDefinition) -> Result<String, EngineError> {
        def.validate()?;
        let id = def.id.clone();
        Self::commit(&mut self.inner.lock(), EngineOp::Deploy { definition: def })?;
        Ok(id)
    }

    pub fn workflow(&self, id: &str) -> Option<WorkflowDefinition> {
        self.inner.lock().state.latest_workflow(id).cloned()
    }

    pub fn workflow_ids(&self) -> Vec<String> {
        self.inner.lock().state.workflows.keys().cloned().collect()
    }

    pub fn start_process(&self, workflow_id: &str, variables: Variables) -> Result<ProcessInstance, EngineError> {
        check_variables(&variables)?;
        let process_id = uuid::Uuid::new_v4().to_string();
        let mut inner = self.inner.lock();
        let op = EngineOp::Start { process_id: process_id.clone(), workflow_id: workflow_id.to_string(), variables, now: self.now() };
        Self::commit(&mut inner, op)?;
        let view = inner.state.processes[&process_id].clone();
        drop(inner);
        self.work.notify_all();
        Ok(view)
    }

    /// Locks up to `max_jobs` available jobs on the given topics. Stale locks
    /// are expired first.
    pub fn fetch_and_lock(&self, worker_id: &str, topics: &[TopicLock], max_jobs: usize) -> Result<Vec<Job>, EngineError> {
        let mut inner = self.inner.lock();
        self.fetch_locked(&mut inner, worker_id, topics, max_jobs)
    }

    fn fetch_locked(&self, inner: &mut Inner, worker_id: &str, topics: &[TopicLock], max_jobs: usize) -> Result<Vec<Job>, EngineError> {
        let now = self.now();
        if inner.state.has_expired_locks(now) {
            Self::commit(inner, EngineOp::Expire { now })?;
        }
        let max_jobs = max_jobs.max(1);
        if !inner.state.has_available(topics, now) {
            return Ok(Vec::new());
        }
        let op = EngineOp::Fetch { worker_id: worker_id.to_string(), topics: topics.to_vec(), max_jobs, now };
        match Self::commit(inner, op)? {
            state::Outcome::Jobs(ids) => Ok(ids.iter().map(|id| inner.state.jobs[id].clone()).collect()),
            _ => Ok(Vec::new()),
        }
    }

    /// Like [`fetch_and_lock`](Self::fetch_and_lock) but waits up to
    /// `wait` (capped by `wait_cap`) for work to appear.
    pub fn fetch_and_lock_wait(
        &self,
        worker_id: &str,
        topics: &[TopicLock],
        max_jobs: usize,
        wait: Duration,
    ) -> Result<Vec<Job>, EngineError> {
        let deadline = Instant::now() + wait.min(self.wait_cap);
        let mut inner = self.inner.lock();
        loop {
            let jobs = self.fetch_locked(&mut inner, worker_id, topics, max_jobs)?;
            let now = Instant::now();
            if !jobs.is_empty() || now >= deadline {
                return Ok(jobs);
            }
            // wake periodically so retry backoffs and lock expiries are noticed
            let slice = (deadline - now).min(Duration::from_millis(50));
            self.work.wait_for(&mut inner, slice);
        }
    }

    pub fn complete_job(&self, job_id: &str, worker_id: &str, variables: Variables) -> Result<(), EngineError> {
        check_variables(&variables)?;
        let mut inner = self.inner.lock();
        let op = EngineOp::Complete { job_id: job_id.to_string(), worker_id: worker_id.to_string(), variables, now: self.now() };
        Self::commit(&mut inner, op)?;
        drop(inner);
        self.work.notify_all();
        Ok(())
    }

    pub fn fail_job(&self, job_id: &str, worker_id: &str, error_message: &str, retry_backoff_ms: i64) -> Result<(), EngineError> {
        let mut inner = self.inner.lock();
        let op = EngineOp::Fail {
            job_id: job_id.to_string(),
            worker_id: worker_id.to_string(),
            message: error_message.to_string(),
            backoff_ms: retry_backoff_ms.max(0),
            now: self.now(),
        };
        Self::commit(&mut inner, op)?;
        drop(inner);
        self.work.notify_all();
        Ok(())
    }

    /// Returns every job locked with `lock_expiry < now` to AVAILABLE.
    pub fn expire_locks(&self, now: i64) -> Result<usize, EngineError> {
        let mut inner = self.inner.lock();
        if !inner.state.has_expired_locks(now) {
            return Ok(0);
        }
        let n = match Self::commit(&mut inner, EngineOp::Expire { now })? {
            state::Outcome::Count(n) => n,
            _ => 0,
        };
        drop(inner);
        self.work.notify_all();
        Ok(n)
    }

    pub fn get_process_state(&self, process_id: &str) -> Result<ProcessInstance, EngineError> {
        self.inner.lock().state.processes.get(process_id).cloned().ok_or_else(|| EngineError::UnknownProcess(process_id.to_string()))
    }

    pub fn cancel_process(&self, process_id: &str) -> Result<(), EngineError> {
        let mut inner = self.inner.lock();
        Self::commit(&mut inner, EngineOp::Cancel { process_id: process_id.to_string(), now: self.now() })?;
        Ok(())
    }

    pub fn job(&self, job_id: &str) -> Option<Job> {
        self.inner.lock().state.jobs.get(job_id).cloned()
    }

    pub fn jobs_of(&self, process_id: &str) -> Vec<Job> {
        self.inner.lock().state.jobs.values().filter(|j| j.process_id == process_id).cloned().collect()
    }

    pub fn process_ids(&self) -> Vec<String> {
        self.inner.lock().state.processes.keys().cloned().collect()
    }

    pub fn events(&self) -> Vec<EngineEvent> {
        self.inner.lock().state.events.clone()
    }

    pub fn snapshot(&self) -> EngineState {
        self.inner.lock().state.clone()
    }

    /// SHA-256 over the canonical serialization of workflows, processes and
    /// jobs.
    pub fn state_hash(&self) -> String {
        self.inner.lock().state.hash()
    }

    pub fn audit(&self) -> Result<(), String> {
        self.inner.lock().state.audit()
    }

    pub fn compact(&self) -> Result<(), EngineError> {
        let mut inner = self.inner.lock();
        let Inner { state, log } = &mut *inner;
        if let Some(l) = log.as_mut() {
            l.compact(state)?;
        }
        Ok(())
    }
}

/// Background thread calling `expire_locks` every `period`; stops on drop.
pub struct Ticker {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl Ticker {
    pub fn spawn(engine: Arc<Engine>, period: Duration, also: Option<Arc<memory::SharedMemory>>) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = std::thread::spawn(move || {
            while !flag.load(Ordering::Relaxed) {
                let _ = engine.expire_locks(engine.now());
                if let Some(sm) = &also {
                    sm.sweep_now();
                }
                let mut slept = Duration::ZERO;
                while slept < period && !flag.load(Ordering::Relaxed) {
                    let step = Duration::from_millis(20).min(period - slept);
                    std::thread::sleep(step);
                    slept += step;
                }
            }
        });
        Self { stop, handle: Some(handle) }
    }
}

impl Drop for Ticker {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

pub fn system_engine() -> Engine {
    Engine::in_memory(clock::system())
}
