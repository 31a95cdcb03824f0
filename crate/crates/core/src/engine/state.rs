use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    EngineError, Job, JobState, NodeState, ProcessInstance, ProcessState, TopicLock, Variables, WorkflowDefinition,
};
use crate::persist::LogState;

/// A logged engine transition. Ids and timestamps are recorded so replay is
/// deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EngineOp {
    Deploy { definition: WorkflowDefinition },
    Start { process_id: String, workflow_id: String, variables: Variables, now: i64 },
    Fetch { worker_id: String, topics: Vec<TopicLock>, max_jobs: usize, now: i64 },
    Complete { job_id: String, worker_id: String, variables: Variables, now: i64 },
    Fail { job_id: String, worker_id: String, message: String, backoff_ms: i64, now: i64 },
    Expire { now: i64 },
    Cancel { process_id: String, now: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    ProcessStarted,
    ProcessCompleted,
    ProcessFailed,
    ProcessCancelled,
    JobCreated,
    JobLocked { worker: String, expiry: i64 },
    JobCompleted { worker: String },
    JobFailed { worker: String, retries_left: u32 },
    LockExpired { worker: String },
    JobWithdrawn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineEvent {
    pub seq: u64,
    pub at: i64,
    pub process_id: String,
    pub node_id: Option<String>,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug)]
pub(crate) enum Outcome {
    None,
    Jobs(Vec<String>),
    Count(usize),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    /// Every deployed version per workflow id; processes pin a version.
    pub workflows: BTreeMap<String, Vec<WorkflowDefinition>>,
    pub processes: BTreeMap<String, ProcessInstance>,
    pub jobs: BTreeMap<String, Job>,
    pub events: Vec<EngineEvent>,
    /// Which node last wrote each variable of each process.
    pub writers: BTreeMap<String, BTreeMap<String, String>>,
    pub next_job_seq: u64,
}

pub fn job_id(process_id: &str, node_id: &str) -> String {
    format!("{process_id}:{node_id}")
}

impl EngineState {
    pub fn latest_workflow(&self, id: &str) -> Option<&WorkflowDefinition> {
        self.workflows.get(id).and_then(|v| v.last())
    }

    pub fn definition_of(&self, p: &ProcessInstance) -> &WorkflowDefinition {
        &self.workflows[&p.workflow_id][p.workflow_version]
    }

    pub(crate) fn has_expired_locks(&self, now: i64) -> bool {
        self.jobs.values().any(|j| j.state == JobState::Locked && j.lock_expiry.is_some_and(|e| e < now))
    }

    pub(crate) fn has_available(&self, topics: &[TopicLock], now: i64) -> bool {
        self.jobs.values().any(|j| self.fetchable(j, topics, now))
    }

    fn fetchable(&self, j: &Job, topics: &[TopicLock], now: i64) -> bool {
        j.state == JobState::Available
            && j.retry_at <= now
            && topics.iter().any(|t| t.topic == j.topic)
            && self.processes.get(&j.process_id).is_some_and(|p| p.state == ProcessState::Running)
    }

    fn event(&mut self, at: i64, process_id: &str, node_id: Option<&str>, kind: EventKind) {
        let seq = self.events.len() as u64;
        self.events.push(EngineEvent { seq, at, process_id: process_id.to_string(), node_id: node_id.map(str::to_string), kind });
    }

    fn spawn_job(&mut self, process_id: &str, node_id: &str, now: i64) {
        let p = &self.processes[process_id];
        let def = self.definition_of(p);
        let node = def.node(node_id).expect("node exists in pinned definition");
        let job = Job {
            id: job_id(process_id, node_id),
            process_id: process_id.to_string(),
            node_id: node_id.to_string(),
            topic: node.topic.clone(),
            state: JobState::Available,
            retries_left: node.retries,
            lock_owner: None,
            lock_expiry: None,
            variables_snapshot: p.variables.clone(),
            error_message: None,
            retry_at: now,
            previous_owners: Vec::new(),
            created_seq: self.next_job_seq,
        };
        self.next_job_seq += 1;
        self.jobs.insert(job.id.clone(), job);
        self.processes.get_mut(process_id).unwrap().node_states.insert(node_id.to_string(), NodeState::Ready);
        self.event(now, process_id, Some(node_id), EventKind::JobCreated);
    }

    /// Removes AVAILABLE jobs of a process that stopped running.
    fn withdraw_available(&mut self, process_id: &str, now: i64) {
        let ids: Vec<String> = self
            .jobs
            .values()
            .filter(|j| j.process_id == process_id && j.state == JobState::Available)
            .map(|j| j.id.clone())
            .collect();
        for id in ids {
            let job = self.jobs.remove(&id).unwrap();
            self.event(now, process_id, Some(&job.node_id), EventKind::JobWithdrawn);
        }
    }

    /// Ownership check shared by complete and fail.
    fn check_owner(&self, job_id: &str, worker_id: &str, now: i64) -> Result<&Job, EngineError> {
        let job = self.jobs.get(job_id).ok_or_else(|| EngineError::UnknownJob(job_id.to_string()))?;
        if self.processes.get(&job.process_id).is_some_and(|p| p.state == ProcessState::Cancelled) {
            return Err(EngineError::ProcessCancelled(job.process_id.clone()));
        }
        let owns = job.state == JobState::Locked && job.lock_owner.as_deref() == Some(worker_id);
        if owns {
            if job.lock_expiry.is_some_and(|e| e < now) {
                return Err(EngineError::LockExpired(job_id.to_string()));
            }
            return Ok(job);
        }
        if job.previous_owners.iter().any(|w| w == worker_id) {
            return Err(EngineError::LockExpired(job_id.to_string()));
        }
        Err(EngineError::NotLockOwner { job: job_id.to_string(), worker: worker_id.to_string() })
    }

    /// Validates `op` against the current state and applies it. Nothing is
    /// modified when an error is returned.
    pub(crate) fn try_apply(&mut self, op: &EngineOp) -> Result<Outcome, EngineError> {
        match op {
            EngineOp::Deploy { definition } => {
                definition.validate()?;
                self.workflows.entry(definition.id.clone()).or_default().push(definition.clone());
                Ok(Outcome::None)
            }
            EngineOp::Start { process_id, workflow_id, variables, now } => {
                let versions = self.workflows.get(workflow_id).ok_or_else(|| EngineError::UnknownWorkflow(workflow_id.clone()))?;
                let version = versions.len() - 1;
                let def = &versions[version];
                let roots: Vec<String> = def.roots().into_iter().map(str::to_string).collect();
                let node_states = def.nodes.iter().map(|n| (n.id.clone(), NodeState::Pending)).collect();
                let process = ProcessInstance {
                    id: process_id.clone(),
                    workflow_id: workflow_id.clone(),
                    workflow_version: version,
                    state: ProcessState::Running,
                    variables: variables.clone(),
                    node_states,
                    created_at: *now,
                    finished_at: None,
                    error_message: None,
                    warnings: Vec::new(),
                };
                self.processes.insert(process_id.clone(), process);
                self.event(*now, process_id, None, EventKind::ProcessStarted);
                for root in roots {
                    self.spawn_job(process_id, &root, *now);
                }
                Ok(Outcome::None)
            }
            EngineOp::Fetch { worker_id, topics, max_jobs, now } => {
                let mut candidates: Vec<(u64, String)> = self
                    .jobs
                    .values()
                    .filter(|j| self.fetchable(j, topics, *now))
                    .map(|j| (j.created_seq, j.id.clone()))
                    .collect();
                candidates.sort();
                candidates.truncate(*max_jobs);
                let mut locked = Vec::new();
                for (_, id) in candidates {
                    let job = self.jobs.get_mut(&id).unwrap();
                    let duration = topics.iter().find(|t| t.topic == job.topic).map_or(0, |t| t.lock_duration_ms.max(1));
                    let expiry = now.saturating_add(duration);
                    job.state = JobState::Locked;
                    job.lock_owner = Some(worker_id.clone());
                    job.lock_expiry = Some(expiry);
                    let (pid, nid) = (job.process_id.clone(), job.node_id.clone());
                    self.processes.get_mut(&pid).unwrap().node_states.insert(nid.clone(), NodeState::Locked);
                    self.event(*now, &pid, Some(&nid), EventKind::JobLocked { worker: worker_id.clone(), expiry });
                    locked.push(id);
                }
                Ok(Outcome::Jobs(locked))
            }
            EngineOp::Complete { job_id, worker_id, variables, now } => {
                let job = self.check_owner(job_id, worker_id, *now)?;
                let (pid, nid) = (job.process_id.clone(), job.node_id.clone());
                let job = self.jobs.get_mut(job_id).unwrap();
                job.state = JobState::Completed;
                job.lock_owner = None;
                job.lock_expiry = None;
                self.event(*now, &pid, Some(&nid), EventKind::JobCompleted { worker: worker_id.clone() });

                let def = self.definition_of(&self.processes[&pid]).clone();
                let ancestors = def.ancestors(&nid);
                let writers = self.writers.entry(pid.clone()).or_default();
                let process = self.processes.get_mut(&pid).unwrap();
                for (key, value) in variables {
                    if let Some(prev) = writers.get(key) {
                        if !ancestors.contains(prev) && process.variables.get(key) != Some(value) {
                            process.warnings.push(format!("variable {key} written by {prev} was overwritten by {nid}"));
                        }
                    }
                    writers.insert(key.clone(), nid.clone());
                    process.variables.insert(key.clone(), value.clone());
                }
                process.node_states.insert(nid.clone(), NodeState::Done);
                if process.state != ProcessState::Running {
                    return Ok(Outcome::None);
                }
                let ready: Vec<String> = def
                    .successors(&nid)
                    .filter(|s| def.predecessors(s).all(|p| process.node_states.get(p) == Some(&NodeState::Done)))
                    .filter(|s| process.node_states.get(*s) == Some(&NodeState::Pending))
                    .map(str::to_string)
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let all_done = process.node_states.values().all(|s| *s == NodeState::Done);
                if all_done {
                    process.state = ProcessState::Completed;
                    process.finished_at = Some(*now);
                    self.event(*now, &pid, None, EventKind::ProcessCompleted);
                }
                for s in ready {
                    self.spawn_job(&pid, &s, *now);
                }
                Ok(Outcome::None)
            }
            EngineOp::Fail { job_id, worker_id, message, backoff_ms, now } => {
                let job = self.check_owner(job_id, worker_id, *now)?;
                let (pid, nid) = (job.process_id.clone(), job.node_id.clone());
                let job = self.jobs.get_mut(job_id).unwrap();
                job.retries_left = job.retries_left.saturating_sub(1);
                job.lock_owner = None;
                job.lock_expiry = None;
                job.error_message = Some(message.clone());
                let retries_left = job.retries_left;
                let process = self.processes.get_mut(&pid).unwrap();
                if retries_left > 0 && process.state != ProcessState::Running {
                    self.jobs.remove(job_id);
                    self.event(*now, &pid, Some(&nid), EventKind::JobFailed { worker: worker_id.clone(), retries_left });
                    self.event(*now, &pid, Some(&nid), EventKind::JobWithdrawn);
                    return Ok(Outcome::None);
                }
                if retries_left > 0 {
                    job.state = JobState::Available;
                    job.retry_at = now.saturating_add(*backoff_ms);
                    process.node_states.insert(nid.clone(), NodeState::Ready);
                    self.event(*now, &pid, Some(&nid), EventKind::JobFailed { worker: worker_id.clone(), retries_left });
                    return Ok(Outcome::None);
                }
                job.state = JobState::Failed;
                process.node_states.insert(nid.clone(), NodeState::Failed);
                let was_running = process.state == ProcessState::Running;
                if was_running {
                    process.state = ProcessState::Failed;
                    process.finished_at = Some(*now);
                    process.error_message = Some(format!("{nid}: {message}"));
                }
                self.event(*now, &pid, Some(&nid), EventKind::JobFailed { worker: worker_id.clone(), retries_left });
                if was_running {
                    self.event(*now, &pid, None, EventKind::ProcessFailed);
                    self.withdraw_available(&pid, *now);
                }
                Ok(Outcome::None)
            }
            EngineOp::Expire { now } => {
                let expired: Vec<String> = self
                    .jobs
                    .values()
                    .filter(|j| j.state == JobState::Locked && j.lock_expiry.is_some_and(|e| e < *now))
                    .map(|j| j.id.clone())
                    .collect();
                let mut requeued = 0;
                for id in expired {
                    let job = self.jobs.get_mut(&id).unwrap();
                    let worker = job.lock_owner.take().unwrap_or_default();
                    job.lock_expiry = None;
                    job.state = JobState::Available;
                    job.previous_owners.push(worker.clone());
                    let (pid, nid) = (job.process_id.clone(), job.node_id.clone());
                    self.event(*now, &pid, Some(&nid), EventKind::LockExpired { worker });
                    let process = self.processes.get_mut(&pid).unwrap();
                    if process.state == ProcessState::Running {
                        process.node_states.insert(nid, NodeState::Ready);
                        requeued += 1;
                    } else {
                        let job = self.jobs.remove(&id).unwrap();
                        self.event(*now, &pid, Some(&job.node_id), EventKind::JobWithdrawn);
                    }
                }
                Ok(Outcome::Count(requeued))
            }
            EngineOp::Cancel { process_id, now } => {
                let p = self.processes.get_mut(process_id).ok_or_else(|| EngineError::UnknownProcess(process_id.clone()))?;
                if p.state != ProcessState::Running {
                    return Err(EngineError::AlreadyTerminal(process_id.clone()));
                }
                p.state = ProcessState::Cancelled;
                p.finished_at = Some(*now);
                self.event(*now, process_id, None, EventKind::ProcessCancelled);
                self.withdraw_available(process_id, *now);
                Ok(Outcome::None)
            }
        }
    }

    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct View<'a> {
            workflows: &'a BTreeMap<String, Vec<WorkflowDefinition>>,
            processes: &'a BTreeMap<String, ProcessInstance>,
            jobs: &'a BTreeMap<String, Job>,
        }
        let bytes = serde_json::to_vec(&View { workflows: &self.workflows, processes: &self.processes, jobs: &self.jobs })
            .expect("engine state serializes");
        let digest = Sha256::digest(&bytes);
        hex::encode(digest)
    }

    /// Full-scan consistency check of processes and jobs.
    pub fn audit(&self) -> Result<(), String> {
        for j in self.jobs.values() {
            match j.state {
                JobState::Locked if j.lock_owner.is_none() || j.lock_expiry.is_none() => {
                    return Err(format!("{}: locked without owner or expiry", j.id));
                }
                JobState::Available if j.lock_owner.is_some() || j.lock_expiry.is_some() => {
                    return Err(format!("{}: available but holds a lock", j.id));
                }
                _ => {}
            }
            if !self.processes.contains_key(&j.process_id) {
                return Err(format!("{}: process missing", j.id));
            }
        }
        for p in self.processes.values() {
            let all_done = p.node_states.values().all(|s| *s == NodeState::Done);
            if (p.state == ProcessState::Completed) != all_done {
                return Err(format!("{}: state {:?} but all nodes done = {all_done}", p.id, p.state));
            }
            if p.state == ProcessState::Failed && !p.node_states.values().any(|s| *s == NodeState::Failed) {
                return Err(format!("{}: failed without a failed node", p.id));
            }
            let def = self.definition_of(p);
            for (node, state) in &p.node_states {
                if matches!(state, NodeState::Ready | NodeState::Locked | NodeState::Done)
                    && !def.predecessors(node).all(|pred| p.node_states.get(pred) == Some(&NodeState::Done))
                {
                    return Err(format!("{}: node {node} active before its predecessors finished", p.id));
                }
            }
        }
        Ok(())
    }
}

impl LogState for EngineState {
    type Op = EngineOp;
    type Record = EngineState;

    fn apply(&mut self, op: &EngineOp) {
        // logged ops succeeded when first applied, so replay cannot fail
        let _ = self.try_apply(op);
    }

    fn records(&self) -> Vec<EngineState> {
        vec![self.clone()]
    }

    fn restore(records: Vec<EngineState>) -> Self {
        records.into_iter().next().unwrap_or_default()
    }
}
