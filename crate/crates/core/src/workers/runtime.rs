use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use tracing::{debug, warn};

use super::steps::{create_enriched_document_step, enrichment_step, save_to_lkg_step, translation_step};
use super::{EngineClient, MemoryClient, ServiceRegistry, StepError, StoreClient, WorkerConfig, WorkerKind};
use crate::engine::{Job, TopicLock, Variables};

/// Everything a worker talks to.
#[derive(Clone)]
pub struct WorkerContext {
    pub engine: Arc<dyn EngineClient>,
    pub memory: Arc<dyn MemoryClient>,
    pub store: Option<Arc<dyn StoreClient>>,
    pub services: Arc<ServiceRegistry>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkerStats {
    pub completed: usize,
    pub failed: usize,
    /// Completions or failures the engine refused, e.g. after lock expiry.
    pub rejected: usize,
}

/// Runs the step for `cfg.kind` on the job's variables.
pub fn execute_job(cfg: &WorkerConfig, job: &Job, ctx: &WorkerContext) -> Result<Variables, StepError> {
    let vars = &job.variables_snapshot;
    let memory = ctx.memory.as_ref();
    match cfg.kind {
        WorkerKind::Enrichment => enrichment_step(vars, &cfg.service, &cfg.params, &ctx.services, memory),
        WorkerKind::CreateEnrichedDocument => create_enriched_document_step(vars, memory),
        WorkerKind::SaveToLkg => {
            let store = ctx.store.as_deref().ok_or_else(|| StepError::Service {
                service: "save".into(),
                message: "no store is attached".into(),
            })?;
            save_to_lkg_step(vars, &cfg.params, memory, store)
        }
        WorkerKind::Translation => {
            let target = cfg.params.get("lang").map_or("en", String::as_str);
            translation_step(vars, &ctx.services.resources.lexicon, target, memory)
        }
    }
}

/// Fetch, execute, complete or fail, until `shutdown` is set. Jobs still
/// locked at shutdown are left to expire.
pub fn run_worker(cfg: &WorkerConfig, ctx: &WorkerContext, shutdown: &AtomicBool) -> WorkerStats {
    let mut stats = WorkerStats::default();
    let topics = [TopicLock::new(cfg.topic.clone(), cfg.lock_duration_ms)];
    let poll = Duration::from_millis(cfg.poll_interval_ms.max(1));
    while !shutdown.load(Ordering::Relaxed) {
        let jobs = match ctx.engine.fetch_and_lock(&cfg.worker_id, &topics, cfg.max_jobs, poll) {
            Ok(jobs) => jobs,
            Err(e) => {
                warn!(worker = %cfg.worker_id, error = %e, "fetch failed");
                std::thread::sleep(poll);
                continue;
            }
        };
        for job in jobs {
            if shutdown.load(Ordering::Relaxed) {
                break;
            }
            let ack = match execute_job(cfg, &job, ctx) {
                Ok(out) => ctx.engine.complete(&job.id, &cfg.worker_id, out).map(|_| stats.completed += 1),
                Err(e) => {
                    debug!(worker = %cfg.worker_id, job = %job.id, error = %e, "step failed");
                    ctx.engine.fail(&job.id, &cfg.worker_id, &e.to_string(), cfg.retry_backoff_ms).map(|_| stats.failed += 1)
                }
            };
            if let Err(e) = ack {
                stats.rejected += 1;
                debug!(worker = %cfg.worker_id, job = %job.id, error = %e, "acknowledgement rejected");
            }
        }
    }
    stats
}

/// Worker threads sharing one shutdown flag. Dropping the pool stops them.
pub struct WorkerPool {
    shutdown: Arc<AtomicBool>,
    handles: Vec<JoinHandle<WorkerStats>>,
}

impl WorkerPool {
    pub fn spawn(configs: &[WorkerConfig], ctx: &WorkerContext) -> Self {
        let shutdown = Arc::new(AtomicBool::new(false));
        let handles = configs
            .iter()
            .map(|cfg| {
                let (cfg, ctx, flag) = (cfg.clone(), ctx.clone(), shutdown.clone());
                std::thread::Builder::new()
                    .name(cfg.worker_id.clone())
                    .spawn(move || run_worker(&cfg, &ctx, &flag))
                    .expect("spawn worker thread")
            })
            .collect();
        Self { shutdown, handles }
    }

    pub fn shutdown_flag(&self) -> Arc<AtomicBool> {
        self.shutdown.clone()
    }

    /// Signals shutdown and sums the per-worker statistics.
    pub fn stop(mut self) -> WorkerStats {
        self.stop_inner()
    }

    fn stop_inner(&mut self) -> WorkerStats {
        self.shutdown.store(true, Ordering::Relaxed);
        let mut total = WorkerStats::default();
        for h in self.handles.drain(..) {
            if let Ok(s) = h.join() {
                total.completed += s.completed;
                total.failed += s.failed;
                total.rejected += s.rejected;
            }
        }
        total
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        self.stop_inner();
    }
}
