//! Worker runtime: loops that fetch jobs by topic, run a step, and complete
//! or fail the job.
//!
//! Variable contract between nodes:
//!
//! | key                    | value                                        |
//! |------------------------|----------------------------------------------|
//! | `document`             | shared ref to a [`Document`]                 |
//! | `source_document`      | shared ref to the pre-translation document   |
//! | `annotations:<svc>`    | shared ref to a list of [`Annotation`]s      |
//! | `result:<svc>`         | shared ref to a JSON service result          |
//! | `enriched_document`    | shared ref to an [`EnrichedDocument`]        |
//! | `stored_document_id`   | inline string                                |

mod clients;
mod runtime;
pub mod services;
pub mod steps;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clients::{ClientError, EngineClient, MemoryClient, StoreClient};
pub use runtime::{execute_job, run_worker, WorkerContext, WorkerPool, WorkerStats};
pub use services::{ServiceOutput, ServiceRegistry};
pub use steps::{create_enriched_document_step, enrichment_step, save_to_lkg_step, translation_step};

use crate::model::{Annotation, Document};

pub const DOCUMENT: &str = "document";
pub const SOURCE_DOCUMENT: &str = "source_document";
pub const ENRICHED_DOCUMENT: &str = "enriched_document";
pub const STORED_DOCUMENT_ID: &str = "stored_document_id";
pub const ANNOTATIONS_PREFIX: &str = "annotations:";
pub const RESULT_PREFIX: &str = "result:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WorkerKind {
    Translation,
    Enrichment,
    SaveToLkg,
    CreateEnrichedDocument,
}

fn default_lock_ms() -> i64 {
    30_000
}
fn default_max_jobs() -> usize {
    1
}
fn default_poll_ms() -> u64 {
    500
}
fn default_backoff_ms() -> i64 {
    200
}

/// One worker instance. Service parameters are plain strings, e.g.
/// `{"lang": "de"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerConfig {
    pub worker_id: String,
    pub topic: String,
    pub kind: WorkerKind,
    #[serde(default)]
    pub service: String,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
    #[serde(default = "default_lock_ms")]
    pub lock_duration_ms: i64,
    #[serde(default = "default_max_jobs")]
    pub max_jobs: usize,
    #[serde(default = "default_poll_ms")]
    pub poll_interval_ms: u64,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: i64,
}

impl WorkerConfig {
    pub fn new(worker_id: &str, topic: &str, kind: WorkerKind, service: &str) -> Self {
        Self {
            worker_id: worker_id.into(),
            topic: topic.into(),
            kind,
            service: service.into(),
            params: BTreeMap::new(),
            lock_duration_ms: default_lock_ms(),
            max_jobs: default_max_jobs(),
            poll_interval_ms: default_poll_ms(),
            retry_backoff_ms: default_backoff_ms(),
        }
    }

    pub fn with_param(mut self, key: &str, value: &str) -> Self {
        self.params.insert(key.into(), value.into());
        self
    }

    pub fn check(&self) -> Result<(), String> {
        if self.worker_id.is_empty() || self.topic.is_empty() {
            return Err("worker_id and topic are required".into());
        }
        if self.kind == WorkerKind::Enrichment && self.service.is_empty() {
            return Err(format!("{}: enrichment workers need a service", self.worker_id));
        }
        if self.lock_duration_ms <= 0 || self.max_jobs == 0 {
            return Err(format!("{}: lock_duration_ms and max_jobs must be positive", self.worker_id));
        }
        Ok(())
    }

    /// One JSON object per non-blank line; `#` starts a comment line.
    pub fn parse_lines(src: &str) -> Result<Vec<Self>, String> {
        let mut out = Vec::new();
        for (i, line) in src.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cfg: WorkerConfig = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
            cfg.check().map_err(|e| format!("line {}: {e}", i + 1))?;
            out.push(cfg);
        }
        Ok(out)
    }
}

/// A document bundled with its merged annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedDocument {
    pub document: Document,
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("missing variable {0}")]
    MissingVariable(String),
    #[error("variable {key} is malformed: {message}")]
    BadVariable { key: String, message: String },
    #[error("unknown service {0}")]
    UnknownService(String),
    #[error("service {service} failed: {message}")]
    Service { service: String, message: String },
    #[error(transparent)]
    Client(#[from] ClientError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lines() {
        let src = r#"
# comment
{"worker_id":"w1","topic":"TimEx-LKGPopulation","kind":"Enrichment","service":"timex","params":{"lang":"de"}}
{"worker_id":"w2","topic":"Save","kind":"SaveToLkg","lock_duration_ms":1000,"max_jobs":4,"poll_interval_ms":50}
"#;
        let cfgs = WorkerConfig::parse_lines(src).unwrap();
        assert_eq!(cfgs[0].params["lang"], "de");
        assert_eq!(cfgs[0].lock_duration_ms, 30_000);
        assert_eq!(cfgs[1].max_jobs, 4);
        assert!(WorkerConfig::parse_lines(r#"{"worker_id":"w","topic":"t","kind":"Enrichment"}"#).is_err());
        assert!(WorkerConfig::parse_lines(r#"{"worker_id":"w","topic":"t","kind":"Bogus"}"#).is_err());
    }
}
