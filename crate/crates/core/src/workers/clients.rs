use std::time::Duration;

use thiserror::Error;

use crate::engine::{Engine, EngineError, Job, TopicLock, Variables};
use crate::memory::{MemoryError, SharedMemory};
use crate::model::{Annotation, Document};
use crate::store::{LkgStore, StoreError};

/// Error from a local or remote platform call, reduced to the API's
/// `{code, message}` shape.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{code}: {message}")]
pub struct ClientError {
    pub code: String,
    pub message: String,
}

impl ClientError {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self { code: code.into(), message: message.into() }
    }
}

impl From<EngineError> for ClientError {
    fn from(e: EngineError) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

impl From<StoreError> for ClientError {
    fn from(e: StoreError) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

impl From<MemoryError> for ClientError {
    fn from(e: MemoryError) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

pub trait EngineClient: Send + Sync {
    /// Waits up to `wait` for at least one job.
    fn fetch_and_lock(&self, worker_id: &str, topics: &[TopicLock], max_jobs: usize, wait: Duration)
        -> Result<Vec<Job>, ClientError>;
    fn complete(&self, job_id: &str, worker_id: &str, variables: Variables) -> Result<(), ClientError>;
    fn fail(&self, job_id: &str, worker_id: &str, message: &str, retry_backoff_ms: i64) -> Result<(), ClientError>;
}

pub trait MemoryClient: Send + Sync {
    fn put(&self, payload: &[u8], content_type: &str) -> Result<String, ClientError>;
    fn get(&self, key: &str) -> Result<Vec<u8>, ClientError>;
}

pub trait StoreClient: Send + Sync {
    /// Id of the first collection with this label, created when missing.
    fn ensure_collection(&self, label: &str) -> Result<String, ClientError>;
    fn put_document(&self, collection_id: &str, doc: Document) -> Result<Document, ClientError>;
    fn add_annotations(&self, document_id: &str, anns: Vec<Annotation>) -> Result<usize, ClientError>;
    /// Documents of every collection with this label; empty when none exists.
    fn collection_documents(&self, label: &str) -> Result<Vec<(Document, Vec<Annotation>)>, ClientError>;
}

impl EngineClient for Engine {
    fn fetch_and_lock(
        &self,
        worker_id: &str,
        topics: &[TopicLock],
        max_jobs: usize,
        wait: Duration,
    ) -> Result<Vec<Job>, ClientError> {
        Ok(self.fetch_and_lock_wait(worker_id, topics, max_jobs, wait)?)
    }

    fn complete(&self, job_id: &str, worker_id: &str, variables: Variables) -> Result<(), ClientError> {
        Ok(self.complete_job(job_id, worker_id, variables)?)
    }

    fn fail(&self, job_id: &str, worker_id: &str, message: &str, retry_backoff_ms: i64) -> Result<(), ClientError> {
        Ok(self.fail_job(job_id, worker_id, message, retry_backoff_ms)?)
    }
}

impl MemoryClient for SharedMemory {
    fn put(&self, payload: &[u8], content_type: &str) -> Result<String, ClientError> {
        Ok(SharedMemory::put(self, payload, content_type, None)?)
    }

    fn get(&self, key: &str) -> Result<Vec<u8>, ClientError> {
        Ok(SharedMemory::get(self, key)?.payload)
    }
}

impl StoreClient for LkgStore {
    fn ensure_collection(&self, label: &str) -> Result<String, ClientError> {
        static ENSURE: parking_lot::Mutex<()> = parking_lot::Mutex::new(());
        let _guard = ENSURE.lock();
        if let Some(c) = self.list_collections().into_iter().find(|c| c.label == label) {
            return Ok(c.id);
        }
        Ok(self.create_collection(label)?.id)
    }

    fn put_document(&self, collection_id: &str, doc: Document) -> Result<Document, ClientError> {
        Ok(LkgStore::put_document(self, collection_id, doc)?)
    }

    fn add_annotations(&self, document_id: &str, anns: Vec<Annotation>) -> Result<usize, ClientError> {
        Ok(LkgStore::add_annotations(self, document_id, anns)?)
    }

    fn collection_documents(&self, label: &str) -> Result<Vec<(Document, Vec<Annotation>)>, ClientError> {
        let mut out = Vec::new();
        for c in self.list_collections().into_iter().filter(|c| c.label == label) {
            for id in &c.document_ids {
                out.push(self.get_document(id)?);
            }
        }
        Ok(out)
    }
}
