//! Blocking HTTP client for the API; also the remote engine, memory and
//! store client used by workers.

use std::collections::BTreeSet;
use std::time::Duration;

use lexflow_core::engine::{Job, ProcessInstance, TopicLock, Variables, WorkflowDefinition};
use lexflow_core::memory::KEY_PREFIX;
use lexflow_core::workers::services::Params;
use lexflow_core::workers::{ClientError, EngineClient, MemoryClient, ServiceOutput, StoreClient};
use lexflow_core::{Annotation, Collection, Document, Triple};
use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use serde::de::DeserializeOwned;
use serde::Serialize;
use ureq::http::Response;
use ureq::{Agent, Body};

use crate::api::{
    AddedCount, CollectionRequest, CompleteRequest, DeployResponse, DocumentBody, ErrorBody, FailRequest, FetchRequest,
    MemoryPutResponse, PilotResponse, ServiceRequest, StartRequest, StoredDocument, OCTET_STREAM,
};

const MAX_BODY: u64 = 256 * 1024 * 1024;

fn seg(s: &str) -> String {
    utf8_percent_encode(s, NON_ALPHANUMERIC).to_string()
}

fn transport(e: ureq::Error) -> ClientError {
    ClientError::new("unavailable", e.to_string())
}

#[derive(Debug, Clone)]
pub struct HttpClient {
    base: String,
    agent: Agent,
}

type Reply = Result<Response<Body>, ureq::Error>;

impl HttpClient {
    pub fn new(base_url: &str) -> Self {
        let agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Self { base: base_url.trim_end_matches('/').to_string(), agent }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn checked(reply: Reply) -> Result<Response<Body>, ClientError> {
        let mut resp = reply.map_err(transport)?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        Err(match serde_json::from_str::<ErrorBody>(&text) {
            Ok(b) => ClientError::new(b.code, b.message),
            Err(_) => ClientError::new("internal", format!("HTTP {status}: {text}")),
        })
    }

    fn json<T: DeserializeOwned>(reply: Reply) -> Result<T, ClientError> {
        let mut resp = Self::checked(reply)?;
        let bytes = resp.body_mut().with_config().limit(MAX_BODY).read_to_vec().map_err(transport)?;
        serde_json::from_slice(&bytes).map_err(|e| ClientError::new("internal", format!("bad response body: {e}")))
    }

    fn empty(reply: Reply) -> Result<(), ClientError> {
        Self::checked(reply).map(drop)
    }

    fn post<B: Serialize>(&self, path: &str, body: &B) -> Reply {
        self.agent.post(&self.url(path)).send_json(body)
    }

    fn get(&self, path: &str) -> Reply {
        self.agent.get(&self.url(path)).call()
    }

    pub fn health(&self) -> Result<String, ClientError> {
        let mut resp = Self::checked(self.get("/health"))?;
        resp.body_mut().read_to_string().map_err(transport)
    }

    pub fn create_collection(&self, label: &str, ensure: bool) -> Result<Collection, ClientError> {
        Self::json(self.post("/collections", &CollectionRequest { label: label.into(), ensure }))
    }

    pub fn list_collections(&self, label: Option<&str>) -> Result<Vec<Collection>, ClientError> {
        let mut req = self.agent.get(&self.url("/collections"));
        if let Some(l) = label {
            req = req.query("label", l);
        }
        Self::json(req.call())
    }

    pub fn put_document(&self, collection_id: &str, doc: &Document) -> Result<Document, ClientError> {
        Self::json(self.post(&format!("/collections/{}/documents", seg(collection_id)), &DocumentBody::from(doc)))
    }

    pub fn replace_document(&self, doc: &Document) -> Result<Document, ClientError> {
        Self::json(self.agent.put(&self.url(&format!("/documents/{}", seg(&doc.id)))).send_json(DocumentBody::from(doc)))
    }

    pub fn get_document(&self, id: &str) -> Result<StoredDocument, ClientError> {
        Self::json(self.get(&format!("/documents/{}", seg(id))))
    }

    pub fn delete_document(&self, id: &str) -> Result<(), ClientError> {
        Self::empty(self.agent.delete(&self.url(&format!("/documents/{}", seg(id)))).call())
    }

    pub fn add_annotations(&self, id: &str, anns: &[Annotation]) -> Result<usize, ClientError> {
        Self::json::<AddedCount>(self.post(&format!("/documents/{}/annotations", seg(id)), &anns)).map(|a| a.added)
    }

    pub fn mentions(&self, iri: &str) -> Result<BTreeSet<String>, ClientError> {
        Self::json(self.agent.get(&self.url("/query/documents")).query("mentions", iri).call())
    }

    pub fn query_triples(&self, s: Option<&str>, p: Option<&str>, o: Option<&str>) -> Result<Vec<Triple>, ClientError> {
        let mut req = self.agent.get(&self.url("/query/triples"));
        for (k, v) in [("s", s), ("p", p), ("o", o)] {
            if let Some(v) = v {
                req = req.query(k, v);
            }
        }
        Self::json(req.call())
    }

    pub fn export_triples(&self) -> Result<String, ClientError> {
        let mut resp = Self::checked(self.get("/export/triples"))?;
        resp.body_mut().with_config().limit(MAX_BODY).read_to_string().map_err(transport)
    }

    pub fn deploy_workflow(&self, def: &WorkflowDefinition) -> Result<String, ClientError> {
        Self::json::<DeployResponse>(self.post("/engine/workflows", def)).map(|d| d.id)
    }

    pub fn start_process(&self, workflow_id: &str, variables: Variables) -> Result<ProcessInstance, ClientError> {
        Self::json(self.post("/engine/processes", &StartRequest { workflow_id: workflow_id.into(), variables }))
    }

    pub fn process_state(&self, id: &str) -> Result<ProcessInstance, ClientError> {
        Self::json(self.get(&format!("/engine/processes/{}", seg(id))))
    }

    pub fn cancel_process(&self, id: &str) -> Result<ProcessInstance, ClientError> {
        Self::json(self.agent.post(&self.url(&format!("/engine/processes/{}/cancel", seg(id)))).send_empty())
    }

    /// Stores under a caller-chosen key.
    pub fn memory_put_at(&self, key: &str, payload: &[u8], content_type: &str) -> Result<String, ClientError> {
        let req = self.agent.put(&self.url(&format!("/memory/{}", seg(key)))).header("content-type", content_type);
        Self::json::<MemoryPutResponse>(req.send(payload)).map(|r| r.key)
    }

    pub fn memory_get(&self, key: &str) -> Result<Vec<u8>, ClientError> {
        let mut resp = Self::checked(self.get(&format!("/memory/{}", seg(key))))?;
        resp.body_mut().with_config().limit(MAX_BODY).read_to_vec().map_err(transport)
    }

    pub fn invoke_service(&self, name: &str, doc: &Document, params: &Params) -> Result<ServiceOutput, ClientError> {
        let body = ServiceRequest { document: DocumentBody::from(doc), params: params.clone() };
        Self::json(self.post(&format!("/services/{}", seg(name)), &body))
    }

    pub fn pilot_submit(&self, pilot: &str, doc: &DocumentBody) -> Result<PilotResponse, ClientError> {
        Self::json(self.post(&format!("/pilots/{}", seg(pilot)), doc))
    }

    pub fn pilot_state(&self, process_id: &str) -> Result<ProcessInstance, ClientError> {
        Self::json(self.get(&format!("/pilots/processes/{}", seg(process_id))))
    }
}

impl EngineClient for HttpClient {
    fn fetch_and_lock(
        &self,
        worker_id: &str,
        topics: &[TopicLock],
        max_jobs: usize,
        wait: Duration,
    ) -> Result<Vec<Job>, ClientError> {
        let req = FetchRequest {
            worker_id: worker_id.into(),
            topics: topics.to_vec(),
            max_jobs,
            wait_ms: wait.as_millis() as u64,
        };
        Self::json(self.post("/engine/fetchAndLock", &req))
    }

    fn complete(&self, job_id: &str, worker_id: &str, variables: Variables) -> Result<(), ClientError> {
        let req = CompleteRequest { worker_id: worker_id.into(), variables };
        Self::empty(self.post(&format!("/engine/jobs/{}/complete", seg(job_id)), &req))
    }

    fn fail(&self, job_id: &str, worker_id: &str, message: &str, retry_backoff_ms: i64) -> Result<(), ClientError> {
        let req = FailRequest { worker_id: worker_id.into(), error_message: message.into(), retry_backoff_ms };
        Self::empty(self.post(&format!("/engine/jobs/{}/fail", seg(job_id)), &req))
    }
}

impl MemoryClient for HttpClient {
    /// Picks a fresh key client-side; a collision is retried.
    fn put(&self, payload: &[u8], content_type: &str) -> Result<String, ClientError> {
        loop {
            let key = format!("{KEY_PREFIX}{}", uuid::Uuid::new_v4());
            match self.memory_put_at(&key, payload, if content_type.is_empty() { OCTET_STREAM } else { content_type }) {
                Err(e) if e.code == "key-in-use" => continue,
                other => return other,
            }
        }
    }

    fn get(&self, key: &str) -> Result<Vec<u8>, ClientError> {
        self.memory_get(key)
    }
}

impl StoreClient for HttpClient {
    fn ensure_collection(&self, label: &str) -> Result<String, ClientError> {
        self.create_collection(label, true).map(|c| c.id)
    }

    fn put_document(&self, collection_id: &str, doc: Document) -> Result<Document, ClientError> {
        HttpClient::put_document(self, collection_id, &doc)
    }

    fn add_annotations(&self, document_id: &str, anns: Vec<Annotation>) -> Result<usize, ClientError> {
        HttpClient::add_annotations(self, document_id, &anns)
    }

    fn collection_documents(&self, label: &str) -> Result<Vec<(Document, Vec<Annotation>)>, ClientError> {
        let mut out = Vec::new();
        for c in self.list_collections(Some(label))? {
            for id in &c.document_ids {
                let d = self.get_document(id)?;
                out.push((d.document, d.annotations));
            }
        }
        Ok(out)
    }
}
