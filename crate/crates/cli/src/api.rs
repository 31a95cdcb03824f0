//! HTTP surface over one [`Platform`].
//!
//! Error bodies are `{"code": .., "message": ..}` with the status from
//! [`status_for`]:
//!
//! | status | codes |
//! |--------|-------|
//! | 400 | bad-request, empty-document, invalid-document, invalid-annotation, invalid-definition, cyclic-graph, dangling-edge, duplicate-node, invalid-variable, invalid-key, invalid-ttl |
//! | 404 | not-found, unknown-collection, unknown-document, unknown-workflow, unknown-process, unknown-job, unknown-pilot, unknown-service |
//! | 405 | method-not-allowed |
//! | 409 | not-lock-owner, lock-expired, process-cancelled, already-terminal, key-in-use |
//! | 413 | payload-too-large |
//! | 422 | service-failed |
//! | 500 | storage, internal |

use std::collections::{BTreeMap, HashMap};
use std::io;
use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lexflow_core::engine::{EngineError, Ticker, TopicLock, Variables, WorkflowDefinition, DEFAULT_TICK};
use lexflow_core::memory::{MemoryError, JSON, KEY_PREFIX};
use lexflow_core::store::{ObjectPattern, StoreError, TriplePattern};
use lexflow_core::workers::services::Params;
use lexflow_core::workers::{ClientError, StepError, StoreClient, DOCUMENT};
use lexflow_core::{Annotation, Document};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;

use crate::platform::Platform;

pub const N_TRIPLES: &str = "application/n-triples";
pub const OCTET_STREAM: &str = "application/octet-stream";
pub const EXPIRES_HEADER: &str = "x-expires-at";

/// Pilot route name to workflow id.
pub const PILOTS: &[(&str, &str)] = &[
    ("contract-analysis", "contract-analysis"),
    ("labour-law", "labour-law-qa"),
    ("geothermal-analysis", "geothermal-analysis"),
];

pub fn pilot_workflow(pilot: &str) -> Option<&'static str> {
    PILOTS.iter().find(|(p, _)| *p == pilot).map(|(_, w)| *w)
}

pub fn status_for(code: &str) -> StatusCode {
    match code {
        "bad-request" | "empty-document" | "invalid-document" | "invalid-annotation" | "invalid-definition"
        | "cyclic-graph" | "dangling-edge" | "duplicate-node" | "invalid-variable" | "invalid-key" | "invalid-ttl" => {
            StatusCode::BAD_REQUEST
        }
        "not-found" | "unknown-collection" | "unknown-document" | "unknown-workflow" | "unknown-process"
        | "unknown-job" | "unknown-pilot" | "unknown-service" => StatusCode::NOT_FOUND,
        "method-not-allowed" => StatusCode::METHOD_NOT_ALLOWED,
        "not-lock-owner" | "lock-expired" | "process-cancelled" | "already-terminal" | "key-in-use" => {
            StatusCode::CONFLICT
        }
        "payload-too-large" => StatusCode::PAYLOAD_TOO_LARGE,
        "service-failed" => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self { status: status_for(code), code: code.to_string(), message: message.into() }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new("bad-request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { code: self.code, message: self.message })).into_response()
    }
}

impl From<ClientError> for ApiError {
    fn from(e: ClientError) -> Self {
        Self::new(&e.code, e.message)
    }
}

macro_rules! via_client_error {
    ($($t:ty),*) => {$(
        impl From<$t> for ApiError {
            fn from(e: $t) -> Self {
                ClientError::from(e).into()
            }
        }
    )*};
}

via_client_error!(EngineError, StoreError, MemoryError);

fn step_error(e: StepError) -> ApiError {
    match e {
        StepError::UnknownService(s) => ApiError::new("unknown-service", format!("unknown service {s}")),
        StepError::Client(c) => c.into(),
        StepError::MissingVariable(_) | StepError::BadVariable { .. } => ApiError::bad_request(e.to_string()),
        StepError::Service { .. } => ApiError::new("service-failed", e.to_string()),
    }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

type ApiResult<T> = Result<T, ApiError>;
type AppState = Arc<Platform>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::new("internal", e.to_string()))?
}

/// A document in a request. `id` is minted when absent; `language`
/// defaults to `en`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DocumentBody {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub collection_id: Option<String>,
    pub content: String,
    #[serde(default)]
    pub language: Option<String>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl DocumentBody {
    pub fn into_document(self) -> Document {
        let id = self.id.unwrap_or_else(|| format!("http://lkg.local/doc/{}", uuid::Uuid::new_v4()));
        let mut doc = Document::new(id, self.content, self.language.unwrap_or_else(|| "en".into()));
        doc.metadata = self.metadata;
        doc.collection_id = self.collection_id.unwrap_or_default();
        doc
    }
}

impl From<&Document> for DocumentBody {
    fn from(d: &Document) -> Self {
        DocumentBody {
            id: Some(d.id.clone()),
            collection_id: (!d.collection_id.is_empty()).then(|| d.collection_id.clone()),
            content: d.content.clone(),
            language: Some(d.language.clone()),
            metadata: d.metadata.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollectionRequest {
    pub label: String,
    /// Return the first collection with this label instead of creating one.
    #[serde(default)]
    pub ensure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredDocument {
    pub document: Document,
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AddedCount {
    pub added: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeployResponse {
    pub id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartRequest {
    pub workflow_id: String,
    #[serde(default)]
    pub variables: Variables,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FetchRequest {
    pub worker_id: String,
    pub topics: Vec<TopicLock>,
    #[serde(default = "one")]
    pub max_jobs: usize,
    /// Long-poll budget, capped by the engine.
    #[serde(default)]
    pub wait_ms: u64,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompleteRequest {
    pub worker_id: String,
    #[serde(default)]
    pub variables: Variables,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailRequest {
    pub worker_id: String,
    pub error_message: String,
    #[serde(default)]
    pub retry_backoff_ms: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemoryPutResponse {
    pub key: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ServiceRequest {
    pub document: DocumentBody,
    #[serde(default)]
    pub params: Params,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PilotResponse {
    pub process_id: String,
    pub workflow_id: String,
    pub document_id: String,
}

pub fn router(platform: Arc<Platform>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/collections", post(create_collection).get(list_collections))
        .route("/collections/{id}/documents", post(add_document))
        .route("/documents/{id}", get(get_document).put(put_document).delete(delete_document))
        .route("/documents/{id}/annotations", post(add_annotations))
        .route("/query/documents", get(query_documents))
        .route("/query/triples", get(query_triples))
        .route("/export/triples", get(export_triples))
        .route("/engine/workflows", post(deploy_workflow))
        .route("/engine/processes", post(start_process))
        .route("/engine/fetchAndLock", post(fetch_and_lock))
        .route("/engine/jobs/{id}/complete", post(complete_job))
        .route("/engine/jobs/{id}/fail", post(fail_job))
        .route("/engine/processes/{id}", get(process_state))
        .route("/engine/processes/{id}/cancel", post(cancel_process))
        .route("/memory/{key}", get(memory_get).put(memory_put))
        .route("/services/{name}", post(invoke_service))
        .route("/pilots/{pilot}", post(pilot_submit))
        .route("/pilots/processes/{id}", get(process_state))
        .fallback(|| async { ApiError::new("not-found", "no such route") })
        .method_not_allowed_fallback(|| async { ApiError::new("method-not-allowed", "method not allowed") })
        .with_state(platform)
}

async fn create_collection(State(p): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: CollectionRequest = parse(&body)?;
    blocking(move || {
        if req.ensure {
            let id = StoreClient::ensure_collection(p.store.as_ref(), &req.label)?;
            Ok((StatusCode::OK, Json(p.store.get_collection(&id)?)).into_response())
        } else {
            Ok((StatusCode::CREATED, Json(p.store.create_collection(&req.label)?)).into_response())
        }
    })
    .await
}

async fn list_collections(State(p): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Response> {
    let mut all = p.store.list_collections();
    if let Some(label) = q.get("label") {
        all.retain(|c| &c.label == label);
    }
    Ok(Json(all).into_response())
}

async fn add_document(State(p): State<AppState>, Path(cid): Path<String>, body: Bytes) -> ApiResult<Response> {
    let doc = parse::<DocumentBody>(&body)?.into_document();
    blocking(move || Ok((StatusCode::CREATED, Json(p.store.put_document(&cid, doc)?)).into_response())).await
}

async fn get_document(State(p): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let (document, annotations) = p.store.get_document(&id)?;
    Ok(Json(StoredDocument { document, annotations }).into_response())
}

async fn put_document(State(p): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: DocumentBody = parse(&body)?;
    if req.id.as_ref().is_some_and(|b| *b != id) {
        return Err(ApiError::bad_request("body id differs from path id"));
    }
    blocking(move || {
        let cid = match &req.collection_id {
            Some(c) => c.clone(),
            None => p.store.get_document(&id)?.0.collection_id,
        };
        let doc = DocumentBody { id: Some(id), ..req }.into_document();
        Ok(Json(p.store.put_document(&cid, doc)?).into_response())
    })
    .await
}

async fn delete_document(State(p): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    blocking(move || {
        p.store.delete_document(&id)?;
        Ok(StatusCode::NO_CONTENT.into_response())
    })
    .await
}

async fn add_annotations(State(p): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let anns: Vec<Annotation> = parse(&body)?;
    blocking(move || Ok(Json(AddedCount { added: p.store.add_annotations(&id, anns)? }).into_response())).await
}

async fn query_documents(State(p): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Response> {
    let iri = q.get("mentions").ok_or_else(|| ApiError::bad_request("missing query parameter mentions"))?;
    Ok(Json(p.store.query_documents_by_reference(iri)).into_response())
}

async fn query_triples(State(p): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Response> {
    let pattern = TriplePattern {
        subject: q.get("s").filter(|s| !s.is_empty()).cloned(),
        predicate: q.get("p").filter(|s| !s.is_empty()).cloned(),
        object: q.get("o").filter(|s| !s.is_empty()).map(|o| ObjectPattern::parse(o)),
    };
    blocking(move || Ok(Json(p.store.query_triples(&pattern)).into_response())).await
}

async fn export_triples(State(p): State<AppState>) -> ApiResult<Response> {
    blocking(move || Ok(([(header::CONTENT_TYPE, N_TRIPLES)], p.store.export_triples()).into_response())).await
}

async fn deploy_workflow(State(p): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let def: WorkflowDefinition = parse(&body)?;
    blocking(move || Ok((StatusCode::CREATED, Json(DeployResponse { id: p.engine.deploy_workflow(def)? })).into_response()))
        .await
}

async fn start_process(State(p): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: StartRequest = parse(&body)?;
    blocking(move || {
        Ok((StatusCode::CREATED, Json(p.engine.start_process(&req.workflow_id, req.variables)?)).into_response())
    })
    .await
}

async fn fetch_and_lock(State(p): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: FetchRequest = parse(&body)?;
    blocking(move || {
        let wait = Duration::from_millis(req.wait_ms);
        Ok(Json(p.engine.fetch_and_lock_wait(&req.worker_id, &req.topics, req.max_jobs, wait)?).into_response())
    })
    .await
}

async fn complete_job(State(p): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: CompleteRequest = parse(&body)?;
    blocking(move || {
        p.engine.complete_job(&id, &req.worker_id, req.variables)?;
        Ok(StatusCode::NO_CONTENT.into_response())
    })
    .await
}

async fn fail_job(State(p): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: FailRequest = parse(&body)?;
    blocking(move || {
        p.engine.fail_job(&id, &req.worker_id, &req.error_message, req.retry_backoff_ms)?;
        Ok(StatusCode::NO_CONTENT.into_response())
    })
    .await
}

async fn process_state(State(p): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(p.engine.get_process_state(&id)?).into_response())
}

async fn cancel_process(State(p): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    blocking(move || {
        p.engine.cancel_process(&id)?;
        Ok(Json(p.engine.get_process_state(&id)?).into_response())
    })
    .await
}

/// Accepts `sm://<uuid>` or the bare uuid.
pub fn memory_key(raw: &str) -> String {
    if raw.starts_with(KEY_PREFIX) {
        raw.to_string()
    } else {
        format!("{KEY_PREFIX}{raw}")
    }
}

async fn memory_put(
    State(p): State<AppState>,
    Path(key): Path<String>,
    Query(q): Query<HashMap<String, String>>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let key = memory_key(&key);
    let ttl = match q.get("ttl_ms") {
        Some(t) => Some(t.parse::<i64>().map_err(|_| ApiError::bad_request(format!("bad ttl_ms {t:?}")))?),
        None => None,
    };
    let ct = headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).unwrap_or(OCTET_STREAM).to_string();
    blocking(move || {
        p.memory.put_at(&key, &body, &ct, ttl)?;
        Ok((StatusCode::CREATED, Json(MemoryPutResponse { key })).into_response())
    })
    .await
}

async fn memory_get(State(p): State<AppState>, Path(key): Path<String>) -> ApiResult<Response> {
    let key = memory_key(&key);
    blocking(move || {
        let f = p.memory.get(&key)?;
        let mut resp = f.payload.into_response();
        let h = resp.headers_mut();
        h.insert(header::CONTENT_TYPE, HeaderValue::from_str(&f.content_type).unwrap_or(HeaderValue::from_static(OCTET_STREAM)));
        h.insert(EXPIRES_HEADER, HeaderValue::from(f.expires_at));
        Ok(resp)
    })
    .await
}

async fn invoke_service(State(p): State<AppState>, Path(name): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: ServiceRequest = parse(&body)?;
    blocking(move || {
        let doc = req.document.into_document();
        Ok(Json(p.services.invoke(&name, &doc, &req.params).map_err(step_error)?).into_response())
    })
    .await
}

async fn pilot_submit(State(p): State<AppState>, Path(pilot): Path<String>, body: Bytes) -> ApiResult<Response> {
    let workflow = pilot_workflow(&pilot).ok_or_else(|| ApiError::new("unknown-pilot", format!("unknown pilot {pilot}")))?;
    let req: DocumentBody = parse(&body)?;
    if req.content.trim().is_empty() {
        return Err(ApiError::new("empty-document", "document content is empty"));
    }
    blocking(move || {
        let doc = req.into_document();
        let document_id = doc.id.clone();
        let bytes = serde_json::to_vec(&doc).expect("documents serialize");
        let key = p.memory.put(&bytes, JSON, None)?;
        let vars = Variables::from([(DOCUMENT.to_string(), lexflow_core::engine::VariableValue::SharedRef(key))]);
        let process = p.engine.start_process(workflow, vars)?;
        let body = PilotResponse { process_id: process.id, workflow_id: workflow.to_string(), document_id };
        Ok((StatusCode::ACCEPTED, Json(body)).into_response())
    })
    .await
}

/// A server running on its own runtime thread, plus the lock-expiry ticker.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<io::Result<()>>>,
    _ticker: Ticker,
}

impl std::fmt::Debug for ServerHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServerHandle").field("addr", &self.addr).finish_non_exhaustive()
    }
}

impl ServerHandle {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub fn stop(mut self) -> io::Result<()> {
        self.stop_inner()
    }

    fn stop_inner(&mut self) -> io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().map_err(|_| io::Error::other("server thread panicked"))?,
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_inner();
    }
}

/// Binds `addr` (port 0 picks a free port) and serves until stopped.
pub fn spawn_server(platform: Arc<Platform>, addr: SocketAddr) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let ticker = Ticker::spawn(platform.engine.clone(), DEFAULT_TICK, Some(platform.memory.clone()));
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(platform);
    let thread = std::thread::Builder::new().name("http".into()).spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener)?;
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        })
    })?;
    Ok(ServerHandle { addr, shutdown: Some(tx), thread: Some(thread), _ticker: ticker })
}
