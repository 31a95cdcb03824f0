//! Command-line verbs. Machine output goes to `out`, diagnostics to `err`.
//! Exit codes: 0 success, 1 user error, 2 internal error.
//!
//! Without `--api` the commands work on the local data directory. Local mode
//! has no long-running worker set, so `workflow start` and
//! `ingest --run-workflow` run the configured workers in-process until their
//! processes finish.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};
use lexflow_core::annotators::references::{parse_review_file, write_review_file};
use lexflow_core::annotators::induce_reference_patterns;
use lexflow_core::corpus::{read_document, read_document_dir};
use lexflow_core::engine::{ProcessInstance, ProcessState, Ticker, VariableValue, Variables, WorkflowDefinition, DEFAULT_TICK};
use lexflow_core::memory::JSON;
use lexflow_core::resources::{Resources, PATTERNS_FILE, WORKERS_FILE};
use lexflow_core::retrieval::{
    answer_question, hybrid_similarity, search, Index, QueryContext, RetrievalError, SimilarityConfig,
};
use lexflow_core::workers::{
    ClientError, MemoryClient, ServiceRegistry, StoreClient, WorkerConfig, WorkerContext, WorkerPool, DOCUMENT,
};
use lexflow_core::{Annotation, Document};
use thiserror::Error;

use crate::api::spawn_server;
use crate::client::HttpClient;
use crate::platform::{load_resources, Platform};

pub const DEFAULT_DATA_DIR: &str = "lexflow-data";
pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

fn user(m: impl ToString) -> CliError {
    CliError::User(m.to_string())
}

fn internal(m: impl ToString) -> CliError {
    CliError::Internal(m.to_string())
}

/// Remote failures are the caller's fault unless the server broke.
impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        match e.code.as_str() {
            "internal" | "storage" | "unavailable" => CliError::Internal(e.to_string()),
            _ => CliError::User(e.to_string()),
        }
    }
}

type CliResult = Result<(), CliError>;

#[derive(Debug, Parser)]
#[command(name = "lexflow", version, about = "Legal document curation platform")]
pub struct Cli {
    /// Data directory of the local store and engine.
    #[arg(long, env = "LEXFLOW_DATA", global = true)]
    pub data_dir: Option<PathBuf>,
    /// Taxonomies, lexicons, rules, workflows and worker configs.
    #[arg(long, global = true)]
    pub resources_dir: Option<PathBuf>,
    /// Talk to a running server instead of the local data directory.
    #[arg(long, global = true)]
    pub api: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP API.
    Serve {
        #[arg(long, env = "LEXFLOW_PORT", default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Also run the configured workers inside the server process.
        #[arg(long)]
        with_workers: bool,
    },
    /// Run the configured worker set against an engine URL.
    Workers {
        /// JSON-lines worker configuration; defaults to the resources file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Engine (server) URL; defaults to --api or the local default port.
        #[arg(long)]
        engine: Option<String>,
    },
    /// Store every file of a directory; `<file>.meta` sidecars hold metadata.
    Ingest {
        dir: PathBuf,
        #[arg(long, default_value = "lkg")]
        collection: String,
        #[arg(long, default_value = "en")]
        default_lang: String,
        /// Start this workflow once per stored document and wait for it.
        #[arg(long)]
        run_workflow: Option<String>,
        #[arg(long, default_value_t = 300)]
        timeout_secs: u64,
    },
    Workflow {
        #[command(subcommand)]
        cmd: WorkflowCmd,
    },
    Patterns {
        #[command(subcommand)]
        cmd: PatternsCmd,
    },
    Query {
        #[command(subcommand)]
        cmd: QueryCmd,
    },
    Export {
        #[command(subcommand)]
        cmd: ExportCmd,
    },
}

#[derive(Debug, Subcommand)]
pub enum WorkflowCmd {
    Deploy {
        file: PathBuf,
    },
    Start {
        workflow_id: String,
        /// Document file (with optional sidecar) passed as `document`.
        #[arg(long)]
        document: Option<PathBuf>,
        #[arg(long, default_value = "en")]
        default_lang: String,
        /// Extra inline variable `key=value`; the value is JSON or a string.
        #[arg(long = "var")]
        vars: Vec<String>,
        #[arg(long, default_value_t = 300)]
        timeout_secs: u64,
    },
    Status {
        process_id: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum PatternsCmd {
    /// Induce candidate patterns from a corpus directory into the review file.
    Induce {
        dir: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        triggers: Vec<String>,
        #[arg(long, default_value_t = 2)]
        min_support: usize,
        #[arg(long, default_value = "en")]
        default_lang: String,
        #[arg(long)]
        file: Option<PathBuf>,
    },
    Review {
        #[arg(long)]
        file: Option<PathBuf>,
    },
    Approve {
        #[arg(required = true)]
        ids: Vec<String>,
        #[arg(long)]
        file: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum QueryCmd {
    Search {
        query: String,
        #[arg(long)]
        collection: Option<String>,
        #[arg(long, default_value = "en")]
        lang: String,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
    },
    /// Score one pair, or rank every other document against one.
    Similar {
        document: String,
        other: Option<String>,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        depth: usize,
        #[arg(long)]
        collection: Option<String>,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
    },
    Ask {
        question: String,
        #[arg(long, default_value = "faq")]
        collection: String,
        #[arg(long, default_value = "en")]
        lang: String,
        #[arg(short, long, default_value_t = 3)]
        k: usize,
    },
    Mentions {
        iri: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum ExportCmd {
    Triples {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let ctx = Ctx { cli };
    match &cli.command {
        Command::Serve { port, host, with_workers } => ctx.serve(SocketAddr::new(*host, *port), *with_workers, err),
        Command::Workers { config, engine } => ctx.workers(config.as_deref(), engine.as_deref(), err),
        Command::Ingest { dir, collection, default_lang, run_workflow, timeout_secs } => {
            ctx.ingest(dir, collection, default_lang, run_workflow.as_deref(), *timeout_secs, out, err)
        }
        Command::Workflow { cmd } => ctx.workflow(cmd, out, err),
        Command::Patterns { cmd } => ctx.patterns(cmd, out, err),
        Command::Query { cmd } => ctx.query(cmd, out),
        Command::Export { cmd: ExportCmd::Triples { out: path } } => {
            let text = ctx.backend()?.export()?;
            match path {
                Some(p) => fs::write(p, text).map_err(|e| user(format!("{}: {e}", p.display()))),
                None => out.write_all(text.as_bytes()).map_err(internal),
            }
        }
    }
}

/// Local platform or remote server.
enum Backend {
    Local(Platform),
    Remote(HttpClient),
}

impl Backend {
    fn store(&self) -> &dyn StoreClient {
        match self {
            Backend::Local(p) => p.store.as_ref(),
            Backend::Remote(c) => c,
        }
    }

    fn memory(&self) -> &dyn MemoryClient {
        match self {
            Backend::Local(p) => p.memory.as_ref(),
            Backend::Remote(c) => c,
        }
    }

    /// Documents of the labelled collections, or of the whole store.
    fn documents(&self, collection: Option<&str>) -> Result<Vec<(Document, Vec<Annotation>)>, CliError> {
        if let Some(label) = collection {
            return Ok(self.store().collection_documents(label)?);
        }
        match self {
            Backend::Local(p) => {
                p.store.document_ids().iter().map(|id| p.store.get_document(id).map_err(internal)).collect()
            }
            Backend::Remote(c) => {
                let mut out = Vec::new();
                for col in c.list_collections(None)? {
                    for id in &col.document_ids {
                        let d = c.get_document(id)?;
                        out.push((d.document, d.annotations));
                    }
                }
                Ok(out)
            }
        }
    }

    fn mentions(&self, iri: &str) -> Result<BTreeSet<String>, CliError> {
        match self {
            Backend::Local(p) => Ok(p.store.query_documents_by_reference(iri)),
            Backend::Remote(c) => Ok(c.mentions(iri)?),
        }
    }

    fn export(&self) -> Result<String, CliError> {
        match self {
            Backend::Local(p) => Ok(p.store.export_triples()),
            Backend::Remote(c) => Ok(c.export_triples()?),
        }
    }

    fn deploy(&self, def: WorkflowDefinition) -> Result<String, CliError> {
        match self {
            Backend::Local(p) => p.engine.deploy_workflow(def).map_err(|e| ClientError::from(e).into()),
            Backend::Remote(c) => Ok(c.deploy_workflow(&def)?),
        }
    }

    fn start(&self, workflow_id: &str, vars: Variables) -> Result<ProcessInstance, CliError> {
        match self {
            Backend::Local(p) => p.engine.start_process(workflow_id, vars).map_err(|e| ClientError::from(e).into()),
            Backend::Remote(c) => Ok(c.start_process(workflow_id, vars)?),
        }
    }

    fn status(&self, process_id: &str) -> Result<ProcessInstance, CliError> {
        match self {
            Backend::Local(p) => p.engine.get_process_state(process_id).map_err(|e| ClientError::from(e).into()),
            Backend::Remote(c) => Ok(c.process_state(process_id)?),
        }
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
}

impl Ctx<'_> {
    fn resources(&self) -> Result<Resources, CliError> {
        load_resources(self.cli.resources_dir.as_deref()).map_err(user)
    }

    fn resources_dir(&self) -> PathBuf {
        self.cli.resources_dir.clone().unwrap_or_else(|| PathBuf::from("resources"))
    }

    fn data_dir(&self) -> PathBuf {
        self.cli.data_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
    }

    fn platform(&self) -> Result<Platform, CliError> {
        let data = self.data_dir();
        Platform::open(Some(&data), self.resources()?).map_err(|e| internal(format!("{}: {e}", data.display())))
    }

    fn backend(&self) -> Result<Backend, CliError> {
        match &self.cli.api {
            Some(url) => Ok(Backend::Remote(HttpClient::new(url))),
            None => Ok(Backend::Local(self.platform()?)),
        }
    }

    fn worker_configs(&self, path: Option<&Path>) -> Result<Vec<WorkerConfig>, CliError> {
        let path = path.map(Path::to_path_buf).unwrap_or_else(|| self.resources_dir().join(WORKERS_FILE));
        let src = fs::read_to_string(&path).map_err(|e| user(format!("{}: {e}", path.display())))?;
        let cfgs = WorkerConfig::parse_lines(&src).map_err(|e| user(format!("{}: {e}", path.display())))?;
        if cfgs.is_empty() {
            return Err(user(format!("{}: no workers configured", path.display())));
        }
        Ok(cfgs)
    }

    fn serve(&self, addr: SocketAddr, with_workers: bool, err: &mut dyn Write) -> CliResult {
        let platform = Arc::new(self.platform()?);
        let pool = if with_workers {
            Some(WorkerPool::spawn(&self.worker_configs(None)?, &platform.worker_context()))
        } else {
            None
        };
        let server = spawn_server(platform, addr).map_err(|e| user(format!("cannot bind {addr}: {e}")))?;
        let _ = writeln!(err, "listening on {}", server.url());
        wait_for_interrupt()?;
        drop(pool);
        server.stop().map_err(internal)
    }

    fn workers(&self, config: Option<&Path>, engine: Option<&str>, err: &mut dyn Write) -> CliResult {
        let cfgs = self.worker_configs(config)?;
        let url = engine.map(str::to_string).or_else(|| self.cli.api.clone());
        let url = url.unwrap_or_else(|| format!("http://127.0.0.1:{DEFAULT_PORT}"));
        let client = Arc::new(HttpClient::new(&url));
        client.health().map_err(|e| user(format!("engine at {url} is not reachable: {e}")))?;
        let ctx = WorkerContext {
            engine: client.clone(),
            memory: client.clone(),
            store: Some(client.clone()),
            services: Arc::new(ServiceRegistry::new(Arc::new(self.resources()?), Some(client.clone()))),
        };
        let pool = WorkerPool::spawn(&cfgs, &ctx);
        let _ = writeln!(err, "{} workers polling {url}", cfgs.len());
        wait_for_interrupt()?;
        let stats = pool.stop();
        let _ = writeln!(err, "completed {} failed {} rejected {}", stats.completed, stats.failed, stats.rejected);
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn ingest(
        &self,
        dir: &Path,
        collection: &str,
        default_lang: &str,
        run_workflow: Option<&str>,
        timeout_secs: u64,
        out: &mut dyn Write,
        err: &mut dyn Write,
    ) -> CliResult {
        let files = read_document_dir(dir, default_lang).map_err(user)?;
        let backend = self.backend()?;
        let cid = backend.store().ensure_collection(collection)?;
        let mut stored = Vec::new();
        for f in &files {
            match f {
                Err(e) => {
                    let _ = writeln!(err, "warning: skipped {e}");
                }
                Ok(doc) => match backend.store().put_document(&cid, doc.clone()) {
                    Ok(d) => stored.push(d),
                    Err(e) => {
                        let _ = writeln!(err, "warning: skipped {}: {e}", doc.id);
                    }
                },
            }
        }
        writeln!(out, "{}", stored.len()).map_err(internal)?;
        if !files.is_empty() && stored.is_empty() {
            return Err(user("no document could be ingested"));
        }
        let Some(wf) = run_workflow else { return Ok(()) };
        let mut pids = Vec::new();
        for doc in &stored {
            let key = backend.memory().put(&serde_json::to_vec(doc).map_err(internal)?, JSON)?;
            let vars = Variables::from([(DOCUMENT.to_string(), VariableValue::SharedRef(key))]);
            pids.push((backend.start(wf, vars)?.id, doc.id.clone()));
        }
        let ids: Vec<String> = pids.iter().map(|(p, _)| p.clone()).collect();
        let finals = self.drive(&backend, &ids, timeout_secs)?;
        let mut unfinished = 0;
        for ((pid, doc), p) in pids.iter().zip(&finals) {
            unfinished += usize::from(p.state != ProcessState::Completed);
            writeln!(out, "{pid}\t{doc}\t{}", state_name(p.state)).map_err(internal)?;
        }
        if unfinished > 0 {
            return Err(internal(format!("{unfinished} of {} processes did not complete", pids.len())));
        }
        Ok(())
    }

    /// Waits for the processes to leave RUNNING. Local backends run the
    /// configured workers meanwhile.
    fn drive(&self, backend: &Backend, pids: &[String], timeout_secs: u64) -> Result<Vec<ProcessInstance>, CliError> {
        let _workers = match backend {
            Backend::Local(p) => {
                let pool = WorkerPool::spawn(&self.worker_configs(None)?, &p.worker_context());
                Some((pool, Ticker::spawn(p.engine.clone(), DEFAULT_TICK, None)))
            }
            Backend::Remote(_) => None,
        };
        let deadline = Instant::now() + Duration::from_secs(timeout_secs);
        loop {
            let states = pids.iter().map(|p| backend.status(p)).collect::<Result<Vec<_>, _>>()?;
            if states.iter().all(|p| p.state != ProcessState::Running) || Instant::now() >= deadline {
                return Ok(states);
            }
            std::thread::sleep(Duration::from_millis(50));
        }
    }

    fn workflow(&self, cmd: &WorkflowCmd, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
        let backend = self.backend()?;
        match cmd {
            WorkflowCmd::Deploy { file } => {
                let src = fs::read_to_string(file).map_err(|e| user(format!("{}: {e}", file.display())))?;
                let def = WorkflowDefinition::parse(&src).map_err(|e| user(format!("{}: {e}", file.display())))?;
                writeln!(out, "{}", backend.deploy(def)?).map_err(internal)
            }
            WorkflowCmd::Start { workflow_id, document, default_lang, vars, timeout_secs } => {
                let mut variables = Variables::new();
                for v in vars {
                    let (k, raw) = v.split_once('=').ok_or_else(|| user(format!("expected key=value, got {v:?}")))?;
                    let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.into()));
                    variables.insert(k.to_string(), VariableValue::Inline(value));
                }
                if let Some(path) = document {
                    let doc = read_document(path, default_lang).map_err(user)?;
                    let key = backend.memory().put(&serde_json::to_vec(&doc).map_err(internal)?, JSON)?;
                    variables.insert(DOCUMENT.to_string(), VariableValue::SharedRef(key));
                }
                let p = backend.start(workflow_id, variables)?;
                if matches!(backend, Backend::Local(_)) {
                    let done = self.drive(&backend, std::slice::from_ref(&p.id), *timeout_secs)?;
                    let _ = writeln!(err, "{}", state_name(done[0].state));
                }
                writeln!(out, "{}", p.id).map_err(internal)
            }
            WorkflowCmd::Status { process_id } => {
                let p = backend.status(process_id)?;
                writeln!(out, "{}", serde_json::to_string_pretty(&p).map_err(internal)?).map_err(internal)
            }
        }
    }

    fn patterns(&self, cmd: &PatternsCmd, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
        let default_file = || self.resources_dir().join(PATTERNS_FILE);
        match cmd {
            PatternsCmd::Induce { dir, triggers, min_support, default_lang, file } => {
                let file = file.clone().unwrap_or_else(default_file);
                let corpus = read_document_dir(dir, default_lang).map_err(user)?;
                let docs: Vec<Document> = corpus
                    .into_iter()
                    .filter_map(|r| r.map_err(|e| writeln!(err, "warning: skipped {e}")).ok())
                    .collect();
                let triggers: BTreeSet<String> = triggers.iter().cloned().collect();
                let mut patterns = induce_reference_patterns(&docs, &triggers, *min_support).map_err(user)?;
                let approved: BTreeSet<_> = match fs::read_to_string(&file) {
                    Ok(src) => parse_review_file(&src)
                        .map_err(|e| user(format!("{}: {e}", file.display())))?
                        .into_iter()
                        .filter(|p| p.approved)
                        .map(|p| p.features)
                        .collect(),
                    Err(_) => BTreeSet::new(),
                };
                for p in &mut patterns {
                    p.approved = approved.contains(&p.features);
                }
                let text = write_review_file(&patterns);
                fs::write(&file, &text).map_err(|e| user(format!("{}: {e}", file.display())))?;
                out.write_all(text.as_bytes()).map_err(internal)
            }
            PatternsCmd::Review { file } => {
                let file = file.clone().unwrap_or_else(default_file);
                for p in read_patterns(&file)? {
                    let feats: Vec<String> = p.features.iter().map(ToString::to_string).collect();
                    writeln!(out, "{}\t{}\t{}\t{}", p.id, p.support, p.approved, feats.join(" ")).map_err(internal)?;
                }
                Ok(())
            }
            PatternsCmd::Approve { ids, file } => {
                let file = file.clone().unwrap_or_else(default_file);
                let mut patterns = read_patterns(&file)?;
                let known: BTreeSet<&str> = patterns.iter().map(|p| p.id.as_str()).collect();
                if let Some(missing) = ids.iter().find(|i| !known.contains(i.as_str())) {
                    return Err(user(format!("unknown pattern id {missing}")));
                }
                for p in patterns.iter_mut().filter(|p| ids.contains(&p.id)) {
                    p.approved = true;
                    writeln!(out, "{}", p.id).map_err(internal)?;
                }
                fs::write(&file, write_review_file(&patterns)).map_err(|e| user(format!("{}: {e}", file.display())))
            }
        }
    }

    fn query(&self, cmd: &QueryCmd, out: &mut dyn Write) -> CliResult {
        let backend = self.backend()?;
        let resources = self.resources()?;
        let sw = &resources.stopwords;
        let retrieval = |e: RetrievalError| match e {
            RetrievalError::EmptyQuery | RetrievalError::InvalidAlpha(_) | RetrievalError::UnknownDocument(_) => user(e),
            other => internal(other),
        };
        match cmd {
            QueryCmd::Search { query, collection, lang, k } => {
                let docs = backend.documents(collection.as_deref())?;
                if docs.is_empty() {
                    return Ok(());
                }
                let docs: Vec<Document> = docs.into_iter().map(|(d, _)| d).collect();
                let index = Index::build("query", &docs, sw).map_err(retrieval)?;
                for (i, (id, score)) in search(&index, query, lang, *k, sw).map_err(retrieval)?.into_iter().enumerate() {
                    writeln!(out, "{}\t{id}\t{score}", i + 1).map_err(internal)?;
                }
                Ok(())
            }
            QueryCmd::Similar { document, other, alpha, depth, collection, k } => {
                let cfg = SimilarityConfig::new(*alpha, *depth).map_err(retrieval)?;
                let stored = backend.documents(collection.as_deref())?;
                if !stored.iter().any(|(d, _)| &d.id == document) {
                    return Err(user(format!("unknown document {document}")));
                }
                let refs: BTreeMap<String, BTreeSet<String>> = stored
                    .iter()
                    .map(|(d, a)| (d.id.clone(), a.iter().filter_map(|a| a.reference.clone()).collect()))
                    .collect();
                let docs: Vec<Document> = stored.into_iter().map(|(d, _)| d).collect();
                let index = Index::build("query", &docs, sw).map_err(retrieval)?;
                let score = |b: &str| hybrid_similarity(&index, &refs, &resources.taxonomy, document, b, &cfg);
                let mut ranked: Vec<(String, f64)> = match other {
                    Some(b) => vec![(b.clone(), score(b).map_err(retrieval)?)],
                    None => docs
                        .iter()
                        .filter(|d| &d.id != document)
                        .map(|d| score(&d.id).map(|s| (d.id.clone(), s)))
                        .collect::<Result<_, _>>()
                        .map_err(retrieval)?,
                };
                ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                for (i, (id, s)) in ranked.into_iter().take(*k).enumerate() {
                    writeln!(out, "{}\t{id}\t{s}", i + 1).map_err(internal)?;
                }
                Ok(())
            }
            QueryCmd::Ask { question, collection, lang, k } => {
                if question.trim().is_empty() {
                    return Err(user(RetrievalError::EmptyQuery));
                }
                let docs: BTreeMap<String, Document> =
                    backend.documents(Some(collection))?.into_iter().map(|(d, _)| (d.id.clone(), d)).collect();
                if docs.is_empty() {
                    return Ok(());
                }
                let mut targets: BTreeSet<String> = docs.values().map(|d| d.language.clone()).collect();
                targets.remove(lang);
                let ctx = QueryContext {
                    lexicon: &resources.lexicon,
                    taxonomy: &resources.taxonomy,
                    stopwords: sw,
                    target_langs: &targets,
                };
                let all: Vec<Document> = docs.values().cloned().collect();
                let index = Index::build(collection, &all, sw).map_err(retrieval)?;
                let answers = match answer_question(question, lang, &index, &docs, &ctx, *k) {
                    Ok(a) => a,
                    Err(RetrievalError::NoMatch) => Vec::new(),
                    Err(e) => return Err(retrieval(e)),
                };
                for (i, a) in answers.into_iter().take(*k).enumerate() {
                    writeln!(out, "{}\t{}\t{}\t{}", i + 1, a.score, a.document_id, a.sentence.replace(['\t', '\n'], " "))
                        .map_err(internal)?;
                }
                Ok(())
            }
            QueryCmd::Mentions { iri } => {
                for (i, id) in backend.mentions(iri)?.into_iter().enumerate() {
                    writeln!(out, "{}\t{id}", i + 1).map_err(internal)?;
                }
                Ok(())
            }
        }
    }
}

fn read_patterns(file: &Path) -> Result<Vec<lexflow_core::annotators::ReferencePattern>, CliError> {
    let src = fs::read_to_string(file).map_err(|e| user(format!("{}: {e}", file.display())))?;
    parse_review_file(&src).map_err(|e| user(format!("{}: {e}", file.display())))
}

pub fn state_name(s: ProcessState) -> &'static str {
    match s {
        ProcessState::Running => "RUNNING",
        ProcessState::Completed => "COMPLETED",
        ProcessState::Failed => "FAILED",
        ProcessState::Cancelled => "CANCELLED",
    }
}

fn wait_for_interrupt() -> CliResult {
    let (tx, rx) = std::sync::mpsc::channel();
    ctrlc::set_handler(move || {
        let _ = tx.send(());
    })
    .map_err(internal)?;
    let _ = rx.recv();
    Ok(())
}
