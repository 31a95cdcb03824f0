use std::collections::{BTreeMap, BTreeSet};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use lexflow_core::corpus::load_document_dir;
use lexflow_core::resources::Resources;
use lexflow_core::retrieval::{cosine_similarity, Index};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn lexflow(data: &Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lexflow"));
    cmd.env_remove("LEXFLOW_PORT")
        .env_remove("LEXFLOW_DATA")
        .arg("--data-dir")
        .arg(data)
        .arg("--resources-dir")
        .arg(root().join("resources"));
    cmd
}

fn run(data: &Path, args: &[&str]) -> Output {
    lexflow(data).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(data: &Path, args: &[&str]) -> String {
    let o = run(data, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

/// Compares against `tests/golden/<name>`; `LEXFLOW_UPDATE_GOLDEN=1` rewrites it.
fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("LEXFLOW_UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} drifted");
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_and_help() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
    assert_eq!(code(&run(dir.path(), &["--version"])), 0);
    assert_eq!(code(&run(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&run(dir.path(), &["query", "search"])), 1);
    assert_eq!(code(&run(dir.path(), &["query", "ask", "  "])), 1);
    assert_eq!(code(&run(dir.path(), &["ingest", path(&dir.path().join("missing"))])), 1);
    assert_eq!(code(&run(dir.path(), &["workers", "--config", path(&dir.path().join("nope.jsonl"))])), 1);
    assert_eq!(code(&run(dir.path(), &["query", "similar", "http://lkg.local/doc/none"])), 1);

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(ok(&dir.path().join("data"), &["ingest", path(&empty)]), "0\n");
}

#[test]
fn cyclic_workflow_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("loop.json");
    std::fs::write(
        &file,
        r#"{"id":"loop","nodes":[{"id":"a","topic":"t"},{"id":"b","topic":"t"}],"edges":[["a","b"],["b","a"]]}"#,
    )
    .unwrap();
    let o = run(&dir.path().join("data"), &["workflow", "deploy", path(&file)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cycl"));
}

#[test]
fn local_ingest_query_and_export() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let corpus = root().join("fixtures/corpus");
    let out = ok(&data, &["ingest", path(&corpus), "--run-workflow", "lkg-population"]);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.ends_with("\tCOMPLETED")), "{out}");

    ok(&data, &["ingest", path(&root().join("fixtures/faq")), "--collection", "faq"]);
    let hits = ok(&data, &["query", "search", "employment contract", "-k", "3"]);
    assert!(hits.lines().count() <= 3 && hits.lines().count() > 0, "{hits}");
    let first = hits.lines().next().unwrap().split('\t').collect::<Vec<_>>();
    assert_eq!(first[0], "1");

    let answer = ok(&data, &["query", "ask", "How many days of paid vacation does an employee get per year?", "-k", "1"]);
    assert!(answer.contains("http://lkg.local/faq/vacation"), "{answer}");

    let export = tmp.path().join("out.nt");
    ok(&data, &["export", "triples", "--out", path(&export)]);
    let printed = ok(&data, &["export", "triples"]);
    assert_eq!(std::fs::read_to_string(&export).unwrap(), printed);
    assert!(printed.lines().all(|l| l.ends_with(" .")));

    // every mentioned IRI resolves to exactly the documents whose export names it
    let mut oracle: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for line in printed.lines().filter(|l| l.contains(" <http://schema.org/mentions> ")) {
        let (subject, rest) = line.split_once(" <http://schema.org/mentions> ").unwrap();
        let doc = subject.trim_start_matches('<').trim_end_matches('>');
        let iri = rest.trim_end_matches(" .").trim_start_matches('<').trim_end_matches('>');
        oracle.entry(iri.to_string()).or_default().insert(doc.to_string());
    }
    assert!(!oracle.is_empty());
    for (iri, docs) in &oracle {
        let listed: BTreeSet<String> =
            ok(&data, &["query", "mentions", iri]).lines().map(|l| l.split('\t').nth(1).unwrap().to_string()).collect();
        assert_eq!(&listed, docs, "{iri}");
    }

    // alpha 1 is plain cosine over the stored documents
    let res = Resources::load(&root().join("resources")).unwrap();
    let mut stored = load_document_dir(&corpus, "en").unwrap();
    stored.extend(load_document_dir(&root().join("fixtures/faq"), "en").unwrap());
    let index = Index::build("oracle", &stored, &res.stopwords).unwrap();
    let (a, b) = (&stored[0].id, &stored[1].id);
    let line = ok(&data, &["query", "similar", a, b, "--alpha", "1"]);
    let got: f64 = line.trim().split('\t').nth(2).unwrap().parse().unwrap();
    assert!((got - cosine_similarity(&index, a, b).unwrap()).abs() < 1e-12, "{line}");

    golden("search.txt", &ok(&data, &["query", "search", "termination of the employment contract"]));
    golden("ask.txt", &ok(&data, &["query", "ask", "Who decides the lowest salary?"]));
    golden("similar.txt", &ok(&data, &["query", "similar", a, "-k", "5"]));
    golden("mentions.txt", &ok(&data, &["query", "mentions", oracle.keys().next().unwrap()]));

    // state survives the process boundary
    let again = ok(&data, &["export", "triples"]);
    assert_eq!(again, printed);
}

#[test]
fn unreadable_files_are_skipped() {
    let tmp = tempfile::tempdir().unwrap();
    let docs = tmp.path().join("docs");
    std::fs::create_dir(&docs).unwrap();
    std::fs::write(docs.join("good.txt"), "The employer pays the salary.").unwrap();
    std::fs::write(docs.join("bad.txt"), [0xff, 0xfe, 0x00, 0xc3]).unwrap();
    let o = run(&tmp.path().join("data"), &["ingest", path(&docs)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.txt"));

    std::fs::remove_file(docs.join("good.txt")).unwrap();
    let o = run(&tmp.path().join("data2"), &["ingest", path(&docs)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn pattern_review_cycle() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let file = tmp.path().join("patterns.review");
    let file_s = path(&file);
    let docs = tmp.path().join("docs");
    std::fs::create_dir(&docs).unwrap();
    for (i, cite) in ["Article 5 TFEU", "Article 12 TEU", "Article 7 GDPR", "Decision (EU) 2016/679"].iter().enumerate() {
        std::fs::write(docs.join(format!("d{i}.txt")), format!("As laid down in {cite}, the rule applies.")).unwrap();
    }
    ok(&data, &["patterns", "induce", path(&docs), "--triggers", "Article,Decision", "--min-support", "2", "--file", file_s]);
    let review = ok(&data, &["patterns", "review", "--file", file_s]);
    let rows: Vec<Vec<&str>> = review.lines().map(|l| l.split('\t').collect()).collect();
    let full = rows.iter().find(|r| r[3] == "\"Article\" DIGITS UPPERCASE_ABBR").expect("full pattern induced");
    assert_eq!((full[1], full[2]), ("3", "false"));
    assert!(rows.iter().all(|r| r[3] != "\"Decision\" \"(\" UPPERCASE_ABBR \")\" DIGITS_SLASH_DIGITS"));
    let id = full[0].to_string();
    let approved_row = |review: &str| review.lines().find(|l| l.starts_with(&format!("{id}\t"))).unwrap().to_string();

    let before = std::fs::read_to_string(&file).unwrap();
    let o = run(&data, &["patterns", "approve", &id, "nope", "--file", file_s]);
    assert_eq!(code(&o), 1);
    assert_eq!(std::fs::read_to_string(&file).unwrap(), before);

    ok(&data, &["patterns", "approve", &id, "--file", file_s]);
    let review = ok(&data, &["patterns", "review", "--file", file_s]);
    assert!(approved_row(&review).contains("\ttrue\t"), "{review}");

    // re-induction keeps the approval
    ok(&data, &["patterns", "induce", path(&docs), "--triggers", "Article,Decision", "--file", file_s]);
    let review = ok(&data, &["patterns", "review", "--file", file_s]);
    assert!(approved_row(&review).contains("\ttrue\t"), "{review}");
}

#[test]
fn induction_on_the_fixture_corpus_finds_the_decision_pattern() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("patterns.review");
    let corpus = root().join("fixtures/corpus");
    ok(&tmp.path().join("data"), &["patterns", "induce", path(&corpus), "--triggers", "Decision", "--file", path(&file)]);
    let src = std::fs::read_to_string(&file).unwrap();
    assert!(src.lines().any(|l| l.ends_with("| \"Decision\" \"(\" UPPERCASE_ABBR \")\" DIGITS_SLASH_DIGITS")), "{src}");
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn wait_ready(data: &Path, api: &str) {
    let deadline = Instant::now() + Duration::from_secs(20);
    while Instant::now() < deadline {
        if code(&run(data, &["--api", api, "export", "triples"])) == 0 {
            return;
        }
        std::thread::sleep(Duration::from_millis(100));
    }
    panic!("server at {api} never came up");
}

#[test]
fn remote_mode_with_separate_worker_process() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let port = free_port();
    let api = format!("http://127.0.0.1:{port}");
    let _server = Server(
        lexflow(&data)
            .args(["serve", "--port", &port.to_string()])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    wait_ready(&data, &api);
    let _workers = Server(
        lexflow(&data).args(["workers", "--engine", &api]).stdout(Stdio::null()).stderr(Stdio::null()).spawn().unwrap(),
    );

    let out = ok(&data, &["--api", &api, "ingest", path(&root().join("fixtures/faq")), "--collection", "faq"]);
    assert!(out.lines().next().unwrap().parse::<usize>().unwrap() > 0);
    let answer = ok(&data, &["--api", &api, "query", "ask", "How is the minimum wage adjusted every year?", "-k", "1"]);
    assert!(answer.contains("http://lkg.local/faq/minimum-wage"), "{answer}");

    let corpus = root().join("fixtures/corpus");
    let out = ok(&data, &["--api", &api, "ingest", path(&corpus), "--run-workflow", "lkg-population", "--timeout-secs", "120"]);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.ends_with("\tCOMPLETED")), "{out}");
    let pid = rows[0].split('\t').next().unwrap();
    let status = ok(&data, &["--api", &api, "workflow", "status", pid]);
    assert!(status.contains("COMPLETED"), "{status}");
    assert!(ok(&data, &["--api", &api, "export", "triples"]).lines().count() > rows.len());
}
