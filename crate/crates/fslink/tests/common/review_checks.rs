//! Review service scenarios shared by the API tests and the acceptance run.
//! Each returns `Err` with a description of the first broken expectation.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, RwLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use fslink::config::Config;
use fslink::review::{load_queue, QueueColumns, QueueOptions, ReviewState};
use fslink::server::router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use super::fixtures::{linked_run, write_config};

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub fn open_state(cfg: &Config) -> ReviewState {
    let opts = QueueOptions {
        order: cfg.review.order,
        seed: cfg.review.seed,
        state: None,
    };
    let items = load_queue(&cfg.out.join("merged.csv"), &QueueColumns::from_config(cfg), &opts).unwrap();
    ReviewState::open(items, &cfg.review_log()).unwrap()
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(Body::from(body.unwrap_or("").to_string())).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8_lossy(&bytes).into_owned())
}

fn parse(text: &str) -> Result<Value, String> {
    serde_json::from_str(text).map_err(|e| format!("bad JSON {text:?}: {e}"))
}

/// Every endpoint against a freshly linked synthetic run, with no UI bundle.
pub async fn api_contract(dir: &Path) -> Result<(), String> {
    let cfg = linked_run(dir, 42);
    let state = Arc::new(RwLock::new(open_state(&cfg)));
    let total = state.read().unwrap().len();
    ensure!(total > 10, "queue too small: {total}");
    let app = router(state.clone(), None);

    let (s, page) = call(&app, "GET", "/", None).await;
    ensure!(s == StatusCode::OK && page.contains("/api/pairs/next"), "GET / -> {s}");

    let (s, body) = call(&app, "GET", "/api/pairs/next", None).await;
    ensure!(s == StatusCode::OK, "next -> {s}");
    let first = parse(&body)?;
    let id = first["pair_id"].as_str().ok_or("next has no pair_id")?.to_string();
    ensure!(first["status"] == "pending", "next item not pending: {first}");
    let max_xi = state.read().unwrap().items().iter().map(|i| i.xi).fold(0.0, f64::max);
    ensure!(first["xi"].as_f64() == Some(max_xi), "next is not the highest posterior");

    let (s, body) = call(&app, "GET", &format!("/api/pairs/{id}"), None).await;
    ensure!(s == StatusCode::OK, "get -> {s}");
    let detail = parse(&body)?;
    ensure!(detail["history"].as_array().is_some_and(|h| h.is_empty()), "fresh pair has history");
    ensure!(detail["a"].as_array().is_some_and(|a| !a.is_empty()), "no A fields");
    ensure!(detail["narrative_b"].is_string(), "no B narrative");

    let (s, _) = call(&app, "GET", "/api/pairs/0000000000000000", None).await;
    ensure!(s == StatusCode::NOT_FOUND, "unknown get -> {s}");
    let ok_body = r#"{"decision":"match","reviewer":"r1"}"#;
    let (s, _) = call(&app, "POST", "/api/pairs/0000000000000000/decision", Some(ok_body)).await;
    ensure!(s == StatusCode::NOT_FOUND, "unknown post -> {s}");
    let uri = format!("/api/pairs/{id}/decision");
    for bad in ["{not json", r#"{"decision":"maybe","reviewer":"r1"}"#, r#"{"decision":"match","reviewer":" "}"#, r#"{"decision":"match"}"#] {
        let (s, _) = call(&app, "POST", &uri, Some(bad)).await;
        ensure!(s == StatusCode::BAD_REQUEST, "body {bad} -> {s}");
    }
    ensure!(state.read().unwrap().history().is_empty(), "rejected requests reached the log");

    let (s, body) = call(&app, "POST", &uri, Some(ok_body)).await;
    ensure!(s == StatusCode::OK, "decision -> {s}");
    let ack = parse(&body)?;
    ensure!(ack["seq"] == 1 && ack["history"] == 1 && ack["status"] == "decided", "ack {ack}");
    let (_, body) = call(&app, "GET", "/api/pairs/next", None).await;
    ensure!(parse(&body)?["pair_id"] != json!(id), "decided pair still served as next");

    let redo = r#"{"decision":"nonmatch","reviewer":"r2"}"#;
    let (s, body) = call(&app, "POST", &uri, Some(redo)).await;
    ensure!(s == StatusCode::OK && parse(&body)?["history"] == 2, "second decision -> {s} {body}");
    let (_, body) = call(&app, "GET", &format!("/api/pairs/{id}"), None).await;
    let detail = parse(&body)?;
    ensure!(detail["history"].as_array().map(Vec::len) == Some(2), "history length");
    ensure!(detail["decision"] == "nonmatch", "last write did not win: {detail}");

    let (s, body) = call(&app, "GET", "/api/summary", None).await;
    ensure!(s == StatusCode::OK, "summary -> {s}");
    let sum = parse(&body)?;
    ensure!(
        sum["n_match"] == 0 && sum["n_nonmatch"] == 1 && sum["decided"] == 1 && sum["total"] == total && sum["history"] == 2,
        "summary {sum}"
    );

    let (s, csv) = call(&app, "GET", "/api/export", None).await;
    ensure!(s == StatusCode::OK, "export -> {s}");
    let lines: Vec<&str> = csv.lines().collect();
    ensure!(lines.len() == 3 && lines[0].starts_with("seq,pair_id,id_a,id_b"), "export {csv:?}");
    let (_, csv) = call(&app, "GET", "/api/export?latest=true", None).await;
    ensure!(csv.lines().count() == 2 && csv.contains("nonmatch"), "latest export {csv:?}");

    // Exhaust the queue.
    let pending: Vec<String> = state.read().unwrap().items().iter().map(|i| i.pair_id.clone()).collect();
    for p in pending {
        let (s, _) = call(&app, "POST", &format!("/api/pairs/{p}/decision"), Some(ok_body)).await;
        ensure!(s == StatusCode::OK, "bulk decision -> {s}");
    }
    let (s, body) = call(&app, "GET", "/api/pairs/next", None).await;
    ensure!(s == StatusCode::NO_CONTENT && body.is_empty(), "exhausted next -> {s}");
    let (_, body) = call(&app, "GET", "/api/summary", None).await;
    let sum = parse(&body)?;
    ensure!(sum["decided"] == total && sum["n_match"] == total, "final summary {sum}");

    // With a UI bundle, `/` and unknown client routes serve the index.
    let ui = dir.join("ui");
    std::fs::create_dir_all(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<html>review ui</html>").unwrap();
    std::fs::write(ui.join("app.js"), "console.log(1)").unwrap();
    let app = router(state, Some(ui));
    let (s, page) = call(&app, "GET", "/", None).await;
    ensure!(s == StatusCode::OK && page.contains("review ui"), "ui index -> {s}");
    let (s, js) = call(&app, "GET", "/app.js", None).await;
    ensure!(s == StatusCode::OK && js.contains("console"), "ui asset -> {s}");
    let (s, page) = call(&app, "GET", "/pairs/abc", None).await;
    ensure!(s == StatusCode::OK && page.contains("review ui"), "ui fallback -> {s}");
    let (s, _) = call(&app, "GET", "/api/summary", None).await;
    ensure!(s == StatusCode::OK, "api behind ui -> {s}");
    Ok(())
}

struct Server {
    child: Child,
    base: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start(config: &str) -> Result<Server, String> {
    let mut child = Command::new(env!("CARGO_BIN_EXE_fslink"))
        .args(["review", "serve", "--config", config, "--bind", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| format!("spawn: {e}"))?;
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .map_err(|e| format!("read: {e}"))?;
    let base = line
        .trim()
        .strip_prefix("listening on ")
        .ok_or_else(|| format!("unexpected banner {line:?}"))?
        .to_string();
    Ok(Server { child, base })
}

fn get_json(base: &str, path: &str) -> Result<Value, String> {
    ureq::get(&format!("{base}{path}"))
        .call()
        .map_err(|e| format!("GET {path}: {e}"))?
        .body_mut()
        .read_json()
        .map_err(|e| format!("GET {path}: {e}"))
}

fn decide(base: &str, pair: &str, decision: &str) -> Result<(), String> {
    ureq::post(&format!("{base}/api/pairs/{pair}/decision"))
        .send_json(json!({ "decision": decision, "reviewer": "r1" }))
        .map_err(|e| format!("POST {pair}: {e}"))?;
    Ok(())
}

/// Decides some pairs through the real binary, kills it with SIGKILL,
/// tears the log tail as a crash mid-append would, restarts and compares.
pub fn kill_and_restart(dir: &Path) -> Result<(), String> {
    let config = write_config(dir);
    let cfg = linked_run(dir, 42);
    let log = cfg.review_log();

    let server = start(&config)?;
    let mut decided: Vec<String> = Vec::new();
    for (i, decision) in ["match", "match", "nonmatch", "undetermined", "match"].iter().enumerate() {
        let next = get_json(&server.base, "/api/pairs/next")?;
        let id = next["pair_id"].as_str().ok_or("next has no pair_id")?.to_string();
        decide(&server.base, &id, decision)?;
        if i == 4 {
            decide(&server.base, &decided[0], "nonmatch")?;
        }
        decided.push(id);
    }
    let before = get_json(&server.base, "/api/summary")?;
    drop(server);

    let mut f = std::fs::OpenOptions::new().append(true).open(&log).unwrap();
    f.write_all(br#"{"seq":7,"pair_id":"abc"#).unwrap();
    drop(f);

    let server = start(&config)?;
    let after = get_json(&server.base, "/api/summary")?;
    ensure!(before == after, "summary changed across restart:\n{before}\n{after}");
    ensure!(after["decided"] == 5 && after["history"] == 6, "summary {after}");
    let detail = get_json(&server.base, &format!("/api/pairs/{}", decided[0]))?;
    ensure!(detail["decision"] == "nonmatch", "override lost: {detail}");
    let next = get_json(&server.base, "/api/pairs/next")?;
    ensure!(!decided.iter().any(|d| next["pair_id"] == json!(d)), "decided pair re-served");
    decide(&server.base, next["pair_id"].as_str().unwrap(), "match")?;
    drop(server);

    let text = std::fs::read_to_string(&log).unwrap();
    ensure!(text.lines().count() == 7 && text.ends_with('\n'), "log not clean after restart:\n{text}");
    for (i, line) in text.lines().enumerate() {
        let v = parse(line)?;
        ensure!(v["seq"] == i + 1, "seq gap at line {}", i + 1);
        let at: Vec<Option<usize>> = ["seq", "pair_id", "decision", "reviewer", "timestamp"]
            .iter()
            .map(|k| line.find(&format!("\"{k}\":")))
            .collect();
        ensure!(at.iter().all(Option::is_some) && at.is_sorted(), "field order in {line}");
    }
    Ok(())
}
