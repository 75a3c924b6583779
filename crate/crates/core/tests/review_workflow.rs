use std::path::{Path, PathBuf};
use std::process::Command;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::TimeZone;
use http_body_util::BodyExt;
use tower::ServiceExt;

use ermatch::entity_model::{CaseId, ResolutionLabel};
use ermatch::pipeline::{run_pipeline_with, FixedClock, ReviewDesk, RunConfig};
use ermatch::review_api::router;

fn clock() -> FixedClock {
    FixedClock(chrono::Utc.with_ymd_and_hms(2025, 3, 1, 9, 0, 0).unwrap())
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fixture")
}

/// Runs the fixture into `dir/out` with registry `dir/registry`.
fn fixture_run(dir: &Path) -> PathBuf {
    let mut cfg = RunConfig::load(fixture_dir().join("config.toml")).unwrap();
    cfg.out_dir = dir.join("out");
    cfg.registry = dir.join("registry");
    run_pipeline_with(&cfg, &clock()).unwrap();
    cfg.out_dir
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ermatch"))
}

async fn call(app: &Router, method: &str, uri: &str, body: &str) -> (StatusCode, serde_json::Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(serde_json::Value::Null))
}

fn api(run_dir: &Path) -> Router {
    router(ReviewDesk::open(run_dir, Box::new(clock())).unwrap(), run_dir)
}

fn queue_files(run_dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(run_dir.join("queue"))
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn binary_runs_fixture_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(fixture_dir().join("config.toml"))
        .arg("--out-dir")
        .arg(&out)
        .arg("--registry")
        .arg(tmp.path().join("registry"))
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["resolutions.csv", "metrics.json", "report.json", "run.json", "training_balanced.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }

    let report = bin().args(["report", "--format", "csv", "--run-dir"]).arg(&out).output().unwrap();
    assert!(report.status.success());
    let text = String::from_utf8(report.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("resolution,")), "{text}");

    let list = bin().args(["review", "list", "--run-dir"]).arg(&out).output().unwrap();
    assert_eq!(String::from_utf8(list.stdout).unwrap().lines().count(), 4);

    let bad = bin()
        .args(["review", "decide", "--case", "pt-simbolo", "--decision", "Rejected", "--reviewer", "jr", "--run-dir"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(!bad.status.success(), "rejection without a reason must fail");
    assert!(String::from_utf8(bad.stderr).unwrap().starts_with("error:"));
}

#[test]
fn binary_rejects_missing_input() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--input"])
        .arg(tmp.path().join("absent.csv"))
        .arg("--out-dir")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!tmp.path().join("out/resolutions.csv").exists());
}

#[tokio::test]
async fn api_serves_a_real_run() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = fixture_run(tmp.path());
    let app = api(&run_dir);

    let (status, list) = call(&app, "GET", "/cases?status=pending", "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(list["total"], 4);
    assert!(list["cases"][0].get("audit").is_none());

    let (status, case) = call(&app, "GET", "/cases/pt-pastigest", "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(case["status"], "pending");
    assert!(case["raw_responses"]["mock"].as_str().unwrap().contains("not sure"));

    let (status, metrics) = call(&app, "GET", "/metrics", "").await;
    assert_eq!(status, StatusCode::OK);
    let rows = metrics["rows"].as_array().unwrap();
    let resolution = rows.iter().find(|r| r["method_name"] == "resolution").unwrap();
    assert_eq!(resolution["accuracy"], serde_json::json!(93.65));

    let (status, decided) = call(
        &app,
        "POST",
        "/cases/pt-pastigest/decision",
        r#"{"decision":"Accepted","reviewer":"ana"}"#,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let code = decided["assigned_code"].as_str().unwrap().to_string();
    assert!(code.starts_with("PT"));

    // the registry now answers for this entity
    let desk = ReviewDesk::open(&run_dir, Box::new(clock())).unwrap();
    let registry = desk.registry_snapshot().unwrap();
    assert!(registry.entry(&code).is_some());

    let (status, err) = call(
        &app,
        "POST",
        "/cases/pt-pastigest/decision",
        r#"{"decision":"Rejected","reviewer":"ana","reason":{"kind":"NameMismatch"}}"#,
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "conflict");

    let (status, _) = call(&app, "GET", "/cases/nope", "").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn cli_and_api_persist_identical_state() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run_a = fixture_run(a.path());
    let run_b = fixture_run(b.path());

    // same decisions, one through the CLI library entry point, one over HTTP
    let steps: [(&str, &str, Option<&str>); 3] = [
        ("pt-simbolo", "Rejected", Some("MissingReference")),
        ("pt-pedra-branca", "Accepted", None),
        ("pt-padaria-boa-esperanca", "Rejected", Some("NameMismatch")),
    ];
    for (case, decision, reason) in steps {
        let mut args = vec!["ermatch", "review", "decide", "--run-dir", run_a.to_str().unwrap()];
        args.extend(["--case", case, "--decision", decision, "--reviewer", "ana"]);
        if let Some(r) = reason {
            args.extend(["--reason", r]);
        }
        let cli = <ermatch::cli::Cli as clap::Parser>::try_parse_from(args).unwrap();
        ermatch::cli::execute(cli, Box::new(clock()), &mut Vec::new()).unwrap();
    }
    let app = api(&run_b);
    for (case, decision, reason) in steps {
        let mut body = serde_json::json!({"decision": decision, "reviewer": "ana"});
        if let Some(r) = reason {
            body["reason"] = serde_json::json!({"kind": r});
        }
        let (status, _) = call(&app, "POST", &format!("/cases/{case}/decision"), &body.to_string()).await;
        assert_eq!(status, StatusCode::OK);
    }

    assert_eq!(queue_files(&run_a), queue_files(&run_b));
    let desk_a = ReviewDesk::open(&run_a, Box::new(clock())).unwrap();
    let desk_b = ReviewDesk::open(&run_b, Box::new(clock())).unwrap();
    let (ra, rb) = (desk_a.registry_snapshot().unwrap(), desk_b.registry_snapshot().unwrap());
    assert!(ra.entries().eq(rb.entries()));
}

#[tokio::test]
async fn failed_requests_leave_the_queue_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = fixture_run(tmp.path());
    let app = api(&run_dir);
    let before = queue_files(&run_dir);

    let bad = [
        ("/cases/pt-simbolo/decision", r#"{"decision":"Rejected","reviewer":"ana"}"#, StatusCode::UNPROCESSABLE_ENTITY),
        ("/cases/pt-simbolo/decision", r#"{"decision":"Doubtful","reviewer":"ana"}"#, StatusCode::UNPROCESSABLE_ENTITY),
        ("/cases/pt-simbolo/decision", r#"{"decision":"Accepted","reviewer":""}"#, StatusCode::UNPROCESSABLE_ENTITY),
        ("/cases/pt-simbolo/decision", r#"{"decision":"Accepted""#, StatusCode::BAD_REQUEST),
        ("/cases/pt-simbolo/decision", r#"{"decision":"Accepted","reviewer":"a","x":1}"#, StatusCode::BAD_REQUEST),
        ("/cases/pt-simbolo/reprocess", r#"{"reviewer":"ana"}"#, StatusCode::CONFLICT),
        ("/cases/missing/decision", r#"{"decision":"Accepted","reviewer":"ana"}"#, StatusCode::NOT_FOUND),
    ];
    for (uri, body, want) in bad {
        let (status, err) = call(&app, "POST", uri, body).await;
        assert_eq!(status, want, "{uri} {body}: {err}");
        assert!(err["code"].is_string() && err["message"].is_string());
        assert_eq!(queue_files(&run_dir), before, "{uri} {body} changed the queue");
    }

    let mut desk = ReviewDesk::open(&run_dir, Box::new(clock())).unwrap();
    let entry = desk.queue().unwrap().get(&CaseId::from("pt-simbolo")).unwrap().clone();
    assert_eq!(entry.audit.len(), 1);
    assert_eq!(entry.case.resolution, Some(ResolutionLabel::Doubtful));
}
