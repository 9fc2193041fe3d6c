use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::NaiveDate;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use cat_forge::api::router;
use cat_forge::app::{AppState, ServeOptions};
use cat_forge::ops;
use catforge::pipeline::{Project, Stage};

const OPENING: &str = "I want to reserve two tickets for Forrest Gump tonight at 19:30";

fn options() -> ServeOptions {
    ServeOptions {
        now: Some(
            NaiveDate::from_ymd_opt(2024, 5, 1)
                .unwrap()
                .and_hms_opt(18, 0, 0)
                .unwrap(),
        ),
        ui_dir: None,
    }
}

fn project(dir: &Path, trained: bool) -> Project {
    ops::write_fixture(dir, 1000, 1).unwrap();
    let project = Project::open(dir).unwrap();
    if trained {
        ops::generate(&project).unwrap();
        ops::train(&project).unwrap();
    }
    project
}

fn app(dir: &Path, trained: bool) -> (Arc<AppState>, Router) {
    let state = AppState::open(project(dir, trained), options()).unwrap();
    let router = router(state.clone());
    (state, router)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.map(|b| b.to_string()).unwrap_or_default()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn say(app: &Router, session: &str, text: &str) -> Value {
    let (status, body) = call(
        app,
        "POST",
        &format!("/sessions/{session}/messages"),
        Some(json!({"text": text})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    body
}

async fn new_session(app: &Router) -> String {
    let (status, body) = call(app, "POST", "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["session_id"].as_str().unwrap().to_string()
}

async fn wait_for_stage(app: &Router, done: impl Fn(&str) -> bool) -> Value {
    for _ in 0..1500 {
        let (_, status) = call(app, "GET", "/pipeline/status", None).await;
        if done(status["stage"].as_str().unwrap()) {
            return status;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("pipeline did not settle");
}

fn asks(response: &Value) -> Vec<String> {
    response["actions"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|a| a.as_str().filter(|a| a.starts_with("ask(")).map(str::to_string))
        .collect()
}

#[tokio::test]
async fn chat_is_refused_until_trained() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app(dir.path(), false);
    let (status, body) = call(&app, "POST", "/sessions", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"]["code"], "agent_not_ready");
    assert!(body["error"]["message"].is_string());
    let (_, status) = call(&app, "GET", "/pipeline/status", None).await;
    assert_eq!(status["stage"], "idle");
    assert_eq!(status["agent_ready"], false);
    assert_eq!(status["tables"]["customer"], 1000);
}

#[tokio::test]
async fn pipeline_runs_generate_then_train() {
    let dir = tempfile::tempdir().unwrap();
    let (state, app) = app(dir.path(), false);

    // Overlapping starts are rejected.
    state.begin_stage(Stage::Generating).unwrap();
    let (status, body) = call(&app, "POST", "/pipeline/train", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"]["code"], "pipeline_busy");
    let (_, body) = call(&app, "GET", "/pipeline/status", None).await;
    assert_eq!(body["stage"], "generating");
    state.run_stage(Stage::Generating).unwrap();

    let (status, body) = call(&app, "POST", "/pipeline/generate", None).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(body["stage"], "generating");
    let generated = wait_for_stage(&app, |s| s != "generating").await;
    assert_eq!(generated["stage"], "idle");
    assert!(generated["utterances"].as_u64().unwrap() >= 2000);
    assert_eq!(generated["flows"], 1000);

    let (status, body) = call(&app, "POST", "/pipeline/train", None).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(body["stage"], "training");
    let trained = wait_for_stage(&app, |s| s != "training").await;
    assert_eq!(trained["stage"], "ready", "{trained}");
    assert_eq!(trained["agent_ready"], true);
    assert!(trained["trained_at"].is_string());
    new_session(&app).await;
}

#[tokio::test]
async fn failed_stage_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app(dir.path(), false);
    // Training before generation has nothing to read.
    let (status, _) = call(&app, "POST", "/pipeline/train", None).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let settled = wait_for_stage(&app, |s| s != "training").await;
    assert_eq!(settled["stage"], "idle");
    assert!(
        settled["last_error"].as_str().unwrap().contains("nlu.jsonl"),
        "{settled}"
    );
}

#[tokio::test]
async fn reservation_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app(dir.path(), true);
    let id = new_session(&app).await;

    let first = say(&app, &id, "I want to reserve four seats tonight").await;
    assert!(
        first["action"].is_string() && !first["text"].as_str().unwrap().is_empty(),
        "{first}"
    );

    let id = new_session(&app).await;
    let mut last = Value::Null;
    for line in [OPENING, "Koch", "Ada", "the fourth one", "yes"] {
        last = say(&app, &id, line).await;
    }
    assert_eq!(last["action"], "inform_result");
    assert_eq!(last["transaction"]["outcome"]["kind"], "committed", "{last}");

    let (status, transcript) = call(&app, "GET", &format!("/sessions/{id}/transcript"), None).await;
    assert_eq!(status, StatusCode::OK);
    let turns = transcript.as_array().unwrap();
    assert_eq!(turns.len(), 10);
    assert_eq!(turns[0]["actor"], "user");
    assert_eq!(turns[0]["text"], OPENING);
    assert_eq!(turns[9]["text"], last["text"]);
}

#[tokio::test]
async fn errors_are_structured() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app(dir.path(), true);
    let (status, body) = call(&app, "POST", "/sessions/nope/messages", Some(json!({"text": "hi"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "not_found");
    let (status, _) = call(&app, "GET", "/sessions/nope/transcript", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let id = new_session(&app).await;
    let (status, body) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/messages"),
        Some(json!({"message": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "invalid_body");

    let bad = json!({"table": "customer", "column": "shoe_size", "annotation": {"request_preference": "never"}});
    let (status, body) = call(&app, "PUT", "/schema/annotations", Some(bad)).await;
    assert_eq!(status, StatusCode::NOT_FOUND, "{body}");
    let (status, _) = call(&app, "GET", "/benchmark/b99", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn schema_and_annotations_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app(dir.path(), false);
    let (status, schema) = call(&app, "GET", "/schema", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(schema["tables"].as_array().unwrap().len(), 6);
    let (_, annotations) = call(&app, "GET", "/schema/annotations", None).await;
    let total: usize = schema["tables"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["columns"].as_array().unwrap().len())
        .sum();
    assert_eq!(annotations.as_array().unwrap().len(), total);
    assert!(annotations.as_array().unwrap().iter().any(|a| a["table"] == "customer"
        && a["column"] == "last_name"
        && a["annotation"]["request_preference"] == "normal"));
}

#[tokio::test]
async fn never_annotation_stops_requests() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app(dir.path(), true);

    let control = new_session(&app).await;
    let opened = say(&app, &control, OPENING).await;
    assert_eq!(asks(&opened), ["ask(customer.last_name)"]);

    let (_, annotations) = call(&app, "GET", "/schema/annotations", None).await;
    let mut entry = annotations
        .as_array()
        .unwrap()
        .iter()
        .find(|a| a["table"] == "customer" && a["column"] == "last_name")
        .unwrap()
        .clone();
    entry["annotation"]["request_preference"] = json!("never");
    let (status, updated) = call(&app, "PUT", "/schema/annotations", Some(json!([entry]))).await;
    assert_eq!(status, StatusCode::OK, "{updated}");
    assert!(updated.as_array().unwrap().contains(&entry));
    let on_disk = std::fs::read_to_string(dir.path().join("schema.json")).unwrap();
    assert!(on_disk.contains("\"never\""));

    let id = new_session(&app).await;
    let mut asked = asks(&say(&app, &id, OPENING).await);
    for _ in 0..8 {
        asked.extend(asks(&say(&app, &id, "I don't know").await));
    }
    assert!(!asked.is_empty());
    assert!(!asked.iter().any(|a| a == "ask(customer.last_name)"), "{asked:?}");
}

#[tokio::test]
async fn restart_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    project(dir.path(), true);
    let script = [OPENING, "Koch", "no idea", "the second one", "no", "stop"];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let app = router(AppState::open(Project::open(dir.path()).unwrap(), options()).unwrap());
        let id = new_session(&app).await;
        let mut responses = Vec::new();
        for line in script {
            responses.push(say(&app, &id, line).await);
        }
        let (_, transcript) = call(&app, "GET", &format!("/sessions/{id}/transcript"), None).await;
        runs.push((responses, transcript));
    }
    assert_eq!(runs[0], runs[1]);
}

#[tokio::test]
async fn benchmark_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app(dir.path(), false);
    let (status, started) = call(
        &app,
        "POST",
        "/benchmark",
        Some(json!({"trials": 40, "scale": 800, "seed": 3})),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let id = started["id"].as_str().unwrap().to_string();
    let mut job = Value::Null;
    for _ in 0..1500 {
        job = call(&app, "GET", &format!("/benchmark/{id}"), None).await.1;
        if job["status"] != "running" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert_eq!(job["status"], "done", "{job}");
    assert_eq!(job["id"], id.as_str());
    let strategies = job["report"]["strategies"].as_array().unwrap();
    let names: Vec<&str> = strategies.iter().map(|s| s["strategy"].as_str().unwrap()).collect();
    assert_eq!(names, ["data_aware", "static", "random"]);
    assert!(strategies.iter().all(|s| s["trials"] == 40));

    // The same request through the shared operation gives the same report.
    let req: ops::BenchmarkRequest = serde_json::from_value(json!({"trials": 40, "scale": 800, "seed": 3})).unwrap();
    let direct = ops::benchmark(None, &req).unwrap();
    assert_eq!(serde_json::to_value(&direct).unwrap(), job["report"]);

    let (_, started) = call(&app, "POST", "/benchmark", Some(json!({"trials": 0}))).await;
    let id = started["id"].as_str().unwrap().to_string();
    for _ in 0..500 {
        job = call(&app, "GET", &format!("/benchmark/{id}"), None).await.1;
        if job["status"] != "running" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert_eq!(job["status"], "failed");
}
