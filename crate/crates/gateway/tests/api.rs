//! HTTP API against a live engine thread.

use std::sync::{mpsc, Arc};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use archemist::api::{router, AppState};
use archemist::view::StateView;
use archemist_core::orchestrator::{Engine, EngineConfig};
use archemist_core::persistence::MemoryStore;
use archemist_core::simlab::Scenario;
use archemist_core::state::{init_from_config, ConfigDoc, Registry, StateAuthority};

fn asset(path: &str) -> String {
    std::fs::read_to_string(format!("{}/../../assets/{path}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn start() -> (Router, Arc<StateAuthority>) {
    start_with(&asset("lab.yaml"))
}

fn start_with(lab_yaml: &str) -> (Router, Arc<StateAuthority>) {
    let registry = Registry::with_builtins();
    let lab = init_from_config(&ConfigDoc::parse(lab_yaml).unwrap(), &registry).unwrap();
    let authority = Arc::new(StateAuthority::bootstrap(lab, Box::new(MemoryStore::new())).unwrap());
    let (tx, rx) = mpsc::channel();
    let app = AppState::new(authority.clone(), tx, "kmr_deck");
    let mut engine = Engine::new(authority.clone(), &registry, &Scenario::default(), 0, EngineConfig::default())
        .unwrap()
        .with_commands(rx);
    std::thread::spawn(move || engine.serve());
    (router(app), authority)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let request = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let request = match body {
        Some(b) => request.body(Body::from(b.to_string())).unwrap(),
        None => request.body(Body::empty()).unwrap(),
    };
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn state(app: &Router) -> StateView {
    serde_json::from_value(call(app, "GET", "/state", None).await.1).unwrap()
}

async fn wait_until(app: &Router, done: impl Fn(&StateView) -> bool) -> StateView {
    for _ in 0..500 {
        let view = state(app).await;
        if done(&view) {
            return view;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("condition not reached");
}

/// Reads `n` stream events as (id, kind, data).
async fn read_events(app: &Router, uri: &str, n: usize) -> Vec<(u64, String, Value)> {
    let request = Request::builder().uri(uri).body(Body::empty()).unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    assert_eq!(response.status(), StatusCode::OK);
    let mut body = response.into_body();
    let mut text = String::new();
    let mut events = Vec::new();
    while events.len() < n {
        let frame = tokio::time::timeout(Duration::from_secs(10), body.frame()).await.expect("stream stalled");
        let frame = frame.unwrap().unwrap();
        if let Ok(data) = frame.into_data() {
            text.push_str(std::str::from_utf8(&data).unwrap());
        }
        while let Some(end) = text.find("\n\n") {
            let block: String = text.drain(..end + 2).collect();
            let (mut id, mut kind, mut data) = (None, String::new(), String::new());
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("id:") {
                    id = Some(v.trim().parse().unwrap());
                } else if let Some(v) = line.strip_prefix("event:") {
                    kind = v.trim().to_string();
                } else if let Some(v) = line.strip_prefix("data:") {
                    data.push_str(v.trim_start());
                }
            }
            if let Some(id) = id {
                events.push((id, kind, serde_json::from_str(&data).unwrap()));
            }
        }
    }
    events.truncate(n);
    events
}

#[tokio::test(flavor = "multi_thread")]
async fn fresh_system_has_no_samples() {
    let (app, _) = start();
    let view = state(&app).await;
    assert!(view.samples.is_empty());
    assert_eq!(view.revision, 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn submitted_sample_starts_at_start() {
    let (app, _) = start();
    call(&app, "POST", "/control", Some(json!({ "command": "pause" }))).await;
    let (status, body) = call(&app, "POST", "/samples", Some(json!({ "recipe": asset("recipes/listing.yaml"), "count": 1 }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["samples"], json!([1]));
    let view = state(&app).await;
    let s = &view.samples[0];
    assert_eq!((s.cursor.as_str(), s.location.as_str(), s.history_len), ("start", "kmr_deck", 0));
    assert!(view.control.paused && view.control.blocked);
}

#[tokio::test(flavor = "multi_thread")]
async fn invalid_recipe_is_422_with_diagnostics() {
    let (app, _) = start();
    let broken = asset("recipes/listing.yaml").replace("onSuccess: liquid_disp", "onSuccess: liquid_dispp");
    let (status, body) = call(&app, "POST", "/samples", Some(json!({ "recipe": broken }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let first = &body["diagnostics"][0];
    assert!(first["code"].as_str().unwrap().starts_with("recipe.semantic"), "{body}");
    assert_eq!(first["suggestion"], "liquid_disp");
    assert!(first["line"].as_u64().is_some());

    let (status, _) = call(&app, "POST", "/samples", Some(json!({ "recipe": asset("recipes/listing.yaml"), "count": 0 }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) =
        call(&app, "POST", "/samples", Some(json!({ "recipe": asset("recipes/listing.yaml"), "location": "moon" }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test(flavor = "multi_thread")]
async fn submit_while_halted_is_409() {
    let (app, _) = start();
    let (status, _) = call(&app, "POST", "/control", Some(json!({ "command": "halt" }))).await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = call(&app, "POST", "/samples", Some(json!({ "recipe": asset("recipes/solubility.yaml") }))).await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
    call(&app, "POST", "/control", Some(json!({ "command": "resume" }))).await;
    let (status, _) = call(&app, "POST", "/samples", Some(json!({ "recipe": asset("recipes/solubility.yaml") }))).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread")]
async fn control_is_idempotent() {
    let (app, authority) = start();
    let (_, a) = call(&app, "POST", "/control", Some(json!({ "command": "pause" }))).await;
    let (_, b) = call(&app, "POST", "/control", Some(json!({ "command": "pause" }))).await;
    assert_eq!(a["revision"], b["revision"]);
    assert_eq!(authority.records().len(), 2);
    let (status, _) = call(&app, "POST", "/control", Some(json!({ "command": "explode" }))).await;
    assert!(status.is_client_error());
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_alert_is_404() {
    let (app, _) = start();
    let (status, body) = call(&app, "POST", "/alerts/42/ack", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "unknown alert 42");
}

#[tokio::test(flavor = "multi_thread")]
async fn solubility_run_through_the_api() {
    let (app, _) = start();
    call(&app, "POST", "/samples", Some(json!({ "recipe": asset("recipes/solubility.yaml") }))).await;
    let view = wait_until(&app, |v| v.metrics.completed == 1).await;
    let s = &view.samples[0];
    assert_eq!(s.history_len, 10);
    assert_eq!((s.cursor.as_str(), s.location.as_str()), ("end", "kmr_deck"));
    assert_eq!(view.metrics.failed, 0);
    let nacl = view.materials.iter().find(|m| m.name == "NaCl").unwrap();
    assert!(nacl.remaining < nacl.initial);
}

#[tokio::test(flavor = "multi_thread")]
async fn stream_replays_every_revision_in_order() {
    let (app, _) = start();
    call(&app, "POST", "/samples", Some(json!({ "recipe": asset("recipes/solubility.yaml") }))).await;
    let done = wait_until(&app, |v| v.metrics.completed == 1).await;
    let n = done.revision as usize;
    let events = read_events(&app, "/state/stream?from=0", n).await;
    let ids: Vec<u64> = events.iter().map(|e| e.0).collect();
    assert_eq!(ids, (1..=done.revision).collect::<Vec<_>>());
    assert_eq!(events[0].1, "init");
    assert!(events.iter().all(|(id, _, data)| data["revision"] == *id));
    assert!(events.iter().any(|e| e.1 == "outcome"));
}

#[tokio::test(flavor = "multi_thread")]
async fn live_stream_is_strictly_ascending() {
    let (app, authority) = start();
    let from = authority.revision();
    let reader = {
        let app = app.clone();
        tokio::spawn(async move { read_events(&app, &format!("/state/stream?from={from}"), 40).await })
    };
    call(&app, "POST", "/samples", Some(json!({ "recipe": asset("recipes/solubility.yaml"), "count": 2 }))).await;
    let events = reader.await.unwrap();
    assert_eq!(events[0].0, from + 1);
    assert!(events.windows(2).all(|w| w[1].0 == w[0].0 + 1));
}

#[tokio::test(flavor = "multi_thread")]
async fn schemas_are_served() {
    let (app, _) = start();
    let (status, index) = call(&app, "GET", "/schema", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(index["version"], "v1");
    let paths: Vec<String> = serde_json::from_value(index["schemas"].clone()).unwrap();
    assert!(paths.contains(&"/schema/v1/state_view".to_string()));
    for path in &paths {
        let (status, schema) = call(&app, "GET", path, None).await;
        assert_eq!(status, StatusCode::OK, "{path}");
        assert!(schema["title"].is_string());
    }
    let (_, view_schema) = call(&app, "GET", "/schema/v1/state_view", None).await;
    let required: Vec<String> = serde_json::from_value(view_schema["required"].clone()).unwrap();
    for field in ["revision", "samples", "stations", "robots", "materials", "open_alerts", "metrics"] {
        assert!(required.iter().any(|r| r == field), "{field}");
    }
    assert_eq!(call(&app, "GET", "/schema/v2/state_view", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/schema/v1/nothing", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn state_json_matches_its_schema_fields() {
    let (app, _) = start();
    call(&app, "POST", "/samples", Some(json!({ "recipe": asset("recipes/solubility.yaml") }))).await;
    let (_, raw) = call(&app, "GET", "/state", None).await;
    let (_, schema) = call(&app, "GET", "/schema/v1/state_view", None).await;
    let props: Vec<&String> = schema["properties"].as_object().unwrap().keys().collect();
    let fields: Vec<&String> = raw.as_object().unwrap().keys().collect();
    assert_eq!(props.len(), fields.len());
    assert!(fields.iter().all(|f| props.contains(f)));
}

#[tokio::test(flavor = "multi_thread")]
async fn halt_alert_blocks_until_acknowledged() {
    let (app, _) = start_with(&asset("lab.yaml").replace("quantity: \"500 mL\"", "quantity: \"11 mL\""));
    call(&app, "POST", "/samples", Some(json!({ "recipe": asset("recipes/solubility.yaml") }))).await;
    let halted = wait_until(&app, |v| v.control.halted).await;
    let alert = &halted.open_alerts[0];
    assert_eq!((alert.rule.as_str(), alert.severity.as_str()), ("water_low", "halt"));

    tokio::time::sleep(Duration::from_millis(100)).await;
    let still = state(&app).await;
    assert_eq!(still.metrics.completed, 0);
    let (status, _) = call(&app, "POST", "/samples", Some(json!({ "recipe": asset("recipes/solubility.yaml") }))).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, _) = call(&app, "POST", &format!("/alerts/{}/ack", alert.id), None).await;
    assert_eq!(status, StatusCode::OK);
    let done = wait_until(&app, |v| v.metrics.completed == 1).await;
    assert!(done.open_alerts.is_empty());
}
