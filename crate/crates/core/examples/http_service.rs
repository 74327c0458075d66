//! Drive the HTTP service in process: create a session, run a meta-query,
//! post an edit and read the metrics.

use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use textanchor::api::{router, AppState};
use textanchor::llm::{MockEntry, MockProvider};

async fn call(app: &axum::Router, method: &str, uri: &str, body: Value) -> Value {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(if body.is_null() { Body::empty() } else { Body::from(body.to_string()) })
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let out: Value = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();
    println!("{method} {uri} -> {status}");
    out
}

#[tokio::main]
async fn main() {
    let proposals = json!([{"anchor_text": "always burnt", "comment": "Present tense; the rest of the essay is past."}]);
    let provider = MockProvider::new(vec![MockEntry::any(proposals.to_string())]);
    let app = router(Arc::new(AppState::new(Arc::new(provider))));

    let text = "My grandmother bakes bread. It is always burnt.";
    let created = call(&app, "POST", "/sessions", json!({"text": text})).await;
    let id = created["session_id"].as_str().unwrap().to_owned();

    let result = call(&app, "POST", &format!("/sessions/{id}/meta-queries"), json!({"query": "find tense errors"})).await;
    println!("  thread {} at {}", result["threads"][0]["thread_id"], result["threads"][0]["anchor"]["span"]);

    let at = text.find("is always").unwrap();
    let edit = json!({"kind": "replace", "at": {"start": at, "end": at + 2}, "text": "was"});
    let out = call(&app, "POST", &format!("/sessions/{id}/edits"), json!({"base_version": 0, "edits": [edit]})).await;
    println!("  {}", out["anchor_statuses"]);

    let metrics = call(&app, "GET", &format!("/sessions/{id}/metrics"), Value::Null).await;
    println!("  {metrics}");
}
