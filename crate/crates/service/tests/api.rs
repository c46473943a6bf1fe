use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use skumap_core::model::MatchDimension::{Brand, Quantity};
use skumap_core::model::MatchLabel::{Equivalent, NonEquivalent};
use skumap_core::pipeline::Engine;
use skumap_core::provider::{FnChat, HashEmbedder, ProviderError, Providers, StubSearch};
use skumap_core::scenario::{in_memory_engine, stub_providers, stub_script, ScriptedPair};
use skumap_service::{router, ErrorCode};

const BASE: &str = "Coca-Cola Zero Sugar 500ml";
const COMPARED: &str = "Coke Zero 0.5L Bottle";

fn coke(compared: &str, confidence: f64) -> ScriptedPair {
    let mut p = ScriptedPair::agreeing(BASE, compared, NonEquivalent)
        .question(Brand, "Is Coke the same brand as Coca-Cola?", "Yes.")
        .question(Quantity, "Is 0.5L equal to 500ml?", "Yes.");
    p.confidence = confidence;
    p
}

fn engine(pairs: &[ScriptedPair]) -> Arc<Engine> {
    Arc::new(in_memory_engine(stub_providers(&stub_script(pairs))))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

fn code(v: &Value) -> &str {
    v["code"].as_str().unwrap_or_default()
}

#[tokio::test]
async fn fresh_service_reports_zeros() {
    let app = router(engine(&[]), 2);
    let (s, v) = call(&app, "GET", "/v1/stats", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["pairs_processed"], 0);
    assert_eq!(v["dedup_activation_rate"], 0.0);
    assert_eq!(v["avg_questions_per_pair"], 0.0);
}

#[tokio::test]
async fn match_identical_titles() {
    let app = router(engine(&[ScriptedPair::agreeing(BASE, BASE, Equivalent)]), 2);
    let (s, v) = call(&app, "POST", "/v1/match", Some(json!({"base": BASE, "compared": BASE, "mode": "q2k"}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["verdict"]["label"], "Equivalent");
    assert_eq!(v["web_queries_issued"], 0);

    let (s, v) = call(&app, "POST", "/v1/match", Some(json!({"base": BASE, "compared": BASE, "mode": "rule"}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["verdict"]["provenance"], "rule");
}

#[tokio::test]
async fn match_validation_errors() {
    let app = router(engine(&[]), 2);
    let (s, v) = call(&app, "POST", "/v1/match", Some(json!({"base": "a", "compared": "b", "mode": "magic"}))).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "bad_mode"));
    let (s, v) = call(&app, "POST", "/v1/match", Some(json!({"base": "a"}))).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "bad_request"));
    let (s, v) = call(&app, "POST", "/v1/match", Some(json!({"base": " ", "compared": "b", "mode": "rule"}))).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "bad_request"));
    assert!(v["message"].is_string());
}

#[tokio::test]
async fn provider_outage_is_a_bad_gateway() {
    let providers = Providers::new(
        Arc::new(FnChat(|_: &_| Err(ProviderError::Unavailable("connection refused".into())))),
        Arc::new(HashEmbedder::new(16, 1)),
        Arc::new(StubSearch::lenient()),
    );
    let app = router(Arc::new(in_memory_engine(providers)), 2);
    let (s, v) = call(&app, "POST", "/v1/match", Some(json!({"base": "a", "compared": "b", "mode": "q2k"}))).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_GATEWAY, "provider_unavailable"));
}

#[tokio::test]
async fn review_queue_listing() {
    let e = engine(&[coke(COMPARED, 0.4), coke("Coke Zero 500 ml", 0.3)]);
    let app = router(e.clone(), 2);
    let (s, v) = call(&app, "GET", "/v1/review/queue?status=pending", None).await;
    assert_eq!((s, v), (StatusCode::OK, json!([])));

    for c in [COMPARED, "Coke Zero 500 ml"] {
        let (s, _) = call(&app, "POST", "/v1/match", Some(json!({"base": BASE, "compared": c, "mode": "q2k"}))).await;
        assert_eq!(s, StatusCode::OK);
    }
    let (_, v) = call(&app, "GET", "/v1/review/queue?status=pending", None).await;
    let items = v.as_array().unwrap();
    assert_eq!(items.len(), 2);
    assert_eq!(items[0]["result"]["pair"]["compared_title"], COMPARED);
    assert!(items[0]["item_id"].as_u64() < items[1]["item_id"].as_u64());

    let (s, v) = call(&app, "GET", "/v1/review/queue?status=bogus", None).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "bad_status"));
    let (_, v) = call(&app, "GET", "/v1/review/queue", None).await;
    assert_eq!(v.as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn review_decisions() {
    let e = engine(&[coke(COMPARED, 0.4), coke("Coke Zero 500 ml", 0.3)]);
    let app = router(e.clone(), 2);
    for c in [COMPARED, "Coke Zero 500 ml"] {
        call(&app, "POST", "/v1/match", Some(json!({"base": BASE, "compared": c, "mode": "q2k"}))).await;
    }
    let traces_before = e.store().len();
    let (s, v) = call(&app, "POST", "/v1/review/2", Some(json!({"decision": "override"}))).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "missing_label"));
    assert_eq!(e.store().len(), traces_before, "failed request changes nothing");

    let (s, v) = call(&app, "POST", "/v1/review/1", Some(json!({"decision": "approve", "note": "ok"}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["status"], "approved");
    let (s, v) = call(&app, "POST", "/v1/review/1", Some(json!({"decision": "approve"}))).await;
    assert_eq!((s, code(&v)), (StatusCode::CONFLICT, "already_decided"));

    let (s, v) = call(
        &app,
        "POST",
        "/v1/review/2",
        Some(json!({"decision": "override", "corrected_label": "Equivalent", "note": "same SKU"})),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["status"], "overridden");
    assert_eq!(v["corrected_label"], "Equivalent");

    let (s, v) = call(&app, "POST", "/v1/review/77", Some(json!({"decision": "approve"}))).await;
    assert_eq!((s, code(&v)), (StatusCode::NOT_FOUND, "not_found"));
    let (s, v) = call(&app, "POST", "/v1/review/abc", Some(json!({"decision": "approve"}))).await;
    assert_eq!((s, code(&v)), (StatusCode::NOT_FOUND, "not_found"));
    let (s, v) = call(&app, "POST", "/v1/review/2", Some(json!({"decision": "maybe"}))).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "bad_decision"));
    let (_, v) = call(&app, "GET", "/v1/review/queue?status=pending", None).await;
    assert_eq!(v, json!([]));
}

#[tokio::test]
async fn trace_search() {
    let e = engine(&[coke(COMPARED, 0.9)]);
    let app = router(e.clone(), 2);
    let (s, v) = call(&app, "GET", "/v1/traces/search?q=anything&k=5", None).await;
    assert_eq!((s, v), (StatusCode::OK, json!([])));

    call(&app, "POST", "/v1/match", Some(json!({"base": BASE, "compared": COMPARED, "mode": "q2k"}))).await;
    let key = e.store().snapshot()[0].concat_key.clone();
    let uri = format!("/v1/traces/search?q={}&k=5", encode(&key));
    let (s, v) = call(&app, "GET", &uri, None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let hit = &v[0];
    assert_eq!(hit["rank"], 1);
    assert_eq!(hit["concat_key"], key.as_str());
    assert!((hit["similarity"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!(hit.get("embedding").is_none());

    let (s, v) = call(&app, "GET", "/v1/traces/search?q=&k=5", None).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "empty_query"));
    let (s, v) = call(&app, "GET", "/v1/traces/search?q=x&k=0", None).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "bad_k"));
    let (s, v) = call(&app, "GET", "/v1/traces/search?q=x&k=-2", None).await;
    assert_eq!((s, code(&v)), (StatusCode::BAD_REQUEST, "bad_k"));
}

#[tokio::test]
async fn stats_track_reuse() {
    let pairs = [coke(COMPARED, 0.9), coke("Coke Zero 500 ml", 0.9)];
    let app = router(engine(&pairs), 2);
    for p in &pairs {
        call(&app, "POST", "/v1/match", Some(json!({"base": BASE, "compared": p.compared, "mode": "q2k"}))).await;
    }
    let (_, v) = call(&app, "GET", "/v1/stats", None).await;
    assert_eq!(v["pairs_processed"], 2);
    assert_eq!(v["dedup_activated"], 1);
    assert_eq!(v["dedup_activation_rate"], 0.5);
    assert_eq!(v["avg_questions_per_pair"], 2.0);
}

#[tokio::test]
async fn unknown_routes_use_the_error_shape() {
    let app = router(engine(&[]), 1);
    let (s, v) = call(&app, "GET", "/v2/stats", None).await;
    assert_eq!((s, code(&v)), (StatusCode::NOT_FOUND, "not_found"));
}

#[test]
fn error_codes_serialize_to_their_wire_names() {
    let names: Vec<String> = ErrorCode::ALL
        .iter()
        .map(|c| serde_json::to_value(c).unwrap().as_str().unwrap().to_string())
        .collect();
    assert!(names.contains(&"provider_unavailable".to_string()));
    assert!(names.iter().all(|n| n.chars().all(|c| c.is_ascii_lowercase() || c == '_')));
}

fn encode(s: &str) -> String {
    s.bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => (b as char).to_string(),
            _ => format!("%{b:02X}"),
        })
        .collect()
}
