mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::Duration;
use common::*;
use http_body_util::BodyExt;
use pillar::evaluation::{cohens_kappa, StanceLabel};
use pillar_annotate::{router, AppState, ManualClock, Store, DAILY_CAP};
use serde_json::{json, Value};
use tower::ServiceExt;

fn tokens() -> BTreeMap<String, String> {
    [("tok-a", A), ("tok-b", B), ("tok-c", C)]
        .into_iter()
        .map(|(t, a)| (t.to_string(), a.to_string()))
        .collect()
}

fn app(users: usize, statements: usize) -> (Router, Arc<ManualClock>) {
    let mut store = Store::in_memory(DAILY_CAP);
    store
        .create_batch("b1", &pairs(users, statements), &pools(users, 4), [A, B], C)
        .unwrap();
    let clock = Arc::new(ManualClock::new(day(10)));
    let state = AppState::new(store, tokens(), clock.clone());
    (router(state, None), clock)
}

async fn call(app: &Router, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

async fn next(app: &Router, token: &str) -> Value {
    let (status, body) = call(app, "GET", "/tasks/next", Some(token), None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    body["task"].clone()
}

async fn label(app: &Router, token: &str, task: &str, label: &str) -> (StatusCode, Value) {
    call(app, "POST", &format!("/tasks/{task}/label"), Some(token), Some(json!({"label": label}))).await
}

#[tokio::test]
async fn full_annotation_round() {
    let (app, _clock) = app(6, 5);
    let names = ["True", "False", "CannotAnswer"];
    let mut first = Vec::new();
    let mut second = Vec::new();
    for i in 0..30 {
        let ta = next(&app, "tok-a").await;
        let tb = next(&app, "tok-b").await;
        assert_eq!(ta["user_id"], tb["user_id"]);
        assert_eq!(ta["statement"]["id"], tb["statement"]["id"]);
        assert_eq!(ta["pool_tweets"].as_array().unwrap().len(), 4);
        let (la, lb) = (names[i % 3], if i % 4 == 0 { names[(i + 1) % 3] } else { names[i % 3] });
        let (s, out) = label(&app, "tok-a", ta["task_id"].as_str().unwrap(), la).await;
        assert_eq!(s, StatusCode::OK, "{out}");
        assert_eq!(out["pair_status"], "pending");
        let (s, out) = label(&app, "tok-b", tb["task_id"].as_str().unwrap(), lb).await;
        assert_eq!(s, StatusCode::OK);
        if la == lb {
            assert_eq!(out["pair_status"], "final");
            assert_eq!(out["final_label"], la);
        } else {
            assert_eq!(out["pair_status"], "adjudication");
        }
        first.push(la.parse::<StanceLabel>().unwrap());
        second.push(lb.parse::<StanceLabel>().unwrap());
    }
    assert_eq!(next(&app, "tok-a").await, Value::Null);

    let (s, body) = call(&app, "GET", "/export", Some("tok-a"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(body["code"], "unfinished");
    assert_eq!(body["pairs"].as_array().unwrap().len(), 8);

    let (s, body) = call(&app, "GET", "/progress", Some("tok-c"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!((body["final_pairs"].as_u64(), body["awaiting_adjudication"].as_u64()), (Some(22), Some(8)));

    // Primaries have nothing to adjudicate; the adjudicator resolves each disagreement.
    let (_, body) = call(&app, "GET", "/adjudication/next", Some("tok-a"), None).await;
    assert_eq!(body["task"], Value::Null);
    let mut resolved = 0;
    loop {
        let (s, body) = call(&app, "GET", "/adjudication/next?annotator=ann_c", Some("tok-c"), None).await;
        assert_eq!(s, StatusCode::OK);
        let task = &body["task"];
        if task.is_null() {
            break;
        }
        assert_eq!(task["role"], "adjudication");
        assert!(task.get("labels").is_none());
        let (s, out) = label(&app, "tok-c", task["task_id"].as_str().unwrap(), "False").await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(out["final_label"], "False");
        resolved += 1;
    }
    assert_eq!(resolved, 8);

    let (s, body) = call(&app, "GET", "/export?batch=b1", Some("tok-a"), None).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    let kappa = cohens_kappa(&first, &second).unwrap();
    assert!((body["kappa"].as_f64().unwrap() - kappa).abs() < 1e-9);
    assert_eq!(body["gold"].as_array().unwrap().len(), 30);
    assert_eq!(body["gold_jsonl"].as_str().unwrap().lines().count(), 30);
    assert_eq!(body["adjudicated"], 8);
}

#[tokio::test]
async fn error_codes() {
    let (app, _clock) = app(2, 2);
    let (s, body) = call(&app, "GET", "/tasks/next", None, None).await;
    assert_eq!((s, body["code"].as_str()), (StatusCode::UNAUTHORIZED, Some("unauthorized")));
    let (s, _) = call(&app, "GET", "/tasks/next", Some("forged"), None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, body) = call(&app, "GET", "/tasks/next?annotator=ann_b", Some("tok-a"), None).await;
    assert_eq!((s, body["code"].as_str()), (StatusCode::FORBIDDEN, Some("wrong_annotator")));

    let task = next(&app, "tok-a").await;
    let id = task["task_id"].as_str().unwrap();
    let (s, body) = label(&app, "tok-b", id, "True").await;
    assert_eq!((s, body["code"].as_str()), (StatusCode::FORBIDDEN, Some("wrong_annotator")));
    let (s, body) = label(&app, "tok-a", id, "Maybe").await;
    assert_eq!((s, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_label")));
    let (s, body) = call(&app, "POST", &format!("/tasks/{id}/label"), Some("tok-a"), Some(json!({"lbl": 1}))).await;
    assert_eq!((s, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_body")));
    let (s, body) = label(&app, "tok-a", "missing", "True").await;
    assert_eq!((s, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
    let (s, _) = label(&app, "tok-a", id, "CannotAnswer").await;
    assert_eq!(s, StatusCode::OK);
    let (s, body) = label(&app, "tok-a", id, "True").await;
    assert_eq!((s, body["code"].as_str()), (StatusCode::CONFLICT, Some("already_labeled")));
    assert!(body["error"].as_str().unwrap().contains(id));

    let (s, body) = call(&app, "GET", "/export?batch=nope", Some("tok-a"), None).await;
    assert_eq!((s, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
}

#[tokio::test]
async fn daily_cap_over_http() {
    let (app, clock) = app(21, 15);
    for i in 0..DAILY_CAP {
        let t = next(&app, "tok-a").await;
        let (s, out) = label(&app, "tok-a", t["task_id"].as_str().unwrap(), "True").await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(out["quota"]["remaining"], DAILY_CAP - i - 1);
        clock.advance(Duration::seconds(30));
    }
    let (s, body) = call(&app, "GET", "/tasks/next", Some("tok-a"), None).await;
    assert_eq!((s, body["code"].as_str()), (StatusCode::TOO_MANY_REQUESTS, Some("daily_cap")));
    assert_eq!(body["resets_at"], "2024-03-11T00:00:00Z");

    clock.set(day(11) - Duration::hours(9));
    let t = next(&app, "tok-a").await;
    let (s, out) = label(&app, "tok-a", t["task_id"].as_str().unwrap(), "True").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(out["quota"]["used"], 1);
}

#[tokio::test]
async fn serves_a_page_at_root() {
    let (app, _) = app(1, 1);
    let (s, body) = call(&app, "GET", "/", None, None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(body.as_str().unwrap().contains("/tasks"));

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<p>bundle</p>").unwrap();
    let clock = Arc::new(ManualClock::new(day(1)));
    let state = AppState::new(Store::in_memory(DAILY_CAP), tokens(), clock);
    let app = router(state, Some(dir.path()));
    let (s, body) = call(&app, "GET", "/", None, None).await;
    assert_eq!((s, body.as_str()), (StatusCode::OK, Some("<p>bundle</p>")));
    let (s, body) = call(&app, "GET", "/progress", Some("tok-b"), None).await;
    assert_eq!((s, body["pairs"].as_u64()), (StatusCode::OK, Some(0)));
}
