#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use eventsift_core::bgnn::{ModelConfig, TrainConfig};
use eventsift_core::corpus::ManifestRecord;
use eventsift_core::session::SessionConfig;
use eventsift_core::synthetic::{generate, SyntheticConfig, SyntheticData};
use eventsift_service::{router, AppState, ServerConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

pub fn small_data(seed: u64) -> SyntheticData {
    generate(
        &SyntheticConfig {
            train: 120,
            test: 40,
            pool_size: 100,
            same_type_pool: 10,
            ..SyntheticConfig::default()
        },
        seed,
    )
}

pub fn fast_config() -> SessionConfig {
    SessionConfig {
        budget_schedule: vec![6, 4, 4],
        k: 8,
        n_clusters: 4,
        min_cluster_size: 4,
        pseudo_per_cluster: 4,
        train: TrainConfig {
            model: ModelConfig {
                hidden1: 8,
                hidden2: 8,
                ..ModelConfig::default()
            },
            epochs: 15,
            learning_rate: 1e-2,
            mc_samples: 4,
            ..TrainConfig::default()
        },
        ..SessionConfig::default()
    }
}

pub fn inline_body(seed: u64) -> Value {
    let data = small_data(seed);
    let records = |posts: &[eventsift_core::Post]| -> Vec<ManifestRecord> {
        posts.iter().map(ManifestRecord::from).collect()
    };
    json!({
        "posts": records(&data.event_posts),
        "pool": records(&data.pool),
        "config": fast_config(),
        "seed": seed,
    })
}

pub fn app(config: ServerConfig) -> (Arc<AppState>, Router) {
    let state = Arc::new(AppState::new(config));
    (state.clone(), router(state))
}

pub async fn send(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    send(app, "GET", uri, None).await
}

pub async fn post_json(app: &Router, uri: &str, body: &Value) -> (StatusCode, Value) {
    send(app, "POST", uri, Some(body.to_string())).await
}

/// Polls status until the session leaves the training phases.
pub async fn wait_idle(app: &Router, id: &str) -> Value {
    for _ in 0..600 {
        let (status, body) = get(app, &format!("/sessions/{id}/status")).await;
        assert_eq!(status, StatusCode::OK);
        let phase = body["phase"].as_str().unwrap().to_string();
        if phase == "AwaitingAnnotation" || phase == "Completed" {
            return body;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("session {id} never finished training");
}

/// Gold labels of the synthetic corpus, keyed by id.
pub fn gold(seed: u64) -> std::collections::BTreeMap<String, String> {
    small_data(seed)
        .event_posts
        .iter()
        .map(|p| (p.id.clone(), p.gold_label.unwrap().to_string()))
        .collect()
}

pub fn labels_for(ids: &[String], gold: &std::collections::BTreeMap<String, String>) -> Value {
    json!({
        "labels": ids.iter().map(|id| json!({"id": id, "label": gold[id]})).collect::<Vec<_>>()
    })
}

pub fn queue_ids(queue: &Value) -> Vec<String> {
    queue["items"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["id"].as_str().unwrap().to_string())
        .collect()
}
