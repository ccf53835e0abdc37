mod common;

use axum::http::StatusCode;
use common::*;
use eventsift_core::corpus::write_manifest;
use eventsift_service::{AppState, ServerConfig};
use serde_json::json;

#[tokio::test]
async fn create_then_inspect() {
    let (_, app) = app(ServerConfig::default());
    let (status, created) = post_json(&app, "/sessions", &inline_body(1)).await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    assert_eq!(created["schema_version"], 1);
    let id = created["session_id"].as_str().unwrap().to_string();
    assert_eq!(created["phase"], "AwaitingAnnotation");
    assert_eq!(created["summary"]["pending_count"], 6);

    let (status, queue) = get(&app, &format!("/sessions/{id}/queue")).await;
    assert_eq!(status, StatusCode::OK);
    let items = queue["items"].as_array().unwrap();
    assert_eq!(items.len(), 6);
    assert!(items.iter().all(|i| i["score"].is_null()));
    assert!(items.iter().all(|i| i["image_ref"].as_str().unwrap().starts_with("synthetic://")));
    assert!(queue["retry_after_ms"].is_null());

    let (_, preds) = get(&app, &format!("/sessions/{id}/predictions")).await;
    assert_eq!(preds["available"], false);

    let (status, proj) = get(&app, &format!("/sessions/{id}/projection")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(proj["items"].as_array().unwrap().len(), 160);

    let (_, list) = get(&app, "/sessions").await;
    assert_eq!(list["sessions"], json!([id]));
}

#[tokio::test]
async fn error_statuses() {
    let (_, app) = app(ServerConfig::default());
    let (_, created) = post_json(&app, "/sessions", &inline_body(2)).await;
    let id = created["session_id"].as_str().unwrap().to_string();
    let labels_uri = format!("/sessions/{id}/labels");
    let (_, queue) = get(&app, &format!("/sessions/{id}/queue")).await;
    let first = queue_ids(&queue)[0].clone();
    let not_queued = gold(2)
        .keys()
        .find(|k| k.starts_with("tr") && !queue_ids(&queue).contains(k))
        .unwrap()
        .clone();

    for uri in ["/sessions/nope/queue", "/sessions/nope/status", "/sessions/nope/predictions", "/sessions/nope/projection"] {
        let (status, body) = get(&app, uri).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        assert_eq!(body["error"]["code"], "unknown_session");
    }
    let (status, _) = post_json(&app, "/sessions/nope/labels", &json!({"labels": []})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let cases = [
        (json!({"labels": [{"id": "ghost", "label": "informative"}]}), "unknown_post"),
        (json!({"labels": [{"id": not_queued, "label": "informative"}]}), "not_pending"),
        (
            json!({"labels": [{"id": first, "label": "informative"}, {"id": first, "label": "informative"}]}),
            "duplicate_in_batch",
        ),
        (json!({"labels": [{"id": first, "label": "maybe"}]}), "malformed_payload"),
        (json!({"labels": [{"id": first}]}), "malformed_payload"),
        (json!({"oops": 1}), "malformed_payload"),
    ];
    for (body, code) in cases {
        let (status, resp) = post_json(&app, &labels_uri, &body).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
        assert_eq!(resp["error"]["code"], code, "{body}");
    }
    let (status, _) = send(&app, "POST", &labels_uri, Some("{not json".into())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    // Rejected batches leave the queue untouched.
    let (_, after) = get(&app, &format!("/sessions/{id}/queue")).await;
    assert_eq!(queue_ids(&after), queue_ids(&queue));

    let (status, resp) = post_json(&app, "/sessions", &json!({"manifest": "a", "posts": []})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{resp}");
    let (status, _) = post_json(&app, "/sessions", &json!({"manifest": "missing.jsonl"})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn full_loop_over_http() {
    let (_, app) = app(ServerConfig::default());
    let (_, created) = post_json(&app, "/sessions", &inline_body(3)).await;
    let id = created["session_id"].as_str().unwrap().to_string();
    let gold = gold(3);
    let mut labeled: Vec<String> = Vec::new();
    let mut expected_counts = vec![];
    loop {
        let (_, queue) = get(&app, &format!("/sessions/{id}/queue")).await;
        let ids = queue_ids(&queue);
        if ids.is_empty() {
            break;
        }
        assert!(ids.iter().all(|i| !labeled.contains(i)));
        assert!(ids.iter().all(|i| i.starts_with("tr")), "queue holds only event train posts");
        // Two partial submissions.
        let (a, b) = ids.split_at(ids.len() / 2);
        let (status, resp) = post_json(&app, &format!("/sessions/{id}/labels"), &labels_for(a, &gold)).await;
        assert_eq!(status, StatusCode::OK, "{resp}");
        assert_eq!(resp["phase"], "AwaitingAnnotation");
        let (status, resp) = post_json(&app, &format!("/sessions/{id}/labels"), &labels_for(b, &gold)).await;
        assert_eq!(status, StatusCode::OK, "{resp}");
        assert_eq!(resp["accepted"], b.len());
        assert_eq!(resp["phase"], "Training");
        labeled.extend(ids);
        expected_counts.push(labeled.len());

        // Relabeling during or after training conflicts.
        let (status, _) = post_json(&app, &format!("/sessions/{id}/labels"), &labels_for(&labeled[..1], &gold)).await;
        assert_eq!(status, StatusCode::CONFLICT);

        let status = wait_idle(&app, &id).await;
        assert!(status["last_error"].is_null(), "{status}");
    }
    let (_, status) = get(&app, &format!("/sessions/{id}/status")).await;
    assert_eq!(status["phase"], "Completed");
    let history = status["history"].as_array().unwrap();
    let counts: Vec<usize> = history.iter().map(|h| h["labeled_count"].as_u64().unwrap() as usize).collect();
    assert_eq!(counts, expected_counts);
    assert_eq!(counts, [6, 10, 14]);
    for h in history {
        let f1 = h["metrics"]["f1"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&f1));
    }
    let (_, preds) = get(&app, &format!("/sessions/{id}/predictions")).await;
    assert_eq!(preds["available"], true);
    assert_eq!(preds["items"].as_array().unwrap().len(), 160);
    let (_, proj) = get(&app, &format!("/sessions/{id}/projection")).await;
    let tagged = proj["items"].as_array().unwrap().iter().filter(|p| !p["label"].is_null()).count();
    assert_eq!(tagged, 14);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn manifests_resolve_against_data_root_and_sessions_persist() {
    let data = tempfile::tempdir().unwrap();
    let saved = tempfile::tempdir().unwrap();
    let synth = small_data(4);
    write_manifest(&data.path().join("event.jsonl"), &synth.event_posts).unwrap();
    write_manifest(&data.path().join("pool.jsonl"), &synth.pool).unwrap();
    let config = ServerConfig {
        data_root: data.path().to_path_buf(),
        session_dir: Some(saved.path().to_path_buf()),
        ..ServerConfig::default()
    };
    let (_, app1) = app(config.clone());
    let body = json!({
        "manifest": "event.jsonl",
        "pool_manifest": "pool.jsonl",
        "config": fast_config(),
        "seed": 4,
    });
    let (status, created) = post_json(&app1, "/sessions", &body).await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    let id = created["session_id"].as_str().unwrap().to_string();
    assert!(created["summary"]["augmentation_count"].as_u64().unwrap() > 0);
    let (_, queue) = get(&app1, &format!("/sessions/{id}/queue")).await;
    let gold = gold(4);
    post_json(&app1, &format!("/sessions/{id}/labels"), &labels_for(&queue_ids(&queue), &gold)).await;
    let before = wait_idle(&app1, &id).await;
    let (_, queue1) = get(&app1, &format!("/sessions/{id}/queue")).await;

    let state = AppState::new(config);
    assert_eq!(state.load_saved().unwrap(), 1);
    let app2 = eventsift_service::router(std::sync::Arc::new(state));
    let (_, after) = get(&app2, &format!("/sessions/{id}/status")).await;
    assert_eq!(after["iteration"], before["iteration"]);
    assert_eq!(after["history"], before["history"]);
    let (_, queue2) = get(&app2, &format!("/sessions/{id}/queue")).await;
    assert_eq!(queue2["items"], queue1["items"]);

    // New sessions do not reuse a restored id.
    let (_, created) = post_json(&app2, "/sessions", &inline_body(5)).await;
    assert_ne!(created["session_id"].as_str().unwrap(), id);
}
