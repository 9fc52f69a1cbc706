use std::path::PathBuf;

use factguard_core::pipeline::Config;
use factguard_service::{AppState, LocalServer};
use serde_json::{json, Value};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

async fn start(config: Config, path: Option<PathBuf>) -> LocalServer {
    LocalServer::start(AppState::new(config, path).await.unwrap()).await.unwrap()
}

async fn einstein_server() -> LocalServer {
    let path = fixture("einstein/config.toml");
    start(Config::load(&path).unwrap(), Some(path)).await
}

#[tokio::test]
async fn verify_round_trip() {
    let server = einstein_server().await;
    let resp = reqwest::Client::new()
        .post(server.url("/verify"))
        .json(&json!({ "text": "Einstein published relativity in 1920", "context": { "request": 7 } }))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
    assert_eq!(resp.headers()["content-type"], "application/json");
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["original_text"], "Einstein published relativity in 1920");
    assert_eq!(body["corrections"][0]["strategy"], "SUBSTITUTE");
    assert_eq!(body["context"]["request"], 7);
    let text = body["final_text"].as_str().unwrap();
    assert!(text.contains("1905") && text.contains("1915"));
}

#[tokio::test]
async fn malformed_bodies_get_an_error_envelope() {
    let server = einstein_server().await;
    let client = reqwest::Client::new();
    for body in ["{not json", "{\"txt\": \"hi\"}", "[]"] {
        let resp = client
            .post(server.url("/verify"))
            .header("content-type", "application/json")
            .body(body)
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), 400, "{body}");
        let v: Value = resp.json().await.unwrap();
        assert_eq!(v["error"]["code"], "invalid_request");
        assert!(v["error"]["message"].as_str().is_some_and(|m| !m.is_empty()));
    }
}

#[tokio::test]
async fn health_lists_unreachable_sources() {
    let mut cfg = Config::load(&fixture("einstein/config.toml")).unwrap();
    cfg.sources[1].backend = "http".into();
    cfg.sources[1].endpoint = Some("http://127.0.0.1:9/search".into());
    let server = start(cfg, None).await;
    let v: Value = reqwest::get(server.url("/health")).await.unwrap().json().await.unwrap();
    assert_eq!(v["status"], "degraded");
    assert_eq!(v["degraded_sources"], json!(["web"]));
    assert_eq!(v["sources"]["kg"]["status"], "healthy");
    assert_eq!(v["sources"]["web"]["status"], "degraded");

    let healthy = einstein_server().await;
    let v: Value = reqwest::get(healthy.url("/health")).await.unwrap().json().await.unwrap();
    assert_eq!(v["status"], "ok");
}

#[tokio::test]
async fn config_endpoint_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    for f in ["aliases.tsv", "kg.tsv", "vocab.txt", "web.json", "db.jsonl", "config.toml"] {
        std::fs::copy(fixture("einstein").join(f), dir.path().join(f)).unwrap();
    }
    let path = dir.path().join("config.toml");
    let server = start(Config::load(&path).unwrap(), Some(path.clone())).await;
    let client = reqwest::Client::new();

    let v: Value = reqwest::get(server.url("/config")).await.unwrap().json().await.unwrap();
    assert_eq!(v["pipeline"]["tau_confidence"], 0.7);
    assert_eq!(v["sources"].as_array().unwrap().len(), 3);

    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replace("report_timings = false", "report_timings = false\nenabled_sources = [\"kg\"]")).unwrap();
    let resp = client.post(server.url("/admin/reload")).send().await.unwrap();
    assert_eq!(resp.status(), 200);
    let v: Value = resp.json().await.unwrap();
    assert_eq!(v["enabled_sources"], json!(["kg"]));
    assert_eq!(server.state.pipeline().sources().len(), 1);

    std::fs::write(&path, text.replace("tau_confidence = 0.7", "tau_confidence = 1.7")).unwrap();
    let resp = client.post(server.url("/admin/reload")).send().await.unwrap();
    assert_eq!(resp.status(), 400);
    let v: Value = resp.json().await.unwrap();
    assert_eq!(v["error"]["code"], "config_invalid");
    assert!(v["error"]["message"].as_str().unwrap().contains("pipeline.tau_confidence"));
    // The previous pipeline keeps serving.
    assert_eq!(server.state.pipeline().sources().len(), 1);
}

#[tokio::test]
async fn shutdown_lets_in_flight_requests_finish() {
    let mut cfg = Config::load(&fixture("einstein/config.toml")).unwrap();
    cfg.sources[1].delay_ms = 300;
    let server = start(cfg, None).await;
    let url = server.url("/verify");
    let pending = tokio::spawn(async move {
        reqwest::Client::new().post(url).json(&json!({ "text": "Einstein was born in 1879." })).send().await
    });
    tokio::time::sleep(std::time::Duration::from_millis(100)).await;
    server.shutdown().await;
    let resp = pending.await.unwrap().unwrap();
    assert_eq!(resp.status(), 200);
}
