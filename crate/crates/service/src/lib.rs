//! HTTP front end for the verification pipeline.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use factguard_core::pipeline::{Config, ConfigError, Pipeline, VerifyRequest};
use factguard_core::sources::SourceHealth;
use futures::future::join_all;
use parking_lot::RwLock;
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::Semaphore;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("binding {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("server: {0}")]
    Serve(std::io::Error),
}

struct Loaded {
    config: Config,
    pipeline: Arc<Pipeline>,
}

/// Shared state: the live pipeline is swapped wholesale on reload, so
/// in-flight requests finish on the instance they started with.
pub struct AppState {
    loaded: RwLock<Arc<Loaded>>,
    config_path: Option<PathBuf>,
    limiter: Semaphore,
}

impl AppState {
    pub async fn new(config: Config, config_path: Option<PathBuf>) -> Result<Arc<Self>, ServiceError> {
        let pipeline = Arc::new(config.build().await?);
        let limiter = Semaphore::new(config.service.max_concurrent_requests);
        Ok(Arc::new(Self { loaded: RwLock::new(Arc::new(Loaded { config, pipeline })), config_path, limiter }))
    }

    pub fn pipeline(&self) -> Arc<Pipeline> {
        self.loaded.read().pipeline.clone()
    }

    pub fn config(&self) -> Config {
        self.loaded.read().config.clone()
    }

    /// Re-read the config file and replace the pipeline. The old pipeline
    /// stays in service if anything fails.
    pub async fn reload(&self) -> Result<Config, ServiceError> {
        let config = match &self.config_path {
            Some(path) => Config::load(path)?,
            None => self.config(),
        };
        let pipeline = Arc::new(config.build().await?);
        *self.loaded.write() = Arc::new(Loaded { config: config.clone(), pipeline });
        Ok(config)
    }
}

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": { "code": code, "message": message.into() } }))).into_response()
}

fn json_text(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn verify(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let request: VerifyRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()),
    };
    let Ok(_permit) = state.limiter.acquire().await else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "shutting_down", "service is shutting down");
    };
    let pipeline = state.pipeline();
    match pipeline.verify(&request).await {
        Ok(resp) => json_text(resp.to_json()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "pipeline_error", e.to_string()),
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    let pipeline = state.pipeline();
    let checks = join_all(pipeline.sources().iter().map(|s| async move {
        let id = s.profile().source_id.clone();
        (id, s.health().await)
    }))
    .await;
    let degraded: Vec<&str> = checks
        .iter()
        .filter(|(_, h)| *h != SourceHealth::Healthy)
        .map(|(id, _)| id.as_str())
        .collect();
    let sources: serde_json::Map<String, serde_json::Value> = checks
        .iter()
        .map(|(id, h)| (id.clone(), serde_json::to_value(h).unwrap_or_default()))
        .collect();
    let status = if degraded.is_empty() { "ok" } else { "degraded" };
    Json(json!({ "status": status, "degraded_sources": degraded, "sources": sources })).into_response()
}

async fn config(State(state): State<Arc<AppState>>) -> Response {
    Json(state.config()).into_response()
}

async fn reload(State(state): State<Arc<AppState>>) -> Response {
    match state.reload().await {
        Ok(cfg) => Json(json!({ "reloaded": true, "enabled_sources": cfg.enabled_source_ids() })).into_response(),
        Err(ServiceError::Config(e)) => error(StatusCode::BAD_REQUEST, "config_invalid", e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "reload_failed", e.to_string()),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/verify", post(verify))
        .route("/health", get(health))
        .route("/config", get(config))
        .route("/admin/reload", post(reload))
        .with_state(state)
}

/// Bind `addr` and serve until `shutdown` resolves, letting in-flight
/// requests finish.
pub async fn serve<F>(state: Arc<AppState>, addr: &str, shutdown: F) -> Result<(), ServiceError>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    let listener = TcpListener::bind(addr).await.map_err(|source| ServiceError::Bind { addr: addr.into(), source })?;
    tracing::info!(addr = %listener.local_addr().map_err(ServiceError::Serve)?, "listening");
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await.map_err(ServiceError::Serve)
}

/// A server on an ephemeral local port, stopped when dropped.
pub struct LocalServer {
    pub addr: SocketAddr,
    pub state: Arc<AppState>,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    task: Option<tokio::task::JoinHandle<()>>,
}

impl LocalServer {
    pub async fn start(state: Arc<AppState>) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let app = router(state.clone());
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(Self { addr, state, stop: Some(tx), task: Some(task) })
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    /// Stop accepting connections and wait for in-flight requests.
    pub async fn shutdown(mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for LocalServer {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
    }
}
