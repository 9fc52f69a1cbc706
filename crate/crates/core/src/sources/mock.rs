//! In-process search server replaying fixture hits, for tests and demos.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use parking_lot::RwLock;
use serde::Deserialize;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use super::HttpHit;
use crate::text::covers_terms;

#[derive(Debug, Clone)]
pub struct MockBehavior {
    pub delay: Duration,
    pub status: u16,
    pub malformed: bool,
}

impl Default for MockBehavior {
    fn default() -> Self {
        Self { delay: Duration::ZERO, status: 200, malformed: false }
    }
}

struct MockState {
    hits: Vec<HttpHit>,
    behavior: RwLock<MockBehavior>,
}

#[derive(Deserialize)]
struct SearchParams {
    #[serde(default)]
    q: String,
    #[serde(default)]
    k: Option<usize>,
}

async fn search(State(state): State<Arc<MockState>>, Query(p): Query<SearchParams>) -> Response {
    let behavior = state.behavior.read().clone();
    if !behavior.delay.is_zero() {
        tokio::time::sleep(behavior.delay).await;
    }
    let status = StatusCode::from_u16(behavior.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    if !status.is_success() {
        return (status, "unavailable").into_response();
    }
    if behavior.malformed {
        return (StatusCode::OK, "{not json").into_response();
    }
    let k = p.k.unwrap_or(10);
    let hits: Vec<&HttpHit> = state.hits.iter().filter(|h| covers_terms(&h.snippet, &p.q)).take(k).collect();
    axum::Json(hits).into_response()
}

/// Read a fixture: a JSON array of hits.
pub fn load_fixture(path: &Path) -> Result<Vec<HttpHit>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn router(hits: Vec<HttpHit>, behavior: MockBehavior) -> (Router, MockControl) {
    let state = Arc::new(MockState { hits, behavior: RwLock::new(behavior) });
    let router = Router::new().route("/search", get(search)).with_state(state.clone());
    (router, MockControl { state })
}

/// Adjusts a running server's behavior.
#[derive(Clone)]
pub struct MockControl {
    state: Arc<MockState>,
}

impl MockControl {
    pub fn set_delay(&self, delay: Duration) {
        self.state.behavior.write().delay = delay;
    }

    pub fn set_status(&self, status: u16) {
        self.state.behavior.write().status = status;
    }

    pub fn set_malformed(&self, malformed: bool) {
        self.state.behavior.write().malformed = malformed;
    }
}

/// A running mock server. Dropping it stops the server.
pub struct MockServer {
    pub addr: SocketAddr,
    pub control: MockControl,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Bind to `bind` (port 0 picks a free port) and serve in the background.
    pub async fn spawn(hits: Vec<HttpHit>, behavior: MockBehavior, bind: SocketAddr) -> std::io::Result<Self> {
        let listener = tokio::net::TcpListener::bind(bind).await?;
        let addr = listener.local_addr()?;
        let (router, control) = router(hits, behavior);
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, router)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(Self { addr, control, shutdown: Some(tx), task: Some(task) })
    }

    pub async fn spawn_local(hits: Vec<HttpHit>, behavior: MockBehavior) -> std::io::Result<Self> {
        Self::spawn(hits, behavior, SocketAddr::from(([127, 0, 0, 1], 0))).await
    }

    pub fn url(&self) -> String {
        format!("http://{}/search", self.addr)
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            task.abort();
        }
    }
}
