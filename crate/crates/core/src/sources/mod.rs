//! Knowledge sources behind one query interface.

mod cache;
mod corpus;
mod http;
pub mod mock;
mod triples;

use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::claims::Claim;
use crate::evidence::Evidence;

pub use cache::{claim_fingerprint, Fingerprint, TtlLruCache};
pub use corpus::{CorpusIndex, CorpusSource, Document, BM25_B, BM25_K1};
pub use http::{HttpHit, HttpSource};
pub use triples::{KgSource, TripleStore, Triple, TripleStoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SourceKind {
    KnowledgeGraph,
    WebSearch,
    DomainDb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceProfile {
    pub source_id: String,
    pub kind: SourceKind,
    pub base_reliability: f64,
    pub fusion_weight: f64,
    #[serde(with = "duration_ms", rename = "timeout_ms")]
    pub timeout: Duration,
    pub max_results: usize,
}

impl SourceProfile {
    pub fn new(source_id: &str, kind: SourceKind, base_reliability: f64, fusion_weight: f64) -> Self {
        Self {
            source_id: source_id.to_string(),
            kind,
            base_reliability,
            fusion_weight,
            timeout: Duration::from_millis(800),
            max_results: 10,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.source_id.is_empty() {
            return Err("source_id: must not be empty".into());
        }
        if !(0.0..=1.0).contains(&self.base_reliability) {
            return Err(format!("base_reliability: {} outside [0,1]", self.base_reliability));
        }
        if !(0.0..=1.0).contains(&self.fusion_weight) {
            return Err(format!("fusion_weight: {} outside [0,1]", self.fusion_weight));
        }
        if self.timeout.is_zero() {
            return Err("timeout_ms: must be positive".into());
        }
        if self.max_results == 0 {
            return Err("max_results: must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SourceError {
    #[error("source {source_id} timed out after {after:?}")]
    Timeout { source_id: String, after: Duration },
    #[error("source {source_id} unavailable: {reason}")]
    Unavailable { source_id: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SourceHealth {
    Healthy,
    Degraded { reason: String },
}

/// A knowledge source. Handles are shared across concurrent requests.
#[async_trait]
pub trait KnowledgeSource: Send + Sync {
    fn profile(&self) -> &SourceProfile;

    /// One evidence record for the claim. Implementations should not apply
    /// their own deadline; [`query_source`] does.
    async fn query(&self, claim: &Claim) -> Result<Evidence, SourceError>;

    async fn health(&self) -> SourceHealth {
        SourceHealth::Healthy
    }
}

pub type SourceHandle = Arc<dyn KnowledgeSource>;

/// Query with the profile timeout, or a tighter deadline if given. Latency is
/// stamped onto the returned evidence.
pub async fn query_source(
    claim: &Claim,
    source: &dyn KnowledgeSource,
    deadline: Option<Instant>,
) -> Result<Evidence, SourceError> {
    let profile = source.profile();
    let started = Instant::now();
    let mut limit = profile.timeout;
    if let Some(d) = deadline {
        limit = limit.min(d.saturating_duration_since(started));
    }
    match tokio::time::timeout(limit, source.query(claim)).await {
        Ok(Ok(mut ev)) => {
            ev.latency_ms = started.elapsed().as_secs_f64() * 1e3;
            Ok(ev)
        }
        Ok(Err(e)) => Err(e),
        Err(_) => Err(SourceError::Timeout { source_id: profile.source_id.clone(), after: limit }),
    }
}

pub(crate) mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}
