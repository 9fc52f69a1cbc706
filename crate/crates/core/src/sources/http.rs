//! Generic HTTP search adapter.

use std::sync::Arc;

use async_trait::async_trait;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use url::Url;

use super::{KnowledgeSource, SourceError, SourceHealth, SourceProfile};
use crate::claims::{AliasTable, Claim, ClaimValue, Extractor};
use crate::evidence::{aggregate_hits, Evidence, Hit, DEFAULT_STANCE_MARGIN};
use crate::text::covers_terms;

/// One search result as returned by the endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpHit {
    pub snippet: String,
    pub value: String,
    pub value_type: String,
    pub authority: f64,
    #[serde(default)]
    pub published: Option<NaiveDate>,
    #[serde(default)]
    pub citations: u64,
}

/// Issues `GET <endpoint>?q=<query>&k=<max_results>` and aggregates the hit
/// list the same way the corpus source does.
pub struct HttpSource {
    profile: SourceProfile,
    endpoint: Url,
    client: reqwest::Client,
    extractor: Arc<dyn Extractor>,
    aliases: Arc<AliasTable>,
    stance_margin: f64,
}

impl HttpSource {
    pub fn new(
        profile: SourceProfile,
        endpoint: Url,
        extractor: Arc<dyn Extractor>,
        aliases: Arc<AliasTable>,
    ) -> Self {
        let client = reqwest::Client::builder()
            .timeout(profile.timeout)
            .build()
            .expect("default HTTP client");
        Self { profile, endpoint, client, extractor, aliases, stance_margin: DEFAULT_STANCE_MARGIN }
    }

    pub fn with_stance_margin(mut self, margin: f64) -> Self {
        self.stance_margin = margin;
        self
    }

    pub fn endpoint(&self) -> &Url {
        &self.endpoint
    }

    fn unavailable(&self, reason: impl Into<String>) -> SourceError {
        SourceError::Unavailable { source_id: self.profile.source_id.clone(), reason: reason.into() }
    }

    fn map_err(&self, e: reqwest::Error) -> SourceError {
        if e.is_timeout() {
            SourceError::Timeout { source_id: self.profile.source_id.clone(), after: self.profile.timeout }
        } else {
            self.unavailable(e.to_string())
        }
    }

    pub async fn fetch(&self, query: &str) -> Result<Vec<HttpHit>, SourceError> {
        let resp = self
            .client
            .get(self.endpoint.clone())
            .query(&[("q", query), ("k", &self.profile.max_results.to_string())])
            .send()
            .await
            .map_err(|e| self.map_err(e))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(self.unavailable(format!("HTTP {status}")));
        }
        let body = resp.bytes().await.map_err(|e| self.map_err(e))?;
        serde_json::from_slice(&body).map_err(|e| self.unavailable(format!("malformed body: {e}")))
    }

    /// Turn a hit list into evidence. A hit counts when its value has the
    /// claim's type and its snippet speaks about the same subject and
    /// relation.
    pub fn evidence_from_hits(&self, claim: &Claim, hits: &[HttpHit]) -> Evidence {
        if !claim.subject.is_linked() {
            return Evidence::insufficient(&self.profile.source_id, &claim.id, self.profile.base_reliability);
        }
        let subject = claim.subject.lookup_key();
        let kind = claim.object.kind();
        let converted: Vec<Hit> = hits
            .iter()
            .take(self.profile.max_results)
            .map(|h| {
                let value = ClaimValue::parse_typed(&h.value_type, &h.value, &self.aliases)
                    .ok()
                    .filter(|v| v.kind() == kind)
                    .filter(|_| self.relevant(claim, &subject, &h.snippet));
                Hit {
                    values: value.into_iter().map(|v| (v, None)).collect(),
                    authority: h.authority,
                    published: h.published,
                    citations: h.citations,
                    snippet: h.snippet.clone(),
                }
            })
            .collect();
        let citation_max = hits.iter().map(|h| h.citations).max().unwrap_or(0);
        aggregate_hits(
            claim,
            &self.profile.source_id,
            self.profile.base_reliability,
            &converted,
            citation_max,
            self.stance_margin,
        )
    }

    fn relevant(&self, claim: &Claim, subject: &str, snippet: &str) -> bool {
        let found = self.extractor.extract(snippet);
        let matched = found.iter().any(|c| {
            c.subject.lookup_key() == subject
                && c.predicate == claim.predicate
                && claim.complement_text().is_none_or(|t| covers_terms(&c.raw_text, t))
        });
        // Snippets the grammar cannot parse about this subject fall back to
        // term coverage.
        matched
            || (found.iter().all(|c| c.subject.lookup_key() != subject)
                && covers_terms(snippet, &claim.query_text()))
    }
}

#[async_trait]
impl KnowledgeSource for HttpSource {
    fn profile(&self) -> &SourceProfile {
        &self.profile
    }

    async fn query(&self, claim: &Claim) -> Result<Evidence, SourceError> {
        if !claim.subject.is_linked() {
            return Ok(Evidence::insufficient(&self.profile.source_id, &claim.id, self.profile.base_reliability));
        }
        let hits = self.fetch(&claim.query_text()).await?;
        Ok(self.evidence_from_hits(claim, &hits))
    }

    async fn health(&self) -> SourceHealth {
        match self.fetch("").await {
            Ok(_) => SourceHealth::Healthy,
            Err(e) => SourceHealth::Degraded { reason: e.to_string() },
        }
    }
}
