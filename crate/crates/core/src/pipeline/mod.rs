//! End-to-end verification: extraction, evidence fan-out, fusion,
//! confidence gating, correction and one re-verification pass.

mod batch;
mod config;
mod output;

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::future::join_all;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{
    intrinsic_confidence, CalibrationError, ConfidenceBreakdown, IntrinsicInputs, IntrinsicProvider, Weights,
};
use crate::claims::{Claim, Extractor, ExtractorConfig, PatternExtractor, Vocabulary};
use crate::correction::{
    apply_all, generate_correction, select_strategy, Correction, CorrectionConfig, CorrectionError, Strategy,
};
use crate::evidence::Evidence;
use crate::fusion::{assess_claim, evidence_score, ConsistencyReport, FusionConfig, FusionError};
use crate::sources::mock::MockServer;
use crate::sources::{claim_fingerprint, query_source, SourceError, SourceHandle, TtlLruCache};

pub use batch::{percentile, run_batch, BatchError, BatchSummary, LineError};
pub use config::{
    CacheConfig, Config, ConfigError, ConfidenceSection, ExtractorSection, PipelineSection, ServiceConfig,
    SourceConfig, ENV_PREFIX,
};
pub use output::{round_floats, to_canonical_json};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Correction(#[from] CorrectionError),
}

/// Runtime knobs of a pipeline, independent of how sources are built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSettings {
    pub tau_confidence: f64,
    #[serde(with = "crate::sources::duration_ms", rename = "evidence_budget_ms")]
    pub evidence_budget: Duration,
    pub fusion: FusionConfig,
    pub weights: Weights,
    pub intrinsic: IntrinsicProvider,
    pub temperature: Option<f64>,
    pub correction: CorrectionConfig,
    /// When false, timings and latencies are reported as zero so that output
    /// is reproducible byte for byte.
    pub report_timings: bool,
    pub cache: CacheConfig,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            tau_confidence: 0.7,
            evidence_budget: Duration::from_millis(800),
            fusion: FusionConfig::default(),
            weights: Weights::default(),
            intrinsic: IntrinsicProvider::default(),
            temperature: None,
            correction: CorrectionConfig::default(),
            report_timings: true,
            cache: CacheConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyRequest {
    pub text: String,
    /// Opaque caller data echoed back in the response.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<serde_json::Value>,
    /// Per-claim intrinsic confidences keyed by claim id (`c0`, `c1`, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsic_confidences: Option<HashMap<String, f64>>,
    /// Alternative samples of the same response, for sample agreement.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<String>,
}

impl VerifyRequest {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: text.into(), ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Gate {
    Pass,
    Corrected,
    Hedged,
    Attributed,
    RolledBack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimVerdict {
    pub claim: Claim,
    pub evidence: Vec<Evidence>,
    pub report: ConsistencyReport,
    pub confidence: ConfidenceBreakdown,
    pub gate: Gate,
}

/// Outcome of the single re-verification of a corrected response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reverification {
    pub text: String,
    pub e_score: f64,
    pub accepted: bool,
    pub verdicts: Vec<ClaimVerdict>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub extraction_ms: f64,
    pub evidence_ms: f64,
    pub fusion_ms: f64,
    pub correction_ms: f64,
    pub reverify_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiedResponse {
    pub original_text: String,
    pub final_text: String,
    /// Evidence score of the final text.
    pub e_score: f64,
    /// Evidence score of the original text.
    pub initial_e_score: f64,
    pub verdicts: Vec<ClaimVerdict>,
    pub corrections: Vec<Correction>,
    pub rolled_back: bool,
    /// Set when no source could be reached; the text is returned as is.
    pub unverified: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<String>,
    pub degraded_sources: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reverification: Option<Reverification>,
    pub timings: Timings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<serde_json::Value>,
}

impl VerifiedResponse {
    pub fn to_json(&self) -> String {
        to_canonical_json(self)
    }
}

/// Result of one extraction-and-validation pass over a text.
struct Pass {
    claims: Vec<Claim>,
    evidence: Vec<Vec<Evidence>>,
    reports: Vec<ConsistencyReport>,
    confidences: Vec<ConfidenceBreakdown>,
    e_score: f64,
    degraded: BTreeSet<String>,
    all_failed: bool,
    extraction_ms: f64,
    evidence_ms: f64,
    fusion_ms: f64,
}

struct Gathered {
    evidence: Vec<Vec<Evidence>>,
    degraded: BTreeSet<String>,
    all_failed: bool,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

pub struct Pipeline {
    settings: PipelineSettings,
    extractor: Arc<dyn Extractor>,
    vocabulary: Vocabulary,
    sources: Vec<SourceHandle>,
    cache: Option<TtlLruCache<Vec<Evidence>>>,
    _servers: Vec<MockServer>,
}

impl Pipeline {
    /// Build from settings and ready source handles. Fusion weights are taken
    /// from the source profiles unless the settings already name them.
    pub fn new(settings: PipelineSettings, extractor: ExtractorConfig, sources: Vec<SourceHandle>) -> Self {
        let vocabulary = extractor.vocabulary.clone();
        Self::with_extractor(settings, Arc::new(PatternExtractor::new(extractor)), vocabulary, sources)
    }

    pub fn with_extractor(
        mut settings: PipelineSettings,
        extractor: Arc<dyn Extractor>,
        vocabulary: Vocabulary,
        sources: Vec<SourceHandle>,
    ) -> Self {
        for s in &sources {
            let p = s.profile();
            settings.fusion.weights.entry(p.source_id.clone()).or_insert(p.fusion_weight);
        }
        let cache = settings.cache.enabled.then(|| TtlLruCache::new(settings.cache.capacity));
        Self { settings, extractor, vocabulary, sources, cache, _servers: Vec::new() }
    }

    pub(crate) fn keep_servers(&mut self, servers: Vec<MockServer>) {
        self._servers = servers;
    }

    pub fn settings(&self) -> &PipelineSettings {
        &self.settings
    }

    pub fn sources(&self) -> &[SourceHandle] {
        &self.sources
    }

    pub fn extractor(&self) -> &Arc<dyn Extractor> {
        &self.extractor
    }

    /// Query every source for every claim at once under one shared deadline.
    async fn gather(&self, claims: &[Claim]) -> Gathered {
        let deadline = Instant::now() + self.settings.evidence_budget;
        let mut evidence: Vec<Vec<Evidence>> = vec![Vec::new(); claims.len()];
        let mut pending = Vec::new();
        let mut cache_hits = 0usize;
        for (ci, claim) in claims.iter().enumerate() {
            if let Some(cached) = self.cache.as_ref().and_then(|c| c.get(&claim_fingerprint(claim))) {
                evidence[ci] = cached
                    .into_iter()
                    .map(|mut e| {
                        e.claim_id = claim.id.clone();
                        e
                    })
                    .collect();
                cache_hits += 1;
                continue;
            }
            for source in &self.sources {
                pending.push(async move { (ci, query_source(claim, source.as_ref(), Some(deadline)).await) });
            }
        }
        let mut degraded = BTreeSet::new();
        let mut claim_degraded = vec![false; claims.len()];
        let mut answered = 0usize;
        for (ci, result) in join_all(pending).await {
            match result {
                Ok(ev) => {
                    answered += 1;
                    evidence[ci].push(ev);
                }
                Err(SourceError::Timeout { source_id, after }) => {
                    let mut ev = Evidence::insufficient(&source_id, &claims[ci].id, 0.0);
                    if let Some(p) = self.sources.iter().find(|s| s.profile().source_id == source_id) {
                        ev.reliability = p.profile().base_reliability;
                    }
                    ev.latency_ms = ms(after);
                    evidence[ci].push(ev);
                    degraded.insert(source_id);
                    claim_degraded[ci] = true;
                }
                Err(SourceError::Unavailable { source_id, .. }) => {
                    degraded.insert(source_id);
                    claim_degraded[ci] = true;
                }
            }
        }
        if let Some(cache) = &self.cache {
            for (ci, claim) in claims.iter().enumerate() {
                if !claim_degraded[ci] && !evidence[ci].is_empty() {
                    cache.put(&claim_fingerprint(claim), evidence[ci].clone(), self.settings.cache.ttl());
                }
            }
        }
        let all_failed = !claims.is_empty() && answered == 0 && cache_hits == 0;
        Gathered { evidence, degraded, all_failed }
    }

    async fn run_pass(&self, text: &str, request: &VerifyRequest) -> Result<Pass, PipelineError> {
        let t = Instant::now();
        let claims = self.extractor.extract(text);
        let extraction_ms = ms(t.elapsed());

        let t = Instant::now();
        let gathered = self.gather(&claims).await;
        let evidence_ms = ms(t.elapsed());

        let t = Instant::now();
        let samples: Vec<Vec<Claim>> = request.samples.iter().map(|s| self.extractor.extract(s)).collect();
        let inputs = IntrinsicInputs { supplied: request.intrinsic_confidences.as_ref(), samples: &samples };
        let mut reports = Vec::with_capacity(claims.len());
        let mut confidences = Vec::with_capacity(claims.len());
        for (claim, ev) in claims.iter().zip(&gathered.evidence) {
            let report = assess_claim(claim, ev, &self.settings.fusion)?;
            let intrinsic = intrinsic_confidence(claim, &self.settings.intrinsic, inputs);
            confidences.push(ConfidenceBreakdown::build(
                claim,
                intrinsic,
                &report,
                ev,
                &self.settings.weights,
                self.settings.temperature,
            )?);
            reports.push(report);
        }
        let e_score = evidence_score(&reports);
        Ok(Pass {
            claims,
            evidence: gathered.evidence,
            reports,
            confidences,
            e_score,
            degraded: gathered.degraded,
            all_failed: gathered.all_failed,
            extraction_ms,
            evidence_ms,
            fusion_ms: ms(t.elapsed()),
        })
    }

    fn passes(&self, confidence: &ConfidenceBreakdown) -> bool {
        confidence.gate_value() > self.settings.tau_confidence
    }

    pub async fn verify(&self, request: &VerifyRequest) -> Result<VerifiedResponse, PipelineError> {
        let started = Instant::now();
        let text = request.text.as_str();
        let first = self.run_pass(text, request).await?;

        if first.all_failed {
            let mut resp = VerifiedResponse {
                original_text: text.to_string(),
                final_text: text.to_string(),
                e_score: 0.0,
                initial_e_score: 0.0,
                verdicts: Vec::new(),
                corrections: Vec::new(),
                rolled_back: false,
                unverified: true,
                annotation: Some("no knowledge source was available; text not verified".into()),
                degraded_sources: first.degraded.into_iter().collect(),
                reverification: None,
                timings: Timings {
                    extraction_ms: first.extraction_ms,
                    evidence_ms: first.evidence_ms,
                    total_ms: ms(started.elapsed()),
                    ..Default::default()
                },
                context: request.context.clone(),
            };
            self.scrub(&mut resp);
            return Ok(resp);
        }

        let t = Instant::now();
        let mut gates = Vec::with_capacity(first.claims.len());
        let mut corrections = Vec::new();
        for ((claim, report), confidence) in first.claims.iter().zip(&first.reports).zip(&first.confidences) {
            if self.passes(confidence) {
                gates.push(Gate::Pass);
                continue;
            }
            let multi = self.vocabulary.is_multi_valued(&claim.predicate);
            let plan = select_strategy(
                claim,
                report,
                confidence,
                self.settings.tau_confidence,
                multi,
                &self.settings.correction,
            )?;
            gates.push(match plan.strategy {
                Strategy::Substitute => Gate::Corrected,
                Strategy::Hedge => Gate::Hedged,
                Strategy::Attribute => Gate::Attributed,
            });
            corrections.push(generate_correction(claim, report, &plan, &self.settings.correction));
        }
        let corrected = apply_all(text, &corrections)?;
        let correction_ms = ms(t.elapsed());

        let mut degraded = first.degraded.clone();
        let mut reverification = None;
        let mut rolled_back = false;
        let mut final_text = text.to_string();
        let mut e_score = first.e_score;
        let t = Instant::now();
        if !corrections.is_empty() {
            let second = self.run_pass(&corrected, request).await?;
            degraded.extend(second.degraded.iter().cloned());
            let accepted = !second.all_failed && second.e_score >= first.e_score;
            if accepted {
                final_text = corrected.clone();
                e_score = second.e_score;
            } else {
                rolled_back = true;
                for g in gates.iter_mut().filter(|g| **g != Gate::Pass) {
                    *g = Gate::RolledBack;
                }
            }
            let second_gates: Vec<Gate> = second
                .confidences
                .iter()
                .map(|c| if self.passes(c) { Gate::Pass } else { Gate::RolledBack })
                .collect();
            reverification = Some(Reverification {
                text: corrected,
                e_score: second.e_score,
                accepted,
                verdicts: Self::verdicts(second.claims, second.evidence, second.reports, second.confidences, second_gates),
            });
        }
        let reverify_ms = ms(t.elapsed());

        let mut resp = VerifiedResponse {
            original_text: text.to_string(),
            final_text,
            e_score,
            initial_e_score: first.e_score,
            verdicts: Self::verdicts(first.claims, first.evidence, first.reports, first.confidences, gates),
            corrections,
            rolled_back,
            unverified: false,
            annotation: rolled_back
                .then(|| "low confidence: corrections lowered the evidence score and were withdrawn".to_string()),
            degraded_sources: degraded.into_iter().collect(),
            reverification,
            timings: Timings {
                extraction_ms: first.extraction_ms,
                evidence_ms: first.evidence_ms,
                fusion_ms: first.fusion_ms,
                correction_ms,
                reverify_ms,
                total_ms: ms(started.elapsed()),
            },
            context: request.context.clone(),
        };
        self.scrub(&mut resp);
        Ok(resp)
    }

    fn verdicts(
        claims: Vec<Claim>,
        evidence: Vec<Vec<Evidence>>,
        reports: Vec<ConsistencyReport>,
        confidences: Vec<ConfidenceBreakdown>,
        gates: Vec<Gate>,
    ) -> Vec<ClaimVerdict> {
        claims
            .into_iter()
            .zip(evidence)
            .zip(reports)
            .zip(confidences)
            .zip(gates)
            .map(|((((claim, evidence), report), confidence), gate)| ClaimVerdict {
                claim,
                evidence,
                report,
                confidence,
                gate,
            })
            .collect()
    }

    /// Zero out wall-clock measurements when timings are not wanted.
    fn scrub(&self, resp: &mut VerifiedResponse) {
        if self.settings.report_timings {
            return;
        }
        resp.timings = Timings::default();
        let rev = resp.reverification.iter_mut().flat_map(|r| r.verdicts.iter_mut());
        for v in resp.verdicts.iter_mut().chain(rev) {
            for e in &mut v.evidence {
                e.latency_ms = 0.0;
            }
        }
    }
}
