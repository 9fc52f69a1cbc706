//! Cross-source consistency, evidence strength, opinion pooling and the
//! response-level evidence score.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::claims::{Claim, ClaimId};
use crate::evidence::{Distribution, Evidence, Stance, DEFAULT_STANCE_MARGIN};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FusionError {
    #[error("source {source_id} has negative fusion weight {weight}")]
    NegativeWeight { source_id: String, weight: f64 },
    #[error("no fusion weight configured for responding source {0}")]
    MissingWeight(String),
    #[error("strength coefficients must be non-negative and sum to 1, got {0:?}")]
    BadCoefficients([f64; 3]),
    #[error("evidence for {got} does not belong to claim {expected}")]
    ClaimMismatch { expected: ClaimId, got: ClaimId },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrengthCoefficients {
    pub authority: f64,
    pub recency: f64,
    pub citations: f64,
}

impl Default for StrengthCoefficients {
    fn default() -> Self {
        Self { authority: 0.5, recency: 0.3, citations: 0.2 }
    }
}

impl StrengthCoefficients {
    pub fn validate(&self) -> Result<(), FusionError> {
        let c = [self.authority, self.recency, self.citations];
        if c.iter().any(|v| !(*v >= 0.0)) || (c.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(FusionError::BadCoefficients(c));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub tau_consistency: f64,
    /// Per-source pool weights; renormalized over responding sources.
    pub weights: BTreeMap<String, f64>,
    pub strength: StrengthCoefficients,
    pub recency_half_life_days: f64,
    /// Date against which evidence age is measured. Defaults to today.
    pub reference_date: Option<NaiveDate>,
    pub stance_margin: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            tau_consistency: 0.5,
            weights: BTreeMap::new(),
            strength: StrengthCoefficients::default(),
            recency_half_life_days: 365.0,
            reference_date: None,
            stance_margin: DEFAULT_STANCE_MARGIN,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.tau_consistency) {
            return Err(format!("tau_consistency: {} outside [0,1]", self.tau_consistency));
        }
        for (id, w) in &self.weights {
            if !(*w >= 0.0) {
                return Err(format!("weights.{id}: {w} is negative"));
            }
        }
        self.strength.validate().map_err(|e| format!("strength: {e}"))?;
        if !(self.recency_half_life_days > 0.0) {
            return Err(format!("recency_half_life_days: {} must be positive", self.recency_half_life_days));
        }
        if !(0.0..1.0).contains(&self.stance_margin) {
            return Err(format!("stance_margin: {} outside [0,1)", self.stance_margin));
        }
        Ok(())
    }

    fn reference(&self) -> NaiveDate {
        self.reference_date.unwrap_or_else(|| chrono::Utc::now().date_naive())
    }
}

/// Per-claim outcome of cross-source validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub claim_id: ClaimId,
    pub consistency: f64,
    pub strength: f64,
    pub fused_posterior: Distribution,
    pub contradiction: bool,
    pub contributing_sources: Vec<String>,
}

/// Linear opinion pool over responding sources. Weights of the responders
/// are renormalized to sum to one; if they are all zero, or nobody
/// responded, the result is empty.
pub fn fuse_posterior(
    evidence: &[Evidence],
    weights: &BTreeMap<String, f64>,
) -> Result<Distribution, FusionError> {
    let mut responders = Vec::new();
    for ev in evidence.iter().filter(|e| e.responded()) {
        let w = *weights
            .get(&ev.source_id)
            .ok_or_else(|| FusionError::MissingWeight(ev.source_id.clone()))?;
        if w < 0.0 || w.is_nan() {
            return Err(FusionError::NegativeWeight { source_id: ev.source_id.clone(), weight: w });
        }
        responders.push((ev, w));
    }
    let total: f64 = responders.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Ok(Distribution::empty());
    }
    Ok(Distribution::from_weights(responders.iter().flat_map(|(ev, w)| {
        let share = w / total;
        ev.value_distribution
            .iter()
            .map(move |m| (m.value.clone(), share * m.probability, m.label.clone()))
    })))
}

/// Reliability-weighted share of responding sources that support the claim.
/// Neutral 0.5 when nobody (with non-zero reliability) responded.
pub fn check_consistency(evidence: &[Evidence]) -> f64 {
    let (mut support, mut total) = (0.0, 0.0);
    for ev in evidence.iter().filter(|e| e.responded()) {
        total += ev.reliability;
        if ev.stance == Stance::Supports {
            support += ev.reliability;
        }
    }
    // Zero-reliability responders carry no vote.
    if total > 0.0 {
        support / total
    } else {
        0.5
    }
}

/// `0.5^(age / half_life)`; undated evidence counts as current, future
/// dates are clamped to age zero.
pub fn recency_score(published: Option<NaiveDate>, reference: NaiveDate, half_life_days: f64) -> f64 {
    match published {
        None => 1.0,
        Some(d) => {
            let age = (reference - d).num_days().max(0) as f64;
            0.5f64.powf(age / half_life_days)
        }
    }
}

/// Mean quality of the responding evidence.
pub fn weight_evidence(evidence: &[Evidence], config: &FusionConfig) -> f64 {
    let reference = config.reference();
    let c = config.strength;
    let scores: Vec<f64> = evidence
        .iter()
        .filter(|e| e.responded())
        .map(|e| {
            c.authority * e.authority
                + c.recency * recency_score(e.recency, reference, config.recency_half_life_days)
                + c.citations * e.citation_norm
        })
        .collect();
    if scores.is_empty() {
        return 0.0;
    }
    (scores.iter().sum::<f64>() / scores.len() as f64).clamp(0.0, 1.0)
}

/// Consistency, strength and pooled posterior for one claim.
pub fn assess_claim(
    claim: &Claim,
    evidence: &[Evidence],
    config: &FusionConfig,
) -> Result<ConsistencyReport, FusionError> {
    if let Some(ev) = evidence.iter().find(|e| e.claim_id != claim.id) {
        return Err(FusionError::ClaimMismatch { expected: claim.id.clone(), got: ev.claim_id.clone() });
    }
    let consistency = check_consistency(evidence);
    Ok(ConsistencyReport {
        claim_id: claim.id.clone(),
        consistency,
        strength: weight_evidence(evidence, config),
        fused_posterior: fuse_posterior(evidence, &config.weights)?,
        contradiction: consistency < config.tau_consistency,
        contributing_sources: evidence
            .iter()
            .filter(|e| e.responded())
            .map(|e| e.source_id.clone())
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseValidation {
    pub e_score: f64,
    pub reports: Vec<ConsistencyReport>,
    /// Claims whose consistency fell below the threshold.
    pub flagged: Vec<ClaimId>,
}

/// Mean of consistency x strength over claims; 1.0 for a claim-free
/// response.
pub fn evidence_score(reports: &[ConsistencyReport]) -> f64 {
    if reports.is_empty() {
        return 1.0;
    }
    reports.iter().map(|r| r.consistency * r.strength).sum::<f64>() / reports.len() as f64
}

/// Validate every claim of a response against its aligned evidence list.
pub fn validate_response(
    claims: &[Claim],
    evidence: &[Vec<Evidence>],
    config: &FusionConfig,
) -> Result<ResponseValidation, FusionError> {
    assert_eq!(claims.len(), evidence.len(), "claims and evidence lists must be aligned");
    let reports = claims
        .iter()
        .zip(evidence)
        .map(|(c, ev)| assess_claim(c, ev, config))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ResponseValidation {
        e_score: evidence_score(&reports),
        flagged: reports.iter().filter(|r| r.contradiction).map(|r| r.claim_id.clone()).collect(),
        reports,
    })
}
