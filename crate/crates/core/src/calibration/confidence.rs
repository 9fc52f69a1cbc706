use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{CalibrationError, Weights};
use crate::claims::{Claim, ClaimId};
use crate::evidence::Evidence;
use crate::fusion::ConsistencyReport;
use crate::text::{content_tokens, tf_cosine};

/// Value used when a component has nothing to say.
pub const NEUTRAL_CONFIDENCE: f64 = 0.5;

/// Where the model-side confidence of a claim comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntrinsicProvider {
    Constant { value: f64 },
    /// Per-claim values supplied by the caller, keyed by claim id.
    Supplied,
    /// Agreement with alternative samples of the same response.
    SampleAgreement,
}

impl Default for IntrinsicProvider {
    fn default() -> Self {
        Self::Constant { value: NEUTRAL_CONFIDENCE }
    }
}

/// Request-scoped inputs for intrinsic providers.
#[derive(Debug, Clone, Copy, Default)]
pub struct IntrinsicInputs<'a> {
    pub supplied: Option<&'a HashMap<String, f64>>,
    /// Claims extracted from each alternative sample.
    pub samples: &'a [Vec<Claim>],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intrinsic {
    pub value: f64,
    /// Why the neutral fallback was used, if it was.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

pub fn intrinsic_confidence(claim: &Claim, provider: &IntrinsicProvider, inputs: IntrinsicInputs<'_>) -> Intrinsic {
    let neutral = |why: String| Intrinsic { value: NEUTRAL_CONFIDENCE, fallback: Some(why) };
    match provider {
        IntrinsicProvider::Constant { value } => Intrinsic { value: value.clamp(0.0, 1.0), fallback: None },
        IntrinsicProvider::Supplied => match inputs.supplied.and_then(|m| m.get(&claim.id.0)) {
            Some(v) if (0.0..=1.0).contains(v) => Intrinsic { value: *v, fallback: None },
            Some(v) => neutral(format!("supplied confidence {v} outside [0,1]")),
            None => neutral(format!("no supplied confidence for {}", claim.id)),
        },
        IntrinsicProvider::SampleAgreement => {
            if inputs.samples.is_empty() {
                return Intrinsic { value: NEUTRAL_CONFIDENCE, fallback: None };
            }
            let subject = claim.subject.lookup_key();
            let agreeing = inputs
                .samples
                .iter()
                .filter(|sample| {
                    sample.iter().any(|c| {
                        c.subject.lookup_key() == subject
                            && c.predicate == claim.predicate
                            && c.object.same_as(&claim.object)
                    })
                })
                .count();
            Intrinsic { value: agreeing as f64 / inputs.samples.len() as f64, fallback: None }
        }
    }
}

/// Consistency times strength, clipped to [0,1].
pub fn external_confidence(report: &ConsistencyReport) -> f64 {
    (report.consistency * report.strength).clamp(0.0, 1.0)
}

/// Term-frequency cosine between the claim text and the snippets of every
/// responding source. Neutral when there are no snippets.
pub fn coherence_score(claim: &Claim, evidence: &[Evidence]) -> f64 {
    let snippets: Vec<&str> = evidence
        .iter()
        .filter(|e| e.responded() && !e.snippet.trim().is_empty())
        .map(|e| e.snippet.as_str())
        .collect();
    if snippets.is_empty() {
        return NEUTRAL_CONFIDENCE;
    }
    tf_cosine(&content_tokens(&claim.raw_text), &content_tokens(&snippets.join(" ")))
}

pub fn combine_confidence(
    intrinsic: f64,
    external: f64,
    coherence: f64,
    weights: &Weights,
) -> Result<f64, CalibrationError> {
    weights.validate()?;
    Ok((weights.alpha * intrinsic + weights.beta * external + weights.gamma * coherence).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBreakdown {
    pub claim_id: ClaimId,
    pub intrinsic: f64,
    pub external: f64,
    pub coherence: f64,
    pub combined: f64,
    pub weights_used: Weights,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsic_fallback: Option<String>,
    /// Combined confidence after temperature scaling, when enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrated: Option<f64>,
}

impl ConfidenceBreakdown {
    pub fn build(
        claim: &Claim,
        intrinsic: Intrinsic,
        report: &ConsistencyReport,
        evidence: &[Evidence],
        weights: &Weights,
        temperature: Option<f64>,
    ) -> Result<Self, CalibrationError> {
        let external = external_confidence(report);
        let coherence = coherence_score(claim, evidence);
        let combined = combine_confidence(intrinsic.value, external, coherence, weights)?;
        Ok(Self {
            claim_id: claim.id.clone(),
            intrinsic: intrinsic.value,
            external,
            coherence,
            combined,
            weights_used: *weights,
            intrinsic_fallback: intrinsic.fallback,
            calibrated: temperature.map(|t| super::apply_temperature(combined, t)),
        })
    }

    /// The value compared against the gate threshold.
    pub fn gate_value(&self) -> f64 {
        self.calibrated.unwrap_or(self.combined)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::{extract_claims, AliasTable, ExtractorConfig};
    use crate::evidence::{Distribution, Stance};
    use std::sync::Arc;

    fn cfg() -> ExtractorConfig {
        let aliases = AliasTable::parse("Q937\tPERSON\tEinstein\n").unwrap();
        ExtractorConfig { aliases: Arc::new(aliases), ..Default::default() }
    }

    #[test]
    fn providers() {
        let c = extract_claims("Einstein published relativity in 1905", &cfg()).remove(0);
        let constant = IntrinsicProvider::Constant { value: 0.9 };
        assert_eq!(intrinsic_confidence(&c, &constant, Default::default()).value, 0.9);

        let samples: Vec<Vec<Claim>> = [
            "Einstein published relativity in 1905.",
            "Einstein published relativity in 1905.",
            "Einstein published relativity in 1915.",
            "Einstein published relativity in 1905!",
        ]
        .iter()
        .map(|t| extract_claims(t, &cfg()))
        .collect();
        let inputs = IntrinsicInputs { supplied: None, samples: &samples };
        assert_eq!(intrinsic_confidence(&c, &IntrinsicProvider::SampleAgreement, inputs).value, 0.75);
        let none = intrinsic_confidence(&c, &IntrinsicProvider::SampleAgreement, Default::default());
        assert_eq!((none.value, none.fallback), (0.5, None));

        let supplied: HashMap<String, f64> = [("c0".to_string(), 0.2)].into();
        let inputs = IntrinsicInputs { supplied: Some(&supplied), samples: &[] };
        assert_eq!(intrinsic_confidence(&c, &IntrinsicProvider::Supplied, inputs).value, 0.2);
        let missing = intrinsic_confidence(&c, &IntrinsicProvider::Supplied, Default::default());
        assert_eq!(missing.value, 0.5);
        assert!(missing.fallback.is_some());
    }

    #[test]
    fn coherence_against_fixture_snippet() {
        let c = extract_claims("Einstein published relativity in 1920", &cfg()).remove(0);
        let mut ev = Evidence::insufficient("web", &c.id, 0.9);
        assert_eq!(coherence_score(&c, std::slice::from_ref(&ev)), 0.5);
        ev.stance = Stance::Refutes;
        ev.value_distribution = Distribution::from_weights([(crate::claims::ClaimValue::year(1905), 1.0, None)]);
        ev.snippet = "Einstein published the theory of special relativity in 1905".into();
        // claim terms {einstein, published, relativity, 1920}; snippet terms
        // {einstein, published, theory, special, relativity, 1905}
        let expected = 3.0 / (2.0 * 6f64.sqrt());
        assert!((coherence_score(&c, &[ev.clone()]) - expected).abs() < 1e-12);
        ev.snippet = c.raw_text.clone();
        assert!((coherence_score(&c, &[ev.clone()]) - 1.0).abs() < 1e-12);
        ev.snippet = "zebra".into();
        assert_eq!(coherence_score(&c, &[ev]), 0.0);
    }

    #[test]
    fn combination() {
        let w = Weights::default();
        assert!((combine_confidence(0.5, 0.5, 0.5, &w).unwrap() - 0.5).abs() < 1e-12);
        let vertex = Weights::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(combine_confidence(1.0, 0.0, 0.0, &vertex).unwrap(), 1.0);
        assert!((combine_confidence(0.75, 0.0, 0.31, &w).unwrap() - 0.287).abs() < 1e-12);
        let off = Weights { alpha: 0.5, beta: 0.5, gamma: 0.5 };
        assert!(matches!(combine_confidence(0.1, 0.1, 0.1, &off), Err(CalibrationError::WeightsOffSimplex(..))));
        let report = ConsistencyReport {
            claim_id: ClaimId::from_index(0),
            consistency: 0.857,
            strength: 0.8575,
            fused_posterior: Distribution::empty(),
            contradiction: false,
            contributing_sources: vec![],
        };
        assert!((external_confidence(&report) - 0.857 * 0.8575).abs() < 1e-15);
    }
}
