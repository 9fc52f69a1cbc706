//! Rewriting of claims that fail verification.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::ConfidenceBreakdown;
use crate::claims::{Claim, ClaimId, ClaimValue, Span};
use crate::evidence::Mass;
use crate::fusion::ConsistencyReport;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CorrectionError {
    #[error("claim {0} passed verification and needs no correction")]
    NotFlagged(ClaimId),
    #[error("text at {span:?} no longer matches claim {claim_id}")]
    SpanMismatch { claim_id: ClaimId, span: Span },
    #[error("corrections for {0} and {1} overlap")]
    Overlap(ClaimId, ClaimId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    Substitute,
    Hedge,
    Attribute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrectionConfig {
    /// Posterior mass the substitution set must reach.
    pub substitution_threshold: f64,
    /// Values within this distance of the top mass join the substitution
    /// set of a single-valued predicate.
    pub margin: f64,
    /// Minimum mass for a value to join the set of a multi-valued predicate.
    pub multi_value_min_mass: f64,
    /// The first phrase is used.
    pub hedge_phrases: Vec<String>,
    /// Display names for sources in attributions; unlisted sources use
    /// their id.
    pub attribution_labels: BTreeMap<String, String>,
    /// Per-predicate template for labelled substitution items, with
    /// `{label}` and `{value}` placeholders.
    pub templates: BTreeMap<String, String>,
    pub default_template: String,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self {
            substitution_threshold: 0.6,
            margin: 0.05,
            multi_value_min_mass: 0.2,
            hedge_phrases: vec!["It is uncertain whether ".to_string()],
            attribution_labels: BTreeMap::new(),
            templates: BTreeMap::new(),
            default_template: "{label} in {value}".to_string(),
        }
    }
}

impl CorrectionConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("substitution_threshold", self.substitution_threshold),
            ("margin", self.margin),
            ("multi_value_min_mass", self.multi_value_min_mass),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name}: {v} outside [0,1]"));
            }
        }
        if self.hedge_phrases.first().is_none_or(|p| p.trim().is_empty()) {
            return Err("hedge_phrases: at least one non-empty phrase is required".into());
        }
        Ok(())
    }

    fn hedge_phrase(&self) -> &str {
        self.hedge_phrases.first().map_or("It is uncertain whether ", String::as_str)
    }

    fn template(&self, predicate: &str) -> &str {
        self.templates.get(predicate).unwrap_or(&self.default_template)
    }

    fn source_label<'a>(&'a self, source_id: &'a str) -> &'a str {
        self.attribution_labels.get(source_id).map_or(source_id, String::as_str)
    }
}

/// Chosen strategy plus the posterior values backing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub strategy: Strategy,
    pub values: Vec<Mass>,
    pub mass: f64,
}

/// Values a substitution would assert, and their total mass.
pub fn substitution_set(report: &ConsistencyReport, multi_valued: bool, config: &CorrectionConfig) -> (Vec<Mass>, f64) {
    let posterior = &report.fused_posterior;
    let Some(top) = posterior.argmax() else {
        return (Vec::new(), 0.0);
    };
    let chosen: Vec<Mass> = if multi_valued {
        posterior.iter().filter(|m| m.probability >= config.multi_value_min_mass).cloned().collect()
    } else {
        posterior.iter().filter(|m| top.probability - m.probability < config.margin).cloned().collect()
    };
    let mass = chosen.iter().map(|m| m.probability).sum::<f64>().min(1.0);
    (chosen, mass)
}

pub fn is_flagged(report: &ConsistencyReport, confidence: &ConfidenceBreakdown, tau: f64) -> bool {
    confidence.gate_value() <= tau || report.contradiction
}

/// Pick a strategy for a flagged claim: substitute when the posterior is
/// concentrated enough, hedge when nothing is known, attribute otherwise.
pub fn select_strategy(
    claim: &Claim,
    report: &ConsistencyReport,
    confidence: &ConfidenceBreakdown,
    tau: f64,
    multi_valued: bool,
    config: &CorrectionConfig,
) -> Result<Plan, CorrectionError> {
    if !is_flagged(report, confidence, tau) {
        return Err(CorrectionError::NotFlagged(claim.id.clone()));
    }
    if report.fused_posterior.is_empty() {
        return Ok(Plan { strategy: Strategy::Hedge, values: Vec::new(), mass: 0.0 });
    }
    let (values, mass) = substitution_set(report, multi_valued, config);
    // Substituting a value with itself would change nothing; point to the
    // sources instead.
    let only_own = values.iter().all(|m| m.value.same_as(&claim.object));
    let strategy = if mass >= config.substitution_threshold && !only_own {
        Strategy::Substitute
    } else {
        Strategy::Attribute
    };
    Ok(Plan { strategy, values, mass })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub claim_id: ClaimId,
    pub strategy: Strategy,
    pub original_span: Span,
    pub original_text: String,
    pub replacement_text: String,
    pub cited_sources: Vec<String>,
    pub posterior_mass_used: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub substituted_values: Vec<ClaimValue>,
}

fn join_items(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

fn substitute_text(claim: &Claim, values: &[Mass], config: &CorrectionConfig) -> String {
    let raw = &claim.raw_text;
    let base = claim.span.start;
    let obj = (claim.object_span.start - base, claim.object_span.end - base);
    let labelled = values.iter().all(|m| m.label.is_some());
    if let (true, Some(comp)) = (labelled, &claim.complement) {
        if comp.span.end <= claim.object_span.start && comp.span.start >= base {
            let template = config.template(&claim.predicate);
            let items: Vec<String> = values
                .iter()
                .map(|m| {
                    template
                        .replace("{label}", m.label.as_deref().unwrap_or_default())
                        .replace("{value}", &m.value.render())
                })
                .collect();
            let start = comp.span.start - base;
            return format!("{}{}{}", &raw[..start], join_items(&items), &raw[obj.1..]);
        }
    }
    let items: Vec<String> = values.iter().map(|m| m.value.render()).collect();
    format!("{}{}{}", &raw[..obj.0], join_items(&items), &raw[obj.1..])
}

fn hedge_text(claim: &Claim, config: &CorrectionConfig) -> String {
    let mut out = config.hedge_phrase().to_string();
    let raw = &claim.raw_text;
    let mut chars = raw.chars();
    match chars.next() {
        // Proper names keep their capital.
        Some(first) if !claim.subject.is_linked() => {
            out.extend(first.to_lowercase());
            out.push_str(chars.as_str());
        }
        _ => out.push_str(raw),
    }
    out
}

/// Build the replacement text for a claim's span.
pub fn generate_correction(claim: &Claim, report: &ConsistencyReport, plan: &Plan, config: &CorrectionConfig) -> Correction {
    let (replacement_text, cited_sources) = match plan.strategy {
        Strategy::Substitute => (substitute_text(claim, &plan.values, config), report.contributing_sources.clone()),
        Strategy::Hedge => (hedge_text(claim, config), Vec::new()),
        Strategy::Attribute => {
            let labels: Vec<&str> = report.contributing_sources.iter().map(|s| config.source_label(s)).collect();
            (format!("{} (according to {})", claim.raw_text, labels.join(", ")), report.contributing_sources.clone())
        }
    };
    Correction {
        claim_id: claim.id.clone(),
        strategy: plan.strategy,
        original_span: claim.span,
        original_text: claim.raw_text.clone(),
        replacement_text,
        cited_sources,
        posterior_mass_used: plan.mass,
        substituted_values: match plan.strategy {
            Strategy::Substitute => plan.values.iter().map(|m| m.value.clone()).collect(),
            _ => Vec::new(),
        },
    }
}

/// Replace one claim's span. Text outside the span is untouched.
pub fn apply_correction(response_text: &str, correction: &Correction) -> Result<String, CorrectionError> {
    let span = correction.original_span;
    if response_text.get(span.start..span.end) != Some(correction.original_text.as_str()) {
        return Err(CorrectionError::SpanMismatch { claim_id: correction.claim_id.clone(), span });
    }
    let mut out = String::with_capacity(response_text.len() + correction.replacement_text.len());
    out.push_str(&response_text[..span.start]);
    out.push_str(&correction.replacement_text);
    out.push_str(&response_text[span.end..]);
    Ok(out)
}

/// Apply corrections right to left so earlier offsets stay valid.
pub fn apply_all(response_text: &str, corrections: &[Correction]) -> Result<String, CorrectionError> {
    let mut ordered: Vec<&Correction> = corrections.iter().collect();
    ordered.sort_by_key(|c| std::cmp::Reverse(c.original_span.start));
    for pair in ordered.windows(2) {
        if pair[1].original_span.end > pair[0].original_span.start {
            return Err(CorrectionError::Overlap(pair[1].claim_id.clone(), pair[0].claim_id.clone()));
        }
    }
    let mut text = response_text.to_string();
    for c in ordered {
        text = apply_correction(&text, c)?;
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::Weights;
    use crate::claims::{extract_claims, AliasTable, ExtractorConfig};
    use crate::evidence::Distribution;
    use std::sync::Arc;

    fn cfg() -> ExtractorConfig {
        let aliases = AliasTable::parse("Q937\tPERSON\tAlbert Einstein\nQ937\tPERSON\tEinstein\n").unwrap();
        ExtractorConfig { aliases: Arc::new(aliases), ..Default::default() }
    }

    fn report(claim: &Claim, posterior: Distribution) -> ConsistencyReport {
        ConsistencyReport {
            claim_id: claim.id.clone(),
            consistency: 0.0,
            strength: 0.8,
            contradiction: true,
            contributing_sources: if posterior.is_empty() { vec![] } else { vec!["kg".into(), "web".into()] },
            fused_posterior: posterior,
        }
    }

    fn low(claim: &Claim) -> ConfidenceBreakdown {
        ConfidenceBreakdown {
            claim_id: claim.id.clone(),
            intrinsic: 0.5,
            external: 0.0,
            coherence: 0.3,
            combined: 0.21,
            weights_used: Weights::default(),
            intrinsic_fallback: None,
            calibrated: None,
        }
    }

    fn y(v: i32) -> ClaimValue {
        ClaimValue::year(v)
    }

    #[test]
    fn einstein_substitution_with_and_without_labels() {
        let text = "Einstein published relativity in 1920";
        let claim = extract_claims(text, &cfg()).remove(0);
        let labelled = Distribution::from_weights([
            (y(1905), 0.5875, Some("special relativity".to_string())),
            (y(1915), 0.4125, Some("general relativity".to_string())),
        ]);
        let r = report(&claim, labelled);
        let config = CorrectionConfig::default();
        let plan = select_strategy(&claim, &r, &low(&claim), 0.7, true, &config).unwrap();
        assert_eq!(plan.strategy, Strategy::Substitute);
        assert!((plan.mass - 1.0).abs() < 1e-12);
        let c = generate_correction(&claim, &r, &plan, &config);
        assert_eq!(
            apply_correction(text, &c).unwrap(),
            "Einstein published special relativity in 1905 and general relativity in 1915"
        );

        let bare = report(&claim, Distribution::from_weights([(y(1905), 0.5875, None), (y(1915), 0.4125, None)]));
        let plan = select_strategy(&claim, &bare, &low(&claim), 0.7, true, &config).unwrap();
        let c = generate_correction(&claim, &bare, &plan, &config);
        assert_eq!(apply_correction(text, &c).unwrap(), "Einstein published relativity in 1905 and 1915");

        // A single-valued predicate only takes the leader.
        let plan = select_strategy(&claim, &bare, &low(&claim), 0.7, false, &config).unwrap();
        assert_eq!(plan.strategy, Strategy::Attribute);
        assert!((plan.mass - 0.5875).abs() < 1e-12);
    }

    #[test]
    fn strategy_thresholds() {
        let claim = extract_claims("Einstein published relativity in 1920", &cfg()).remove(0);
        let config = CorrectionConfig::default();
        let empty = report(&claim, Distribution::empty());
        assert_eq!(select_strategy(&claim, &empty, &low(&claim), 0.7, false, &config).unwrap().strategy, Strategy::Hedge);
        let spread = report(&claim, Distribution::from_weights([(y(1), 0.4, None), (y(2), 0.35, None), (y(3), 0.25, None)]));
        assert_eq!(select_strategy(&claim, &spread, &low(&claim), 0.7, false, &config).unwrap().strategy, Strategy::Attribute);
        let own = report(&claim, Distribution::from_weights([(y(1920), 1.0, None)]));
        assert_eq!(select_strategy(&claim, &own, &low(&claim), 0.7, false, &config).unwrap().strategy, Strategy::Attribute);

        let mut passing = low(&claim);
        passing.combined = 0.9;
        let mut ok = report(&claim, Distribution::empty());
        ok.contradiction = false;
        assert_eq!(
            select_strategy(&claim, &ok, &passing, 0.7, false, &config),
            Err(CorrectionError::NotFlagged(claim.id.clone()))
        );
    }

    #[test]
    fn hedge_and_attribute_text() {
        let text = "The drug was approved in 1990.";
        let claim = extract_claims(text, &cfg()).remove(0);
        let config = CorrectionConfig::default();
        let r = report(&claim, Distribution::empty());
        let plan = select_strategy(&claim, &r, &low(&claim), 0.7, false, &config).unwrap();
        let c = generate_correction(&claim, &r, &plan, &config);
        assert_eq!(apply_correction(text, &c).unwrap(), "It is uncertain whether the drug was approved in 1990.");

        let mut config = CorrectionConfig::default();
        config.attribution_labels.insert("kg".into(), "kg-main".into());
        let r = report(&claim, Distribution::from_weights([(y(1990), 1.0, None)]));
        let plan = select_strategy(&claim, &r, &low(&claim), 0.7, false, &config).unwrap();
        let c = generate_correction(&claim, &r, &plan, &config);
        assert_eq!(c.cited_sources, vec!["kg", "web"]);
        assert_eq!(apply_correction(text, &c).unwrap(), "The drug was approved in 1990 (according to kg-main, web).");
    }

    #[test]
    fn mismatched_span_is_rejected() {
        let text = "Einstein published relativity in 1920.";
        let claim = extract_claims(text, &cfg()).remove(0);
        let r = report(&claim, Distribution::empty());
        let plan = select_strategy(&claim, &r, &low(&claim), 0.7, false, &CorrectionConfig::default()).unwrap();
        let c = generate_correction(&claim, &r, &plan, &CorrectionConfig::default());
        assert!(matches!(apply_correction("Einstein published nothing.", &c), Err(CorrectionError::SpanMismatch { .. })));
    }

    #[test]
    fn right_to_left_application() {
        let text = "The drug was approved in 1990. The dam was finished in 1950.";
        let claims = extract_claims(text, &cfg());
        assert_eq!(claims.len(), 2);
        let config = CorrectionConfig::default();
        let corrections: Vec<Correction> = claims
            .iter()
            .map(|c| {
                let r = report(c, Distribution::empty());
                let plan = select_strategy(c, &r, &low(c), 0.7, false, &config).unwrap();
                generate_correction(c, &r, &plan, &config)
            })
            .collect();
        assert_eq!(
            apply_all(text, &corrections).unwrap(),
            "It is uncertain whether the drug was approved in 1990. It is uncertain whether the dam was finished in 1950."
        );
    }
}
