//! Evidence records and value distributions.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::claims::{Claim, ClaimId, ClaimValue};

/// Tolerance used when checking that a distribution sums to one.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stance {
    Supports,
    Refutes,
    Insufficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mass {
    pub value: ClaimValue,
    pub probability: f64,
    /// Human-readable description of the fact carrying this value, e.g.
    /// "special relativity" for a publication year.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Discrete probability distribution over claim values, keyed by
/// [`ClaimValue::key`] and kept in display order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Distribution {
    entries: Vec<Mass>,
}

impl Distribution {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Build from unnormalized non-negative weights. Entries with the same
    /// key are merged; the first label seen wins. Zero total weight yields
    /// the empty distribution.
    pub fn from_weights<I>(weights: I) -> Self
    where
        I: IntoIterator<Item = (ClaimValue, f64, Option<String>)>,
    {
        let mut merged: BTreeMap<String, Mass> = BTreeMap::new();
        for (value, w, label) in weights {
            if !(w > 0.0) || !w.is_finite() {
                continue;
            }
            let entry = merged.entry(value.key()).or_insert_with(|| Mass {
                value,
                probability: 0.0,
                label: None,
            });
            entry.probability += w;
            if entry.label.is_none() {
                entry.label = label;
            }
        }
        let total: f64 = merged.values().map(|m| m.probability).sum();
        if total <= 0.0 {
            return Self::empty();
        }
        let mut entries: Vec<Mass> = merged
            .into_values()
            .map(|mut m| {
                m.probability /= total;
                m
            })
            .collect();
        entries.sort_by(|a, b| a.value.display_cmp(&b.value).then_with(|| a.value.key().cmp(&b.value.key())));
        Self { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Mass> {
        self.entries.iter()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|m| m.probability).sum()
    }

    pub fn mass(&self, value: &ClaimValue) -> f64 {
        let key = value.key();
        self.entries
            .iter()
            .find(|m| m.value.key() == key)
            .map_or(0.0, |m| m.probability)
    }

    pub fn label(&self, value: &ClaimValue) -> Option<&str> {
        let key = value.key();
        self.entries
            .iter()
            .find(|m| m.value.key() == key)
            .and_then(|m| m.label.as_deref())
    }

    /// Highest-mass entry; ties go to the earliest in display order.
    pub fn argmax(&self) -> Option<&Mass> {
        self.entries.iter().fold(None, |best: Option<&Mass>, m| match best {
            Some(b) if b.probability >= m.probability => Some(b),
            _ => Some(m),
        })
    }

    pub fn is_normalized(&self) -> bool {
        self.is_empty() || (self.total() - 1.0).abs() <= MASS_TOLERANCE
    }
}

/// One source's finding about one claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub source_id: String,
    pub claim_id: ClaimId,
    pub stance: Stance,
    pub value_distribution: Distribution,
    pub authority: f64,
    /// Publication date of the freshest contributing item; `None` for
    /// curated sources without dates.
    pub recency: Option<NaiveDate>,
    pub citation_count: u64,
    /// `log1p(citations) / log1p(max citations in the source)`.
    pub citation_norm: f64,
    pub reliability: f64,
    pub latency_ms: f64,
    pub snippet: String,
}

impl Evidence {
    pub fn insufficient(source_id: &str, claim_id: &ClaimId, reliability: f64) -> Self {
        Self {
            source_id: source_id.to_string(),
            claim_id: claim_id.clone(),
            stance: Stance::Insufficient,
            value_distribution: Distribution::empty(),
            authority: 0.0,
            recency: None,
            citation_count: 0,
            citation_norm: 0.0,
            reliability,
            latency_ms: 0.0,
            snippet: String::new(),
        }
    }

    pub fn responded(&self) -> bool {
        self.stance != Stance::Insufficient
    }

    /// Check the record's invariants.
    pub fn check(&self) -> Result<(), String> {
        if !self.value_distribution.is_normalized() {
            return Err(format!("distribution sums to {}", self.value_distribution.total()));
        }
        if self.value_distribution.is_empty() != (self.stance == Stance::Insufficient) {
            return Err(format!(
                "stance {:?} with {} values",
                self.stance,
                self.value_distribution.len()
            ));
        }
        for (name, v) in [
            ("authority", self.authority),
            ("reliability", self.reliability),
            ("citation_norm", self.citation_norm),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} {v} outside [0,1]"));
            }
        }
        Ok(())
    }
}

/// Source-local stance: the claim is supported when its value is within
/// `margin` of the top mass, refuted when some other value clearly leads.
pub fn stance_for(claim_value: &ClaimValue, dist: &Distribution, margin: f64) -> Stance {
    let Some(top) = dist.argmax() else {
        return Stance::Insufficient;
    };
    let own = dist.mass(claim_value);
    if own > 0.0 && own >= top.probability - margin {
        Stance::Supports
    } else {
        Stance::Refutes
    }
}

/// Default margin for [`stance_for`].
pub const DEFAULT_STANCE_MARGIN: f64 = 0.05;

/// Helper for sources that aggregate several retrieved items into one
/// evidence record.
#[derive(Debug, Clone)]
pub struct Hit {
    pub values: Vec<(ClaimValue, Option<String>)>,
    pub authority: f64,
    pub published: Option<NaiveDate>,
    pub citations: u64,
    pub snippet: String,
}

/// Authority-weighted vote: each hit spreads its authority evenly over the
/// values it asserts.
pub fn aggregate_hits(
    claim: &Claim,
    source_id: &str,
    reliability: f64,
    hits: &[Hit],
    citation_max: u64,
    margin: f64,
) -> Evidence {
    let contributing: Vec<&Hit> = hits.iter().filter(|h| !h.values.is_empty()).collect();
    let dist = Distribution::from_weights(contributing.iter().flat_map(|h| {
        let share = h.authority.clamp(0.0, 1.0) / h.values.len() as f64;
        h.values.iter().map(move |(v, l)| (v.clone(), share, l.clone()))
    }));
    if dist.is_empty() {
        return Evidence::insufficient(source_id, &claim.id, reliability);
    }
    let n = contributing.len() as f64;
    let authority = contributing.iter().map(|h| h.authority.clamp(0.0, 1.0)).sum::<f64>() / n;
    let citation_count = contributing.iter().map(|h| h.citations).max().unwrap_or(0);
    let citation_norm = if citation_max == 0 {
        0.0
    } else {
        ((citation_count as f64).ln_1p() / (citation_max as f64).ln_1p()).clamp(0.0, 1.0)
    };
    Evidence {
        source_id: source_id.to_string(),
        claim_id: claim.id.clone(),
        stance: stance_for(&claim.object, &dist, margin),
        value_distribution: dist,
        authority,
        recency: contributing.iter().filter_map(|h| h.published).max(),
        citation_count,
        citation_norm,
        reliability,
        latency_ms: 0.0,
        snippet: contributing.iter().map(|h| h.snippet.as_str()).collect::<Vec<_>>().join(" "),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn y(year: i32) -> ClaimValue {
        ClaimValue::year(year)
    }

    #[test]
    fn weights_normalize_and_merge() {
        let d = Distribution::from_weights([
            (y(1915), 1.0, None),
            (y(1905), 1.0, Some("special relativity".into())),
            (y(1905), 2.0, Some("ignored".into())),
        ]);
        assert_eq!(d.len(), 2);
        assert!((d.mass(&y(1905)) - 0.75).abs() < 1e-12);
        assert_eq!(d.label(&y(1905)), Some("special relativity"));
        assert_eq!(d.iter().next().unwrap().value, y(1905));
        assert_eq!(d.mass(&y(1920)), 0.0);
        assert!(Distribution::from_weights([(y(1), 0.0, None)]).is_empty());
    }

    #[test]
    fn argmax_ties_prefer_display_order() {
        let d = Distribution::from_weights([(y(1915), 1.0, None), (y(1905), 1.0, None)]);
        assert_eq!(d.argmax().unwrap().value, y(1905));
    }

    #[test]
    fn stance_rules() {
        let d = Distribution::from_weights([(y(1905), 1.0, None), (y(1915), 1.0, None)]);
        assert_eq!(stance_for(&y(1920), &d, 0.05), Stance::Refutes);
        assert_eq!(stance_for(&y(1915), &d, 0.05), Stance::Supports);
        let d = Distribution::from_weights([(y(1905), 2.0, None), (y(1915), 1.0, None)]);
        assert_eq!(stance_for(&y(1915), &d, 0.05), Stance::Refutes);
        assert_eq!(stance_for(&y(1905), &Distribution::empty(), 0.05), Stance::Insufficient);
    }

    #[test]
    fn aggregation_weights_by_authority() {
        // Two hits for 1905 at 0.95 and one for 1915 at 0.85.
        let claim = crate::claims::extract_claims(
            "Einstein published relativity in 1920",
            &Default::default(),
        )
        .remove(0);
        let hit = |year, authority| Hit {
            values: vec![(y(year), None)],
            authority,
            published: None,
            citations: 10,
            snippet: String::new(),
        };
        let ev = aggregate_hits(
            &claim,
            "web",
            0.9,
            &[hit(1905, 0.95), hit(1905, 0.95), hit(1915, 0.85)],
            10,
            0.05,
        );
        let z = 0.95 * 2.0 + 0.85;
        assert!((ev.value_distribution.mass(&y(1905)) - 1.9 / z).abs() < 1e-12);
        assert!((ev.value_distribution.mass(&y(1915)) - 0.85 / z).abs() < 1e-12);
        assert_eq!(ev.stance, Stance::Refutes);
        assert!((ev.citation_norm - 1.0).abs() < 1e-12);
        ev.check().unwrap();

        let none = aggregate_hits(&claim, "web", 0.9, &[], 10, 0.05);
        assert_eq!(none.stance, Stance::Insufficient);
        none.check().unwrap();
    }

    proptest! {
        #[test]
        fn random_distributions_are_normalized(ws in prop::collection::vec((0i32..6, 0.0f64..5.0), 0..12)) {
            let d = Distribution::from_weights(ws.iter().map(|&(v, w)| (y(1900 + v), w, None)));
            prop_assert!(d.is_normalized());
            prop_assert!(d.iter().all(|m| m.probability > 0.0));
        }
    }
}
