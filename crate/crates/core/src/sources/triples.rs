//! In-process temporal triple store.

use std::collections::HashMap;
use std::path::Path;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{KnowledgeSource, SourceError, SourceProfile};
use crate::claims::{AliasTable, Claim, ClaimValue};
use crate::evidence::{stance_for, Distribution, Evidence, DEFAULT_STANCE_MARGIN};
use crate::text::covers_terms;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub subject_id: String,
    pub predicate: String,
    pub object: ClaimValue,
    pub valid_from: Option<i32>,
    pub valid_to: Option<i32>,
    pub asserted_confidence: f64,
    /// Optional description of the fact, e.g. the work a year refers to.
    pub label: Option<String>,
}

impl Triple {
    pub fn valid_at(&self, year: i32) -> bool {
        self.valid_from.is_none_or(|f| f <= year) && self.valid_to.is_none_or(|t| year <= t)
    }
}

#[derive(Debug, Error)]
pub enum TripleStoreError {
    #[error("reading KG file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("KG line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Triples indexed by `(subject_id, predicate)`. Immutable after load.
#[derive(Debug, Clone, Default)]
pub struct TripleStore {
    index: HashMap<(String, String), Vec<Triple>>,
    len: usize,
}

impl TripleStore {
    pub fn load(path: &Path, aliases: &AliasTable) -> Result<Self, TripleStoreError> {
        let text = std::fs::read_to_string(path).map_err(|source| TripleStoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, aliases)
    }

    /// Parse `subject_id, predicate, object_type, object_value, valid_from,
    /// valid_to, confidence[, label]` tab-separated rows.
    pub fn parse(text: &str, aliases: &AliasTable) -> Result<Self, TripleStoreError> {
        let mut store = Self::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| TripleStoreError::Parse { line: i + 1, message };
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if !(7..=8).contains(&cols.len()) {
                return Err(err(format!("expected 7 or 8 columns, found {}", cols.len())));
            }
            let year = |s: &str, name: &str| -> Result<Option<i32>, TripleStoreError> {
                if s.is_empty() {
                    return Ok(None);
                }
                s.parse()
                    .map(Some)
                    .map_err(|_| err(format!("{name} {s:?} is not a year")))
            };
            let object = ClaimValue::parse_typed(cols[2], cols[3], aliases)
                .map_err(|e| err(e.to_string()))?;
            let valid_from = year(cols[4], "valid_from")?;
            let valid_to = year(cols[5], "valid_to")?;
            if let (Some(f), Some(t)) = (valid_from, valid_to) {
                if f > t {
                    return Err(err(format!("valid_from {f} after valid_to {t}")));
                }
            }
            let confidence: f64 = cols[6]
                .parse()
                .map_err(|_| err(format!("confidence {:?} is not a number", cols[6])))?;
            if !(0.0..=1.0).contains(&confidence) {
                return Err(err(format!("confidence {confidence} outside [0,1]")));
            }
            store.insert(Triple {
                subject_id: cols[0].to_string(),
                predicate: cols[1].to_lowercase(),
                object,
                valid_from,
                valid_to,
                asserted_confidence: confidence,
                label: cols.get(7).filter(|l| !l.is_empty()).map(|l| l.to_string()),
            });
        }
        Ok(store)
    }

    pub fn insert(&mut self, triple: Triple) {
        self.len += 1;
        self.index
            .entry((triple.subject_id.clone(), triple.predicate.clone()))
            .or_default()
            .push(triple);
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Triples for `subject_id`/`predicate` valid at `as_of` (all when
    /// `as_of` is absent), in insertion order.
    pub fn kg_lookup(&self, subject_id: &str, predicate: &str, as_of: Option<i32>) -> Vec<Triple> {
        self.index
            .get(&(subject_id.to_string(), predicate.to_lowercase()))
            .map(|ts| {
                ts.iter()
                    .filter(|t| as_of.is_none_or(|y| t.valid_at(y)))
                    .cloned()
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// Knowledge-graph source over a [`TripleStore`].
pub struct KgSource {
    profile: SourceProfile,
    store: TripleStore,
    aliases: std::sync::Arc<AliasTable>,
    stance_margin: f64,
}

impl KgSource {
    pub fn new(profile: SourceProfile, store: TripleStore, aliases: std::sync::Arc<AliasTable>) -> Self {
        Self { profile, store, aliases, stance_margin: DEFAULT_STANCE_MARGIN }
    }

    pub fn with_stance_margin(mut self, margin: f64) -> Self {
        self.stance_margin = margin;
        self
    }

    pub fn store(&self) -> &TripleStore {
        &self.store
    }

    /// Synchronous core of [`KnowledgeSource::query`].
    pub fn evaluate(&self, claim: &Claim) -> Evidence {
        let reliability = self.profile.base_reliability;
        if !claim.subject.is_linked() {
            return Evidence::insufficient(&self.profile.source_id, &claim.id, reliability);
        }
        let kind = claim.object.kind();
        let matches: Vec<Triple> = self
            .store
            .kg_lookup(&claim.subject.canonical_id, &claim.predicate, claim.as_of())
            .into_iter()
            .filter(|t| t.object.kind() == kind)
            .filter(|t| match (claim.complement_text(), &t.label) {
                (Some(c), Some(label)) => covers_terms(label, c),
                _ => true,
            })
            .take(self.profile.max_results)
            .collect();
        let dist = Distribution::from_weights(
            matches.iter().map(|t| (t.object.clone(), t.asserted_confidence, t.label.clone())),
        );
        if dist.is_empty() {
            return Evidence::insufficient(&self.profile.source_id, &claim.id, reliability);
        }
        let subject_label = self
            .aliases
            .label(&claim.subject.canonical_id)
            .unwrap_or(&claim.subject.canonical_id);
        let snippet = matches
            .iter()
            .map(|t| match &t.label {
                Some(l) => format!("{subject_label} {} {l} {}", t.predicate, t.object.render()),
                None => format!("{subject_label} {} {}", t.predicate, t.object.render()),
            })
            .collect::<Vec<_>>()
            .join(". ");
        Evidence {
            source_id: self.profile.source_id.clone(),
            claim_id: claim.id.clone(),
            stance: stance_for(&claim.object, &dist, self.stance_margin),
            value_distribution: dist,
            authority: matches.iter().map(|t| t.asserted_confidence).sum::<f64>()
                / matches.len() as f64,
            recency: None,
            citation_count: 0,
            citation_norm: 0.0,
            reliability,
            latency_ms: 0.0,
            snippet,
        }
    }
}

#[async_trait]
impl KnowledgeSource for KgSource {
    fn profile(&self) -> &SourceProfile {
        &self.profile
    }

    async fn query(&self, claim: &Claim) -> Result<Evidence, SourceError> {
        Ok(self.evaluate(claim))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::{extract_claims, ExtractorConfig};
    use crate::evidence::Stance;
    use crate::sources::SourceKind;
    use proptest::prelude::*;
    use std::sync::Arc;

    const KG: &str = "\
Q937\tpublished\tdate\t1905\t1905\t\t0.96\tspecial relativity
Q937\tpublished\tdate\t1915\t1915\t\t0.96\tgeneral relativity
Q937\tborn\tentity\tQ3012\t\t\t0.99
";

    fn aliases() -> Arc<AliasTable> {
        Arc::new(AliasTable::parse("Q937\tPERSON\tAlbert Einstein\nQ937\tPERSON\tEinstein\nQ3012\tPLACE\tUlm\n").unwrap())
    }

    fn source() -> KgSource {
        let a = aliases();
        let store = TripleStore::parse(KG, &a).unwrap();
        KgSource::new(SourceProfile::new("kg", SourceKind::KnowledgeGraph, 0.94, 0.4), store, a)
    }

    fn claim(text: &str) -> Claim {
        let cfg = ExtractorConfig { aliases: aliases(), ..Default::default() };
        extract_claims(text, &cfg).remove(0)
    }

    #[test]
    fn lookup_with_and_without_as_of() {
        let kg = source();
        let all = kg.store().kg_lookup("Q937", "published", None);
        let years: Vec<String> = all.iter().map(|t| t.object.render()).collect();
        assert_eq!(years, ["1905", "1915"]);
        assert_eq!(kg.store().kg_lookup("Q937", "published", Some(1910)).len(), 1);
        assert!(kg.store().kg_lookup("Q0", "published", None).is_empty());
    }

    #[test]
    fn einstein_claim_is_refuted() {
        let ev = source().evaluate(&claim("Einstein published relativity in 1920"));
        assert_eq!(ev.stance, Stance::Refutes);
        assert!((ev.value_distribution.mass(&ClaimValue::year(1905)) - 0.5).abs() < 1e-12);
        assert!((ev.value_distribution.mass(&ClaimValue::year(1915)) - 0.5).abs() < 1e-12);
        assert_eq!(ev.reliability, 0.94);
        assert_eq!(ev.value_distribution.label(&ClaimValue::year(1915)), Some("general relativity"));
        ev.check().unwrap();
    }

    #[test]
    fn labels_narrow_by_complement() {
        let ev = source().evaluate(&claim("Einstein published special relativity in 1905"));
        assert_eq!(ev.stance, Stance::Supports);
        assert_eq!(ev.value_distribution.len(), 1);
    }

    #[test]
    fn entity_objects_and_unlinked_subjects() {
        let ev = source().evaluate(&claim("Einstein was born in Ulm"));
        assert_eq!(ev.stance, Stance::Supports);
        let ev = source().evaluate(&claim("Zorblax published relativity in 1920"));
        assert_eq!(ev.stance, Stance::Insufficient);
        let empty = KgSource::new(
            SourceProfile::new("kg", SourceKind::KnowledgeGraph, 0.94, 0.4),
            TripleStore::default(),
            aliases(),
        );
        let ev = empty.evaluate(&claim("Einstein published relativity in 1920"));
        assert_eq!(ev.stance, Stance::Insufficient);
        assert!(ev.value_distribution.is_empty());
    }

    #[test]
    fn parse_errors_name_the_line() {
        let a = AliasTable::default();
        let bad_interval = "Q1\tp\tdate\t1900\t1950\t1940\t0.5\n";
        assert!(matches!(TripleStore::parse(bad_interval, &a), Err(TripleStoreError::Parse { line: 1, .. })));
        let bad_conf = "# header\nQ1\tp\tdate\t1900\t\t\t1.5\n";
        assert!(matches!(TripleStore::parse(bad_conf, &a), Err(TripleStoreError::Parse { line: 2, .. })));
        assert!(TripleStore::parse("Q1\tp\tdate\n", &a).is_err());
    }

    fn arb_triple() -> impl Strategy<Value = Triple> {
        (0..8u8, 0..3u8, 1800..2000i32, prop::option::of(1800..2000i32), prop::option::of(0..80i32))
            .prop_map(|(s, p, v, from, span)| Triple {
                subject_id: format!("Q{s}"),
                predicate: ["a", "b", "c"][p as usize].to_string(),
                object: ClaimValue::year(v),
                valid_from: from,
                valid_to: match (from, span) {
                    (Some(f), Some(d)) => Some(f + d),
                    (None, Some(d)) => Some(1850 + d),
                    _ => None,
                },
                asserted_confidence: 0.5,
                label: None,
            })
    }

    proptest! {
        #[test]
        fn lookup_matches_brute_force(
            triples in prop::collection::vec(arb_triple(), 0..1000),
            s in 0..8u8, p in 0..3u8, as_of in prop::option::of(1780..2100i32),
        ) {
            let mut store = TripleStore::default();
            for t in &triples {
                store.insert(t.clone());
            }
            let subject = format!("Q{s}");
            let predicate = ["a", "b", "c"][p as usize];
            let expected: Vec<Triple> = triples
                .iter()
                .filter(|t| t.subject_id == subject && t.predicate == predicate)
                .filter(|t| match as_of {
                    None => true,
                    Some(y) => t.valid_from.is_none_or(|f| f <= y) && t.valid_to.is_none_or(|e| y <= e),
                })
                .cloned()
                .collect();
            prop_assert_eq!(store.kg_lookup(&subject, predicate, as_of), expected);
        }
    }
}
