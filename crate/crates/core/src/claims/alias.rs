use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use thiserror::Error;

use super::{EntityKind, EntityRef};
use crate::text::{jaccard, normalize, trigrams};

/// Minimum trigram Jaccard similarity for a fuzzy link.
pub const DEFAULT_LINK_THRESHOLD: f64 = 0.6;

#[derive(Debug, Error)]
pub enum AliasTableError {
    #[error("reading alias table {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("alias table line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone)]
struct AliasEntry {
    canonical_id: String,
    kind: EntityKind,
    normalized: String,
    grams: BTreeSet<String>,
}

/// Read-only alias index, loaded from `canonical_id<TAB>kind<TAB>alias` lines.
#[derive(Debug, Clone, Default)]
pub struct AliasTable {
    entries: Vec<AliasEntry>,
    exact: HashMap<String, Vec<usize>>,
    /// First alias listed for each id, used as its display label.
    preferred: BTreeMap<String, (String, EntityKind)>,
}

impl AliasTable {
    pub fn load(path: &Path) -> Result<Self, AliasTableError> {
        let text = std::fs::read_to_string(path).map_err(|source| AliasTableError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, AliasTableError> {
        let mut table = Self::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(AliasTableError::Parse {
                    line: i + 1,
                    message: format!("expected 3 tab-separated columns, found {}", cols.len()),
                });
            }
            let kind = cols[1].parse().map_err(|e: super::ValueError| AliasTableError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            table.insert(cols[0].trim(), kind, cols[2].trim());
        }
        Ok(table)
    }

    pub fn insert(&mut self, canonical_id: &str, kind: EntityKind, alias: &str) {
        let normalized = normalize(alias);
        if canonical_id.is_empty() || normalized.is_empty() {
            return;
        }
        let idx = self.entries.len();
        self.entries.push(AliasEntry {
            canonical_id: canonical_id.to_string(),
            kind,
            grams: trigrams(&normalized),
            normalized: normalized.clone(),
        });
        self.exact.entry(normalized).or_default().push(idx);
        self.preferred
            .entry(canonical_id.to_string())
            .or_insert_with(|| (alias.to_string(), kind));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn label(&self, canonical_id: &str) -> Option<&str> {
        self.preferred.get(canonical_id).map(|(l, _)| l.as_str())
    }

    /// All aliases registered for an id, normalized.
    pub fn aliases_of(&self, canonical_id: &str) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.canonical_id == canonical_id)
            .map(|e| e.normalized.as_str())
            .collect()
    }

    /// Resolve a raw value that may be either a canonical id or a surface
    /// form.
    pub fn resolve(&self, raw: &str) -> EntityRef {
        match self.preferred.get(raw) {
            Some((label, kind)) => EntityRef {
                canonical_id: raw.to_string(),
                surface_form: label.clone(),
                kind: *kind,
                link_score: 1.0,
            },
            None => link_entity(raw, self),
        }
    }

    pub fn link(&self, surface_form: &str, threshold: f64) -> EntityRef {
        let normalized = normalize(surface_form);
        if normalized.is_empty() {
            return EntityRef::unlinked(surface_form);
        }
        if let Some(idxs) = self.exact.get(&normalized) {
            let best = idxs
                .iter()
                .map(|&i| &self.entries[i])
                .min_by(|a, b| a.canonical_id.cmp(&b.canonical_id))
                .expect("exact index lists are non-empty");
            return EntityRef {
                canonical_id: best.canonical_id.clone(),
                surface_form: surface_form.to_string(),
                kind: best.kind,
                link_score: 1.0,
            };
        }
        let grams = trigrams(&normalized);
        let mut best: Option<(&AliasEntry, f64)> = None;
        for entry in &self.entries {
            let score = jaccard(&grams, &entry.grams);
            let better = match best {
                None => true,
                Some((b, s)) => {
                    score > s || (score == s && entry.canonical_id < b.canonical_id)
                }
            };
            if better {
                best = Some((entry, score));
            }
        }
        match best {
            Some((entry, score)) if score >= threshold && score > 0.0 => EntityRef {
                canonical_id: entry.canonical_id.clone(),
                surface_form: surface_form.to_string(),
                kind: entry.kind,
                link_score: score,
            },
            _ => EntityRef::unlinked(surface_form),
        }
    }
}

/// Link a surface form with the default fuzzy threshold.
pub fn link_entity(surface_form: &str, alias_table: &AliasTable) -> EntityRef {
    alias_table.link(surface_form, DEFAULT_LINK_THRESHOLD)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn einstein() -> AliasTable {
        AliasTable::parse("Q937\tPERSON\tAlbert Einstein\nQ937\tPERSON\tEinstein\n").unwrap()
    }

    #[test]
    fn exact_alias_links_with_full_score() {
        let e = link_entity("Einstein", &einstein());
        assert_eq!(e.canonical_id, "Q937");
        assert_eq!(e.kind, EntityKind::Person);
        assert_eq!(e.link_score, 1.0);
        let e = link_entity("albert EINSTEIN.", &einstein());
        assert_eq!(e.link_score, 1.0);
    }

    #[test]
    fn typo_links_by_trigram_jaccard() {
        // einsten: {ein ins nst ste ten}; einstein: {ein ins nst ste tei}
        // intersection 4, union 6.
        let e = link_entity("Einsten", &einstein());
        assert_eq!(e.canonical_id, "Q937");
        assert!((e.link_score - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_name_stays_unlinked() {
        let e = link_entity("Zzyzx Unknown Person", &AliasTable::default());
        assert!(!e.is_linked());
        assert_eq!(e.link_score, 0.0);
        let e = link_entity("Zzyzx Unknown Person", &einstein());
        assert!(!e.is_linked());
    }

    #[test]
    fn canonical_aliases_are_idempotent() {
        let table = einstein();
        for alias in ["Albert Einstein", "Einstein"] {
            let e = link_entity(alias, &table);
            assert_eq!((e.canonical_id.as_str(), e.link_score), ("Q937", 1.0));
        }
    }

    #[test]
    fn resolve_accepts_ids() {
        let e = einstein().resolve("Q937");
        assert_eq!(e.surface_form, "Albert Einstein");
        assert_eq!(e.link_score, 1.0);
    }

    #[test]
    fn malformed_rows_report_line() {
        let err = AliasTable::parse("Q1\tPERSON\tA\nQ2\tPERSON\n").unwrap_err();
        assert!(matches!(err, AliasTableError::Parse { line: 2, .. }));
        let err = AliasTable::parse("Q1\tALIEN\tA\n").unwrap_err();
        assert!(matches!(err, AliasTableError::Parse { line: 1, .. }));
    }
}
