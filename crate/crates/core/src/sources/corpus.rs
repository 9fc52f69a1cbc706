//! Document corpus with a BM25 inverted index.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use async_trait::async_trait;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{KnowledgeSource, SourceError, SourceProfile};
use crate::claims::{Claim, Extractor};
use crate::evidence::{aggregate_hits, Evidence, Hit, DEFAULT_STANCE_MARGIN};
use crate::text::{content_tokens, covers_terms};

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    #[serde(default)]
    pub domain_tag: String,
    pub authority: f64,
    pub published: NaiveDate,
    #[serde(default)]
    pub citation_count: u64,
}

#[derive(Debug, Clone, Default)]
pub struct CorpusIndex {
    docs: Vec<Document>,
    postings: HashMap<String, Vec<(usize, u32)>>,
    doc_len: Vec<usize>,
    avg_len: f64,
    max_citations: u64,
}

impl CorpusIndex {
    pub fn build(docs: Vec<Document>) -> Self {
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        let mut doc_len = Vec::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            let toks = content_tokens(&doc.text);
            doc_len.push(toks.len());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in toks {
                *tf.entry(t).or_default() += 1;
            }
            for (term, n) in tf {
                postings.entry(term).or_default().push((i, n));
            }
        }
        let avg_len = if docs.is_empty() {
            0.0
        } else {
            doc_len.iter().sum::<usize>() as f64 / docs.len() as f64
        };
        let max_citations = docs.iter().map(|d| d.citation_count).max().unwrap_or(0);
        Self { docs, postings, doc_len, avg_len, max_citations }
    }

    /// Load a JSON-lines corpus. Errors carry the 1-based line number.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("reading corpus {}: {e}", path.display()))?;
        let mut docs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let doc: Document = serde_json::from_str(line)
                .map_err(|e| format!("{} line {}: {e}", path.display(), i + 1))?;
            if !(0.0..=1.0).contains(&doc.authority) {
                return Err(format!(
                    "{} line {}: authority {} outside [0,1]",
                    path.display(),
                    i + 1,
                    doc.authority
                ));
            }
            docs.push(doc);
        }
        Ok(Self::build(docs))
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn max_citations(&self) -> u64 {
        self.max_citations
    }

    /// Top `k` documents by BM25 x authority. Ties break on `doc_id`.
    pub fn corpus_search(&self, query_terms: &[String], k: usize) -> Vec<(&Document, f64)> {
        let n = self.docs.len() as f64;
        let mut scores: HashMap<usize, f64> = HashMap::new();
        let mut seen = std::collections::HashSet::new();
        for term in query_terms {
            let term = term.to_lowercase();
            if !seen.insert(term.clone()) {
                continue;
            }
            let Some(list) = self.postings.get(&term) else { continue };
            let df = list.len() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            for &(doc, tf) in list {
                let tf = tf as f64;
                let norm = 1.0 - BM25_B + BM25_B * self.doc_len[doc] as f64 / self.avg_len;
                *scores.entry(doc).or_default() += idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * norm);
            }
        }
        let mut ranked: Vec<(&Document, f64)> = scores
            .into_iter()
            .map(|(i, s)| (&self.docs[i], s * self.docs[i].authority))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.doc_id.cmp(&b.0.doc_id)));
        ranked.truncate(k);
        ranked
    }
}

/// Corpus-backed source. Documents are parsed with the same extractor as
/// responses; a document asserts a value when one of its claims shares the
/// subject and predicate of the queried claim.
pub struct CorpusSource {
    profile: SourceProfile,
    index: CorpusIndex,
    doc_claims: HashMap<String, Vec<Claim>>,
    stance_margin: f64,
}

impl CorpusSource {
    pub fn new(profile: SourceProfile, index: CorpusIndex, extractor: Arc<dyn Extractor>) -> Self {
        let doc_claims = index
            .documents()
            .iter()
            .map(|d| (d.doc_id.clone(), extractor.extract(&d.text)))
            .collect();
        Self { profile, index, doc_claims, stance_margin: DEFAULT_STANCE_MARGIN }
    }

    pub fn with_stance_margin(mut self, margin: f64) -> Self {
        self.stance_margin = margin;
        self
    }

    pub fn index(&self) -> &CorpusIndex {
        &self.index
    }

    pub fn evaluate(&self, claim: &Claim) -> Evidence {
        let terms = content_tokens(&claim.query_text());
        let subject = claim.subject.lookup_key();
        let kind = claim.object.kind();
        let hits: Vec<Hit> = self
            .index
            .corpus_search(&terms, self.profile.max_results)
            .into_iter()
            .map(|(doc, _)| {
                let mut values = Vec::new();
                for c in self.doc_claims.get(&doc.doc_id).into_iter().flatten() {
                    let relevant = c.subject.is_linked()
                        && c.subject.lookup_key() == subject
                        && c.predicate == claim.predicate
                        && c.object.kind() == kind
                        && claim.complement_text().is_none_or(|t| covers_terms(&c.raw_text, t));
                    if relevant && !values.iter().any(|(v, _): &(crate::claims::ClaimValue, _)| v.same_as(&c.object)) {
                        values.push((c.object.clone(), None));
                    }
                }
                Hit {
                    values,
                    authority: doc.authority,
                    published: Some(doc.published),
                    citations: doc.citation_count,
                    snippet: doc.text.clone(),
                }
            })
            .collect();
        if !claim.subject.is_linked() {
            return Evidence::insufficient(&self.profile.source_id, &claim.id, self.profile.base_reliability);
        }
        aggregate_hits(
            claim,
            &self.profile.source_id,
            self.profile.base_reliability,
            &hits,
            self.index.max_citations(),
            self.stance_margin,
        )
    }
}

#[async_trait]
impl KnowledgeSource for CorpusSource {
    fn profile(&self) -> &SourceProfile {
        &self.profile
    }

    async fn query(&self, claim: &Claim) -> Result<Evidence, SourceError> {
        Ok(self.evaluate(claim))
    }
}
