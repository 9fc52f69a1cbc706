//! Evaluation protocol: accuracy against gold claims, hallucination
//! reduction, calibration error, latency, BLEU-4, and source ablation.

mod bleu;
pub mod synth;

use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::time::Instant;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bleu::bleu4;

use crate::calibration::{expected_calibration_error, CalibrationReport, ValidationSample, DEFAULT_BINS};
use crate::claims::{Claim, ClaimValue};
use crate::pipeline::{percentile, Config, ConfigError, Pipeline, PipelineError, VerifyRequest};
use crate::text::covers_terms;

/// Examples verified concurrently. Results are gathered in input order.
const EVAL_CONCURRENCY: usize = 8;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("unknown source {0:?}")]
    UnknownSource(String),
    #[error("ablation subset is empty")]
    EmptySubset,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corpus line {line}: {message}")]
    Corpus { line: usize, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    Factual,
    Hallucinated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldClaim {
    pub subject_id: String,
    pub predicate: String,
    pub value: ClaimValue,
    /// Disambiguates facts sharing subject and predicate, such as the two
    /// works in "published special relativity in 1905".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complement: Option<String>,
}

impl GoldClaim {
    /// Whether an extracted claim speaks about this fact, whatever value it
    /// asserts.
    pub fn matches(&self, claim: &Claim) -> bool {
        claim.subject.canonical_id == self.subject_id
            && claim.predicate == self.predicate
            && claim.object.kind() == self.value.kind()
            && match (self.complement.as_deref(), claim.complement_text()) {
                (Some(gold), Some(found)) => covers_terms(gold, found),
                _ => true,
            }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub input_text: String,
    pub gold_claims: Vec<GoldClaim>,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_text: Option<String>,
}

impl LabeledExample {
    /// A hallucinated example must assert at least one wrong gold value.
    pub fn is_consistent(&self, claims: &[Claim]) -> bool {
        let wrong = self.gold_claims.iter().any(|g| assess(g, claims) == Outcome::Wrong);
        wrong == (self.label == Label::Hallucinated)
    }
}

/// What a text says about one gold fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Correct,
    Wrong,
    /// The fact is not asserted at all, for example after hedging.
    Missing,
}

pub fn assess(gold: &GoldClaim, claims: &[Claim]) -> Outcome {
    let mut found = claims.iter().filter(|c| gold.matches(c)).peekable();
    if found.peek().is_none() {
        return Outcome::Missing;
    }
    if found.any(|c| c.object.same_as(&gold.value)) {
        Outcome::Correct
    } else {
        Outcome::Wrong
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub configuration: String,
    pub accuracy: f64,
    pub hallucination_reduction: f64,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub examples: usize,
    pub gold_claims: usize,
    /// Share of gold claims asserted correctly in the final text.
    pub accuracy: f64,
    pub pre_correction_accuracy: f64,
    pub pre_errors: usize,
    pub post_errors: usize,
    /// `1 - post_errors / pre_errors`, or 0 when there was nothing to fix.
    pub hallucination_reduction: f64,
    /// Share of pre-correction errors that end up asserted correctly.
    pub errors_fixed: f64,
    pub ece: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationReport>,
    pub latency_mean_ms: f64,
    pub latency_p95_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bleu4: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ablation: Vec<AblationRow>,
}

impl EvalReport {
    pub fn ablation_csv(&self) -> String {
        ablation_csv(&self.ablation)
    }
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("configuration,accuracy,hallucination_reduction,latency_ms\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.4},{:.4},{:.1}\n",
            r.configuration, r.accuracy, r.hallucination_reduction, r.latency_ms
        ));
    }
    out
}

pub fn load_corpus(path: &Path) -> Result<Vec<LabeledExample>, EvalError> {
    let io = |source| EvalError::Io { path: path.to_path_buf(), source };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let ex = serde_json::from_str(&line).map_err(|e| EvalError::Corpus { line: i + 1, message: e.to_string() })?;
        out.push(ex);
    }
    Ok(out)
}

struct ExampleResult {
    pre: Vec<Outcome>,
    post: Vec<Outcome>,
    predictions: Vec<(f64, bool)>,
    samples: Vec<ValidationSample>,
    latency_ms: f64,
    bleu: Option<f64>,
}

async fn run_example(pipeline: &Pipeline, ex: &LabeledExample) -> Result<ExampleResult, EvalError> {
    let started = Instant::now();
    let resp = pipeline.verify(&VerifyRequest::text(ex.input_text.clone())).await?;
    let latency_ms = started.elapsed().as_secs_f64() * 1000.0;

    let before: Vec<Claim> = resp.verdicts.iter().map(|v| v.claim.clone()).collect();
    let after = if resp.final_text == resp.original_text {
        before.clone()
    } else {
        pipeline.extractor().extract(&resp.final_text)
    };
    let mut predictions = Vec::new();
    let mut samples = Vec::new();
    for v in &resp.verdicts {
        let golds: Vec<&GoldClaim> = ex.gold_claims.iter().filter(|g| g.matches(&v.claim)).collect();
        if golds.is_empty() {
            continue;
        }
        let correct = golds.iter().any(|g| g.value.same_as(&v.claim.object));
        let c = &v.confidence;
        predictions.push((c.gate_value(), correct));
        samples.push(ValidationSample { intrinsic: c.intrinsic, external: c.external, coherence: c.coherence, correct });
    }
    Ok(ExampleResult {
        pre: ex.gold_claims.iter().map(|g| assess(g, &before)).collect(),
        post: ex.gold_claims.iter().map(|g| assess(g, &after)).collect(),
        predictions,
        samples,
        latency_ms,
        bleu: ex.reference_text.as_deref().map(|r| bleu4(&resp.final_text, r)),
    })
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

async fn run_all(corpus: &[LabeledExample], pipeline: &Pipeline) -> Result<Vec<ExampleResult>, EvalError> {
    if corpus.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    stream::iter(corpus)
        .map(|ex| run_example(pipeline, ex))
        .buffered(EVAL_CONCURRENCY)
        .collect::<Vec<_>>()
        .await
        .into_iter()
        .collect()
}

/// Per-claim confidence components labelled against gold, for weight
/// learning and temperature fitting.
pub async fn validation_samples(
    corpus: &[LabeledExample],
    pipeline: &Pipeline,
) -> Result<Vec<ValidationSample>, EvalError> {
    Ok(run_all(corpus, pipeline).await?.into_iter().flat_map(|r| r.samples).collect())
}

/// Run every example through `pipeline` and score the outputs.
pub async fn evaluate_with(corpus: &[LabeledExample], pipeline: &Pipeline) -> Result<EvalReport, EvalError> {
    let results = run_all(corpus, pipeline).await?;

    let count = |f: &dyn Fn(&ExampleResult) -> usize| results.iter().map(f).sum::<usize>();
    let gold = count(&|r| r.pre.len());
    let pre_correct = count(&|r| r.pre.iter().filter(|o| **o == Outcome::Correct).count());
    let post_correct = count(&|r| r.post.iter().filter(|o| **o == Outcome::Correct).count());
    let pre_errors = count(&|r| r.pre.iter().filter(|o| **o == Outcome::Wrong).count());
    let post_errors = count(&|r| r.post.iter().filter(|o| **o == Outcome::Wrong).count());
    let fixed = count(&|r| {
        r.pre
            .iter()
            .zip(&r.post)
            .filter(|(a, b)| **a == Outcome::Wrong && **b == Outcome::Correct)
            .count()
    });

    let predictions: Vec<(f64, bool)> = results.iter().flat_map(|r| r.predictions.iter().copied()).collect();
    let calibration = if predictions.is_empty() {
        None
    } else {
        Some(expected_calibration_error(&predictions, DEFAULT_BINS).map_err(PipelineError::from)?)
    };

    let latencies: Vec<f64> = results.iter().map(|r| r.latency_ms).collect();
    // Sorted before summing so that corpus order cannot change the result.
    let mut bleus: Vec<f64> = results.iter().filter_map(|r| r.bleu).collect();
    bleus.sort_by(f64::total_cmp);

    Ok(EvalReport {
        examples: corpus.len(),
        gold_claims: gold,
        accuracy: ratio(post_correct, gold),
        pre_correction_accuracy: ratio(pre_correct, gold),
        pre_errors,
        post_errors,
        hallucination_reduction: if pre_errors == 0 {
            0.0
        } else {
            1.0 - post_errors as f64 / pre_errors as f64
        },
        errors_fixed: ratio(fixed, pre_errors),
        ece: calibration.as_ref().map_or(0.0, |c| c.ece),
        calibration,
        latency_mean_ms: latencies.iter().sum::<f64>() / latencies.len() as f64,
        latency_p95_ms: percentile(&latencies, 95.0),
        bleu4: (!bleus.is_empty()).then(|| bleus.iter().sum::<f64>() / bleus.len() as f64),
        ablation: Vec::new(),
    })
}

/// Build a pipeline from `config` and evaluate `corpus` with it.
pub async fn evaluate(corpus: &[LabeledExample], config: &Config) -> Result<EvalReport, EvalError> {
    if corpus.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let pipeline = config.build().await?;
    evaluate_with(corpus, &pipeline).await
}

/// Every non-empty subset of `ids`, smallest first, keeping `ids` order
/// within a subset.
pub fn all_subsets(ids: &[String]) -> Vec<Vec<String>> {
    let n = ids.len().min(16);
    let mut subsets: Vec<Vec<usize>> = (1..(1u32 << n))
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    subsets.into_iter().map(|s| s.into_iter().map(|i| ids[i].clone()).collect()).collect()
}

/// Evaluate once per source subset. Rows follow the order of `subsets`.
pub async fn ablate(
    corpus: &[LabeledExample],
    config: &Config,
    subsets: &[Vec<String>],
) -> Result<Vec<AblationRow>, EvalError> {
    if corpus.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    for subset in subsets {
        if subset.is_empty() {
            return Err(EvalError::EmptySubset);
        }
        if let Some(id) = subset.iter().find(|id| !config.sources.iter().any(|s| &s.id == *id)) {
            return Err(EvalError::UnknownSource(id.clone()));
        }
    }
    let mut rows = Vec::with_capacity(subsets.len());
    for subset in subsets {
        let report = evaluate(corpus, &config.with_enabled_sources(subset)?).await?;
        rows.push(AblationRow {
            configuration: subset.join("+"),
            accuracy: report.accuracy,
            hallucination_reduction: report.hallucination_reduction,
            latency_ms: report.latency_mean_ms,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::{extract_claims, AliasTable, ExtractorConfig};
    use std::sync::Arc;

    fn cfg() -> ExtractorConfig {
        let aliases = AliasTable::parse("Q937\tPERSON\tAlbert Einstein\nQ937\tPERSON\tEinstein\n").unwrap();
        ExtractorConfig { aliases: Arc::new(aliases), ..Default::default() }
    }

    fn gold(year: i32, complement: &str) -> GoldClaim {
        GoldClaim {
            subject_id: "Q937".into(),
            predicate: "published".into(),
            value: ClaimValue::year(year),
            complement: Some(complement.into()),
        }
    }

    #[test]
    fn outcomes_follow_complement_specificity() {
        let cfg = cfg();
        let vague = extract_claims("Einstein published relativity in 1920", &cfg);
        assert_eq!(assess(&gold(1905, "special relativity"), &vague), Outcome::Wrong);
        let fixed = extract_claims("Einstein published special relativity in 1905 and general relativity in 1915", &cfg);
        assert_eq!(assess(&gold(1905, "special relativity"), &fixed), Outcome::Correct);
        assert_eq!(assess(&gold(1915, "general relativity"), &fixed), Outcome::Correct);
        let hedged = extract_claims("It is uncertain whether Einstein published relativity in 1920.", &cfg);
        assert_eq!(assess(&gold(1905, "special relativity"), &hedged), Outcome::Missing);
    }

    #[test]
    fn example_label_consistency() {
        let cfg = cfg();
        let ex = LabeledExample {
            input_text: "Einstein published relativity in 1920".into(),
            gold_claims: vec![gold(1905, "special relativity")],
            label: Label::Hallucinated,
            reference_text: None,
        };
        assert!(ex.is_consistent(&extract_claims(&ex.input_text, &cfg)));
        let ok = LabeledExample { label: Label::Factual, ..ex.clone() };
        assert!(!ok.is_consistent(&extract_claims(&ex.input_text, &cfg)));
    }

    #[test]
    fn subsets_are_ordered_by_size() {
        let ids: Vec<String> = ["kg", "web", "db"].iter().map(|s| s.to_string()).collect();
        let names: Vec<String> = all_subsets(&ids).iter().map(|s| s.join("+")).collect();
        assert_eq!(names, ["kg", "web", "db", "kg+web", "kg+db", "web+db", "kg+web+db"]);
    }

    #[test]
    fn csv_shape() {
        let rows = vec![AblationRow {
            configuration: "kg+web".into(),
            accuracy: 0.5,
            hallucination_reduction: 2.0 / 3.0,
            latency_ms: 12.34,
        }];
        assert_eq!(
            ablation_csv(&rows),
            "configuration,accuracy,hallucination_reduction,latency_ms\nkg+web,0.5000,0.6667,12.3\n"
        );
    }
}
