//! JSON-lines batch processing.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Pipeline, VerifyRequest};
use crate::correction::Strategy;

/// Requests processed concurrently; output order always follows input order.
const BATCH_CONCURRENCY: usize = 8;

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} line {line}: {source}")]
    Read { path: PathBuf, line: usize, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub lines: usize,
    pub processed: usize,
    pub failed: Vec<LineError>,
    pub mean_e_score: f64,
    pub latency_p50_ms: f64,
    pub latency_p95_ms: f64,
    pub corrections: BTreeMap<Strategy, usize>,
    pub rolled_back: usize,
    pub unverified: usize,
}

/// Nearest-rank percentile of unsorted samples; 0 for no samples.
pub fn percentile(samples: &[f64], p: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * s.len() as f64).ceil().max(1.0) as usize;
    s[rank.min(s.len()) - 1]
}

/// Verify every non-blank line of `input`, writing one JSON object per line
/// to `output`. Lines that fail to parse produce an error object and are
/// listed in the summary.
pub async fn run_batch(pipeline: &Pipeline, input: &Path, output: &Path) -> Result<BatchSummary, BatchError> {
    let file = std::fs::File::open(input).map_err(|source| BatchError::Io { path: input.into(), source })?;
    let mut requests = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| BatchError::Read { path: input.into(), line: i + 1, source })?;
        if line.trim().is_empty() {
            continue;
        }
        requests.push((i + 1, serde_json::from_str::<VerifyRequest>(&line)));
    }

    let results: Vec<_> = stream::iter(requests)
        .map(|(line, parsed)| async move {
            match parsed {
                Err(e) => (line, Err(e.to_string())),
                Ok(req) => {
                    let t = Instant::now();
                    let r = pipeline.verify(&req).await.map_err(|e| e.to_string());
                    (line, r.map(|resp| (resp, t.elapsed().as_secs_f64() * 1e3)))
                }
            }
        })
        .buffered(BATCH_CONCURRENCY)
        .collect()
        .await;

    let out = std::fs::File::create(output).map_err(|source| BatchError::Io { path: output.into(), source })?;
    let mut out = BufWriter::new(out);
    let io = |source| BatchError::Io { path: output.into(), source };
    let mut summary = BatchSummary { lines: results.len(), ..Default::default() };
    let mut latencies = Vec::new();
    let mut e_sum = 0.0;
    for (line, result) in results {
        match result {
            Ok((resp, latency)) => {
                writeln!(out, "{}", resp.to_json()).map_err(io)?;
                summary.processed += 1;
                e_sum += resp.e_score;
                latencies.push(latency);
                summary.rolled_back += usize::from(resp.rolled_back);
                summary.unverified += usize::from(resp.unverified);
                for c in &resp.corrections {
                    *summary.corrections.entry(c.strategy).or_default() += 1;
                }
            }
            Err(message) => {
                let err = serde_json::json!({"line": line, "error": message});
                writeln!(out, "{err}").map_err(io)?;
                summary.failed.push(LineError { line, message });
            }
        }
    }
    out.flush().map_err(io)?;
    if summary.processed > 0 {
        summary.mean_e_score = e_sum / summary.processed as f64;
    }
    summary.latency_p50_ms = percentile(&latencies, 50.0);
    summary.latency_p95_ms = percentile(&latencies, 95.0);
    Ok(summary)
}
