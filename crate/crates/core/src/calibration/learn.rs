use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{expected_calibration_error, CalibrationError, Weights, DEFAULT_BINS};

pub const DEFAULT_GRID_STEP: f64 = 0.05;

/// ECE values closer than this are treated as equal.
const ECE_TIE: f64 = 1e-12;

/// One labelled row of a calibration set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationSample {
    pub intrinsic: f64,
    pub external: f64,
    pub coherence: f64,
    pub correct: bool,
}

impl ValidationSample {
    fn combined(&self, w: &Weights) -> f64 {
        (w.alpha * self.intrinsic + w.beta * self.external + w.gamma * self.coherence).clamp(0.0, 1.0)
    }
}

/// All simplex points with coordinates that are multiples of `step`, in
/// lexicographic order of (alpha, beta).
pub fn simplex_grid(step: f64) -> Result<Vec<Weights>, CalibrationError> {
    let n = (1.0 / step).round();
    if !(step > 0.0) || n < 1.0 || (n * step - 1.0).abs() > 1e-9 {
        return Err(CalibrationError::BadGridStep(step));
    }
    let n = n as u32;
    let mut out = Vec::with_capacity(((n + 1) * (n + 2) / 2) as usize);
    for i in 0..=n {
        for j in 0..=n - i {
            let k = n - i - j;
            out.push(Weights {
                alpha: f64::from(i) / f64::from(n),
                beta: f64::from(j) / f64::from(n),
                gamma: f64::from(k) / f64::from(n),
            });
        }
    }
    Ok(out)
}

/// Fraction of samples where `combined > tau` agrees with `correct`.
pub fn accuracy_at(samples: &[ValidationSample], weights: &Weights, tau: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().filter(|s| (s.combined(weights) > tau) == s.correct).count() as f64 / samples.len() as f64
}

/// Exhaustive grid search for the weights with the lowest ECE. Ties go to
/// the higher gate accuracy at `tau`, then to the lexicographically smallest
/// weights. Grid points are scored in parallel; the reduction is sequential
/// so the answer does not depend on scheduling.
pub fn learn_weights(
    samples: &[ValidationSample],
    grid_step: f64,
    tau: f64,
) -> Result<Weights, CalibrationError> {
    if samples.is_empty() {
        return Err(CalibrationError::EmptyInput);
    }
    let grid = simplex_grid(grid_step)?;
    let scored: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|w| {
            let preds: Vec<(f64, bool)> = samples.iter().map(|s| (s.combined(w), s.correct)).collect();
            let ece = expected_calibration_error(&preds, DEFAULT_BINS).map(|r| r.ece);
            ece.map(|e| (e, accuracy_at(samples, w, tau)))
        })
        .collect::<Result<_, _>>()?;
    let mut best = 0;
    for (i, &(ece, acc)) in scored.iter().enumerate().skip(1) {
        let (best_ece, best_acc) = scored[best];
        if ece < best_ece - ECE_TIE || ((ece - best_ece).abs() <= ECE_TIE && acc > best_acc) {
            best = i;
        }
    }
    Ok(grid[best])
}
