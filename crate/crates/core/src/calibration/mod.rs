//! Confidence ensemble, calibration error and weight learning.

mod confidence;
mod ece;
mod learn;
mod temperature;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use confidence::{
    coherence_score, combine_confidence, external_confidence, intrinsic_confidence,
    ConfidenceBreakdown, Intrinsic, IntrinsicInputs, IntrinsicProvider, NEUTRAL_CONFIDENCE,
};
pub use ece::{expected_calibration_error, BinStat, CalibrationReport, ReliabilityPoint, DEFAULT_BINS};
pub use learn::{accuracy_at, learn_weights, simplex_grid, ValidationSample, DEFAULT_GRID_STEP};
pub use temperature::{apply_temperature, fit_temperature};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CalibrationError {
    #[error("weights ({0}, {1}, {2}) are not on the simplex")]
    WeightsOffSimplex(f64, f64, f64),
    #[error("empty input")]
    EmptyInput,
    #[error("bin count must be at least 1")]
    NoBins,
    #[error("confidence {0} outside [0,1]")]
    ConfidenceOutOfRange(f64),
    #[error("grid step {0} does not divide 1")]
    BadGridStep(f64),
}

/// Ensemble weights (alpha, beta, gamma) for intrinsic, external and
/// coherence components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { alpha: 0.3, beta: 0.5, gamma: 0.2 }
    }
}

impl Weights {
    pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, CalibrationError> {
        let w = Self { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let parts = [self.alpha, self.beta, self.gamma];
        let on_simplex = parts.iter().all(|v| *v >= 0.0 && v.is_finite())
            && (parts.iter().sum::<f64>() - 1.0).abs() <= Self::SIMPLEX_TOLERANCE;
        if on_simplex {
            Ok(())
        } else {
            Err(CalibrationError::WeightsOffSimplex(self.alpha, self.beta, self.gamma))
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }
}
