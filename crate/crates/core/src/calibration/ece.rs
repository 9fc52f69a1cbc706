use serde::{Deserialize, Serialize};

use super::{CalibrationError, Weights};

pub const DEFAULT_BINS: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_confidence: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityPoint {
    pub bin_mid: f64,
    pub mean_conf: f64,
    pub accuracy: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub bin_edges: Vec<f64>,
    pub bins: Vec<BinStat>,
    pub ece: f64,
    pub samples: usize,
    /// Points for non-empty bins only.
    pub reliability: Vec<ReliabilityPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learned_weights: Option<Weights>,
}

impl CalibrationReport {
    /// `bin_mid,mean_conf,accuracy,count` rows with a header line.
    pub fn reliability_csv(&self) -> String {
        let mut out = String::from("bin_mid,mean_conf,accuracy,count\n");
        for p in &self.reliability {
            out.push_str(&format!("{:.6},{:.6},{:.6},{}\n", p.bin_mid, p.mean_conf, p.accuracy, p.count));
        }
        out
    }
}

/// Equal-width binning on [0,1]; a confidence of exactly 1 falls in the last
/// bin. The result does not depend on the order of `predictions`.
pub fn expected_calibration_error(
    predictions: &[(f64, bool)],
    bins: usize,
) -> Result<CalibrationReport, CalibrationError> {
    if bins == 0 {
        return Err(CalibrationError::NoBins);
    }
    if predictions.is_empty() {
        return Err(CalibrationError::EmptyInput);
    }
    if let Some(&(c, _)) = predictions.iter().find(|(c, _)| !(0.0..=1.0).contains(c)) {
        return Err(CalibrationError::ConfidenceOutOfRange(c));
    }
    // Sum in a canonical order so that permutations give bit-identical output.
    let mut sorted = predictions.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut sums = vec![(0usize, 0.0f64, 0usize); bins];
    for (c, correct) in sorted {
        let idx = ((c * bins as f64).floor() as usize).min(bins - 1);
        let s = &mut sums[idx];
        s.0 += 1;
        s.1 += c;
        s.2 += usize::from(correct);
    }
    let n = predictions.len() as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    let mut ece = 0.0;
    let mut stats = Vec::with_capacity(bins);
    let mut reliability = Vec::new();
    for (i, &(count, conf_sum, hits)) in sums.iter().enumerate() {
        let (mean_confidence, accuracy) = if count == 0 {
            (0.0, 0.0)
        } else {
            (conf_sum / count as f64, hits as f64 / count as f64)
        };
        if count > 0 {
            ece += count as f64 / n * (mean_confidence - accuracy).abs();
            reliability.push(ReliabilityPoint {
                bin_mid: (edges[i] + edges[i + 1]) / 2.0,
                mean_conf: mean_confidence,
                accuracy,
                count,
            });
        }
        stats.push(BinStat { lower: edges[i], upper: edges[i + 1], count, mean_confidence, accuracy });
    }
    Ok(CalibrationReport {
        bin_edges: edges,
        bins: stats,
        ece,
        samples: predictions.len(),
        reliability,
        learned_weights: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn golden_ten_samples() {
        // Five bins of width 0.2.
        // bin 0: 0.10(F) 0.15(F)          mean 0.125 acc 0
        // bin 2: 0.45(T) 0.55(F)          mean 0.50  acc 0.5
        // bin 3: 0.65(T) 0.70(T) 0.75(F)  mean 0.70  acc 2/3
        // bin 4: 0.85(T) 0.95(T) 1.00(T)  mean 0.9333 acc 1
        let preds = [
            (0.10, false),
            (0.15, false),
            (0.45, true),
            (0.55, false),
            (0.65, true),
            (0.70, true),
            (0.75, false),
            (0.85, true),
            (0.95, true),
            (1.00, true),
        ];
        let r = expected_calibration_error(&preds, 5).unwrap();
        let expected = 0.2 * 0.125 + 0.2 * 0.0 + 0.3 * (0.7 - 2.0 / 3.0) + 0.3 * (1.0 - 2.8 / 3.0);
        assert!((r.ece - expected).abs() < 1e-12, "{} vs {expected}", r.ece);
        assert_eq!(r.bins.iter().map(|b| b.count).collect::<Vec<_>>(), vec![2, 0, 2, 3, 3]);
        assert_eq!(r.reliability.len(), 4);
    }

    #[test]
    fn degenerate_cases() {
        let perfect = expected_calibration_error(&[(1.0, true); 7], 15).unwrap();
        assert_eq!(perfect.ece, 0.0);
        let preds = [(0.2, true), (0.9, false), (0.4, true)];
        let one = expected_calibration_error(&preds, 1).unwrap();
        assert!((one.ece - (0.5f64 - 2.0 / 3.0).abs()).abs() < 1e-12);
        assert_eq!(expected_calibration_error(&[], 15), Err(CalibrationError::EmptyInput));
        assert_eq!(expected_calibration_error(&[(1.2, true)], 15), Err(CalibrationError::ConfidenceOutOfRange(1.2)));
        assert!(one.reliability_csv().starts_with("bin_mid,mean_conf,accuracy,count\n0.500000,"));
    }

    proptest! {
        #[test]
        fn permutation_invariant(preds in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..60), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = preds.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = expected_calibration_error(&preds, 15).unwrap();
            let b = expected_calibration_error(&shuffled, 15).unwrap();
            prop_assert_eq!(a.ece.to_bits(), b.ece.to_bits());
            prop_assert_eq!(a.bins.iter().map(|b| b.count).sum::<usize>(), preds.len());
        }
    }
}
