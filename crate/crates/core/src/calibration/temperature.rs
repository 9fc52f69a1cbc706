//! Post-hoc temperature scaling of combined confidence.

const EPS: f64 = 1e-6;
const LOG_T_RANGE: (f64, f64) = (-3.0, 3.0);

fn logit(p: f64) -> f64 {
    let p = p.clamp(EPS, 1.0 - EPS);
    (p / (1.0 - p)).ln()
}

/// `sigmoid(logit(p) / t)`.
pub fn apply_temperature(p: f64, t: f64) -> f64 {
    1.0 / (1.0 + (-logit(p) / t).exp())
}

fn nll(preds: &[(f64, bool)], t: f64) -> f64 {
    preds
        .iter()
        .map(|&(p, y)| {
            let q = apply_temperature(p, t).clamp(EPS, 1.0 - EPS);
            if y {
                -q.ln()
            } else {
                -(1.0 - q).ln()
            }
        })
        .sum()
}

/// Temperature minimizing negative log-likelihood, found by golden-section
/// search over `ln t` in [-3, 3]. Returns 1 for empty input.
pub fn fit_temperature(preds: &[(f64, bool)]) -> f64 {
    if preds.is_empty() {
        return 1.0;
    }
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let f = |x: f64| nll(preds, x.exp());
    let (mut a, mut b) = LOG_T_RANGE;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-9 {
            break;
        }
    }
    ((a + b) / 2.0).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_at_one() {
        for p in [0.1, 0.5, 0.93] {
            assert!((apply_temperature(p, 1.0) - p).abs() < 1e-9);
        }
    }

    #[test]
    fn overconfident_predictions_get_cooled() {
        // Stated 0.9 but only 60% correct: the fit should soften.
        let preds: Vec<(f64, bool)> = (0..100).map(|i| (0.9, i % 5 < 3)).collect();
        let t = fit_temperature(&preds);
        assert!(t > 1.0);
        assert!((apply_temperature(0.9, t) - 0.6).abs() < 1e-3);
        // Brute-force check of the minimizer.
        let grid_best = (1..600)
            .map(|i| i as f64 / 100.0)
            .min_by(|a, b| nll(&preds, *a).total_cmp(&nll(&preds, *b)))
            .unwrap();
        assert!((t - grid_best).abs() < 0.01);
    }
}
