//! Sentence-level BLEU-4 with uniform weights and no smoothing.

use std::collections::HashMap;

fn ngrams<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// BLEU-4 of `candidate` against a single `reference`, tokenized on
/// whitespace. Any n-gram order with zero matches yields 0.
pub fn bleu4(candidate: &str, reference: &str) -> f64 {
    let cand: Vec<&str> = candidate.split_whitespace().collect();
    let refr: Vec<&str> = reference.split_whitespace().collect();
    if cand.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let total = cand.len().saturating_sub(n - 1);
        if total == 0 {
            return 0.0;
        }
        let ref_counts = ngrams(&refr, n);
        let matched: usize = ngrams(&cand, n)
            .iter()
            .map(|(g, c)| (*c).min(ref_counts.get(g).copied().unwrap_or(0)))
            .sum();
        if matched == 0 {
            return 0.0;
        }
        log_sum += 0.25 * (matched as f64 / total as f64).ln();
    }
    let (c, r) = (cand.len() as f64, refr.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * log_sum.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_empty() {
        let s = "the cat sat on the mat today";
        assert_eq!(bleu4(s, s), 1.0);
        assert_eq!(bleu4("", s), 0.0);
        assert_eq!(bleu4("the cat", "the cat"), 0.0);
    }

    #[test]
    fn hand_computed_pair() {
        // Candidate and reference of 10 tokens each; they differ only in the
        // seventh token. Matches by order: 9/10, 7/9, 5/8, 3/7. Equal
        // lengths, so no brevity penalty.
        let reference = "a b c d e f g h i j";
        let candidate = "a b c d e f x h i j";
        let expected = (0.9f64 * (7.0 / 9.0) * (5.0 / 8.0) * (3.0 / 7.0)).powf(0.25);
        assert!((bleu4(candidate, reference) - expected).abs() < 1e-12);
    }

    #[test]
    fn short_candidate_is_penalized() {
        let reference = "one two three four five six seven eight";
        let candidate = "one two three four";
        // All n-gram precisions are 1; BP = exp(1 - 8/4).
        assert!((bleu4(candidate, reference) - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn clipping_limits_repeats() {
        // Unigram precision is clipped to 2/6, but 2-grams never match.
        assert_eq!(bleu4("the the the the the the", "the cat the dog"), 0.0);
    }
}
