//! Small text utilities shared by extraction, linking, retrieval and scoring.

use std::collections::{BTreeSet, HashMap};

const STOP_WORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "been", "but", "by", "for", "from", "had", "has",
    "have", "he", "her", "his", "in", "into", "is", "it", "its", "of", "on", "or", "she", "that",
    "the", "their", "them", "then", "there", "these", "they", "this", "those", "to", "was", "were",
    "which", "while", "who", "will", "with",
];

pub fn is_stop_word(token: &str) -> bool {
    STOP_WORDS.binary_search(&token).is_ok()
}

/// Lowercased alphanumeric runs.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Lowercased alphanumeric runs with stop words removed.
pub fn content_tokens(text: &str) -> Vec<String> {
    tokens(text).into_iter().filter(|t| !is_stop_word(t)).collect()
}

/// Case-fold, drop punctuation, collapse whitespace.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text
        .split(|c: char| c.is_whitespace())
        .map(|w| w.chars().filter(|c| c.is_alphanumeric()).collect::<String>())
        .filter(|w| !w.is_empty())
    {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&word.to_lowercase());
    }
    out
}

/// Character trigrams of an already-normalized string. Strings shorter than
/// three characters yield themselves as a single gram.
pub fn trigrams(normalized: &str) -> BTreeSet<String> {
    let chars: Vec<char> = normalized.chars().collect();
    if chars.is_empty() {
        return BTreeSet::new();
    }
    if chars.len() < 3 {
        return BTreeSet::from([normalized.to_string()]);
    }
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Cosine similarity between term-frequency vectors.
pub fn tf_cosine(a: &[String], b: &[String]) -> f64 {
    let (ta, tb) = (term_frequencies(a), term_frequencies(b));
    let dot: f64 = ta
        .iter()
        .filter_map(|(k, va)| tb.get(k).map(|vb| va * vb))
        .sum();
    let na = ta.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb = tb.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

fn term_frequencies(toks: &[String]) -> HashMap<&str, f64> {
    let mut m: HashMap<&str, f64> = HashMap::new();
    for t in toks {
        *m.entry(t.as_str()).or_default() += 1.0;
    }
    m
}

/// True when every content token of `needle` occurs in `haystack`.
pub fn covers_terms(haystack: &str, needle: &str) -> bool {
    let hay: BTreeSet<String> = content_tokens(haystack).into_iter().collect();
    content_tokens(needle).iter().all(|t| hay.contains(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stop_words_are_sorted_for_binary_search() {
        let mut sorted = STOP_WORDS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, STOP_WORDS);
    }

    #[test]
    fn normalize_strips_punctuation_and_case() {
        assert_eq!(normalize("  Albert   EINSTEIN, Jr. "), "albert einstein jr");
        assert_eq!(normalize("..."), "");
    }

    #[test]
    fn trigram_sets() {
        let t = trigrams("einstein");
        assert_eq!(t.len(), 5);
        assert!(t.contains("tei"));
        assert_eq!(trigrams("ab").len(), 1);
        assert!(trigrams("").is_empty());
    }

    #[test]
    fn cosine_extremes() {
        let a = content_tokens("Einstein published relativity");
        assert!((tf_cosine(&a, &a) - 1.0).abs() < 1e-12);
        let b = content_tokens("bananas grow slowly");
        assert_eq!(tf_cosine(&a, &b), 0.0);
        assert_eq!(tf_cosine(&a, &[]), 0.0);
    }
}
