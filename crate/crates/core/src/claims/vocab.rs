use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use thiserror::Error;

/// Label given to relations whose verb is not in the vocabulary.
pub const UNKNOWN_PREDICATE: &str = "related_to";

pub const DEFAULT_VOCABULARY: &str = "\
# predicate [multi] = surface forms
published [multi] = published, publishes, put out, released, releases
discovered [multi] = discovered, discovers
invented [multi] = invented, invents
won [multi] = won, wins, received
founded = founded, founds, established
born = born
died = died
height = tall, high
length = long
population = inhabitants, residents, people
is = is, was, are, were
";

#[derive(Debug, Error)]
pub enum VocabularyError {
    #[error("reading vocabulary {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("vocabulary line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Closed predicate vocabulary: surface verb -> normalized predicate.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    surface: BTreeMap<String, String>,
    multi_valued: BTreeSet<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::parse(DEFAULT_VOCABULARY).expect("built-in vocabulary parses")
    }
}

impl Vocabulary {
    pub fn load(path: &Path) -> Result<Self, VocabularyError> {
        let text = std::fs::read_to_string(path).map_err(|source| VocabularyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, VocabularyError> {
        let mut surface = BTreeMap::new();
        let mut multi_valued = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: &str| VocabularyError::Parse {
                line: i + 1,
                message: message.to_string(),
            };
            let (lhs, rhs) = line.split_once('=').ok_or_else(|| err("missing '='"))?;
            let mut lhs = lhs.trim();
            let multi = lhs.ends_with("[multi]");
            if multi {
                lhs = lhs.trim_end_matches("[multi]").trim();
            }
            if lhs.is_empty() || lhs.contains(char::is_whitespace) {
                return Err(err("predicate label must be a single word"));
            }
            let predicate = lhs.to_lowercase();
            if multi {
                multi_valued.insert(predicate.clone());
            }
            for form in rhs.split(',').map(|f| f.trim().to_lowercase()).filter(|f| !f.is_empty()) {
                let form = form.split_whitespace().collect::<Vec<_>>().join(" ");
                if let Some(prev) = surface.insert(form.clone(), predicate.clone()) {
                    if prev != predicate {
                        return Err(err(&format!("surface form {form:?} mapped twice")));
                    }
                }
            }
        }
        Ok(Self { surface, multi_valued })
    }

    pub fn lookup(&self, surface: &str) -> Option<&str> {
        let key = surface.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        self.surface.get(&key).map(String::as_str)
    }

    /// Normalized label for a surface verb, `related_to` when unknown.
    pub fn predicate_for(&self, surface: &str) -> String {
        self.lookup(surface).unwrap_or(UNKNOWN_PREDICATE).to_string()
    }

    pub fn is_multi_valued(&self, predicate: &str) -> bool {
        self.multi_valued.contains(predicate)
    }

    /// Surface forms, longest first so alternations prefer multi-word verbs.
    pub fn surface_forms(&self) -> Vec<&str> {
        let mut forms: Vec<&str> = self.surface.keys().map(String::as_str).collect();
        forms.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        forms
    }

    pub fn predicates(&self) -> BTreeSet<&str> {
        self.surface.values().map(String::as_str).collect()
    }
}
