//! Pattern-grammar claim extraction.
//!
//! Three sentence shapes are recognized:
//!
//! * quantities: `X is 300 meters tall`, `X has 2,100,000 inhabitants`
//! * verb + value: `X published Y in 1920`, `X was born in Ulm`, including
//!   conjoined values (`... in 1905 and general relativity in 1915`)
//! * copulas: `X is Y`, optionally qualified by `in <year>`
//!
//! Sentences whose subject is a pronoun are skipped; there is no coreference.

use std::sync::Arc;

use regex::Regex;

use super::{
    AliasTable, Claim, ClaimId, ClaimValue, EntityRef, Slot, Span, Vocabulary, YearRange,
    DEFAULT_LINK_THRESHOLD,
};

/// Turns response text into claims. Implementations must be deterministic.
pub trait Extractor: Send + Sync {
    fn extract(&self, text: &str) -> Vec<Claim>;
}

#[derive(Debug, Clone)]
pub struct ExtractorConfig {
    pub vocabulary: Vocabulary,
    pub aliases: Arc<AliasTable>,
    pub link_threshold: f64,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            vocabulary: Vocabulary::default(),
            aliases: Arc::new(AliasTable::default()),
            link_threshold: DEFAULT_LINK_THRESHOLD,
        }
    }
}

const PRONOUNS: &[&str] = &[
    "he", "her", "him", "i", "it", "one", "she", "that", "there", "these", "they", "this",
    "those", "we", "you",
];
const COPULAS: &[&str] = &["is", "was", "are", "were"];
const MONTHS: &[&str] = &[
    "january", "february", "march", "april", "may", "june", "july", "august", "september",
    "october", "november", "december",
];

#[derive(Debug)]
pub struct PatternExtractor {
    config: ExtractorConfig,
    quantity: Regex,
    verb_value: Regex,
    copular: Regex,
    date_item: Regex,
    bare_year: Regex,
    list_sep: Regex,
    entity_item: Regex,
}

impl PatternExtractor {
    pub fn new(config: ExtractorConfig) -> Self {
        let verbs: Vec<String> = config
            .vocabulary
            .surface_forms()
            .into_iter()
            .filter(|f| !COPULAS.contains(f))
            .map(|f| f.split(' ').map(regex::escape).collect::<Vec<_>>().join(r"\s+"))
            .collect();
        let verb_alt = if verbs.is_empty() {
            r"[a-z]+ed".to_string()
        } else {
            format!(r"(?i:{})|[a-z]+ed", verbs.join("|"))
        };
        let month_alt = MONTHS.join("|");
        Self {
            quantity: Regex::new(
                r"^(?P<subj>.+?)\s+(?P<verb>is|was|are|were|has|had|have)\s+(?:(?:about|approximately|roughly|nearly)\s+)?(?P<num>-?\d[\d,]*(?:\.\d+)?)(?:\s+(?P<unit>[A-Za-z%]+))?(?:\s+(?P<adj>[A-Za-z]+))?$",
            )
            .expect("quantity pattern"),
            verb_value: Regex::new(&format!(
                r"^(?P<subj>.+?)\s+(?:(?:was|were|is|are|has\s+been|had\s+been|has|had|have)\s+)?(?P<verb>{verb_alt})\s+(?P<rest>.+)$"
            ))
            .expect("verb pattern"),
            copular: Regex::new(
                r"^(?P<subj>.+?)\s+(?P<verb>is|was|are|were)\s+(?P<obj>.+?)(?:\s+in\s+(?P<year>-?\d{3,4}))?$",
            )
            .expect("copular pattern"),
            date_item: Regex::new(&format!(
                r"^(?:(?P<obj>.+?)\s+)?in\s+(?:(?i:(?P<month>{month_alt}))\s+)?(?P<year>-?\d{{1,4}})\b"
            ))
            .expect("date item pattern"),
            bare_year: Regex::new(r"^(?P<year>-?\d{1,4})\b").expect("bare year pattern"),
            list_sep: Regex::new(r"^(?:,\s*and|,|\s+and)\s+").expect("separator pattern"),
            entity_item: Regex::new(r"^(?:(?P<obj>.+?)\s+)?in\s+(?P<val>.+)$")
                .expect("entity item pattern"),
            config,
        }
    }

    pub fn config(&self) -> &ExtractorConfig {
        &self.config
    }

    fn link(&self, surface: &str) -> EntityRef {
        let stripped = strip_article(surface);
        let mut e = self.config.aliases.link(stripped, self.config.link_threshold);
        e.surface_form = surface.to_string();
        e
    }

    fn subject_ok(subject: &str) -> bool {
        let s = subject.trim();
        !s.is_empty() && !PRONOUNS.contains(&s.to_lowercase().as_str())
    }

    fn sentence_claims(&self, text: &str, sentence: Span, out: &mut Vec<Claim>) {
        let body = &text[sentence.start..sentence.end];
        let base = sentence.start;
        if let Some(c) = self.match_quantity(body, base) {
            out.push(c);
            return;
        }
        let verb_claims = self.match_verb_value(body, base);
        if !verb_claims.is_empty() {
            out.extend(verb_claims);
            return;
        }
        if let Some(c) = self.match_copular(body, base) {
            out.push(c);
        }
    }

    fn match_quantity(&self, body: &str, base: usize) -> Option<Claim> {
        let caps = self.quantity.captures(body)?;
        let subj = caps.name("subj")?;
        if !Self::subject_ok(subj.as_str()) {
            return None;
        }
        let num = caps.name("num")?;
        let value: f64 = num.as_str().replace(',', "").parse().ok()?;
        let unit = caps.name("unit");
        let adj = caps.name("adj");
        let verb = caps.name("verb")?.as_str();
        let vocab = &self.config.vocabulary;
        let (predicate, verb_surface) = match (adj, unit) {
            (Some(a), _) => (vocab.predicate_for(a.as_str()), a.as_str()),
            (None, Some(u)) if vocab.lookup(u.as_str()).is_some() => {
                (vocab.predicate_for(u.as_str()), u.as_str())
            }
            _ => (vocab.predicate_for(verb), verb),
        };
        let object = ClaimValue::number(value, unit.map(|u| u.as_str())).ok()?;
        let obj_end = unit.map_or(num.end(), |u| u.end());
        Some(Claim {
            id: ClaimId::from_index(0),
            subject: self.link(subj.as_str()),
            predicate,
            verb: verb_surface.to_string(),
            object,
            complement: None,
            temporal_qualifier: None,
            span: Span::new(base, base + body.len()),
            object_span: Span::new(base + num.start(), base + obj_end),
            raw_text: body.to_string(),
        })
    }

    fn match_verb_value(&self, body: &str, base: usize) -> Vec<Claim> {
        let Some(caps) = self.verb_value.captures(body) else {
            return Vec::new();
        };
        let (Some(subj), Some(verb), Some(rest)) =
            (caps.name("subj"), caps.name("verb"), caps.name("rest"))
        else {
            return Vec::new();
        };
        if !Self::subject_ok(subj.as_str()) {
            return Vec::new();
        }
        let subject = self.link(subj.as_str());
        let predicate = self.config.vocabulary.predicate_for(verb.as_str());
        let verb_text = verb.as_str().split_whitespace().collect::<Vec<_>>().join(" ");

        let items = self.parse_value_items(rest.as_str(), base + rest.start());
        if items.is_empty() {
            return Vec::new();
        }
        let mut claims = Vec::with_capacity(items.len());
        let mut inherited: Option<Slot> = None;
        for (i, item) in items.into_iter().enumerate() {
            if item.complement.is_some() {
                inherited = item.complement.clone();
            }
            let start = if i == 0 { base } else { item.start };
            let span = Span::new(start, item.object_span.end);
            claims.push(Claim {
                id: ClaimId::from_index(0),
                subject: subject.clone(),
                predicate: predicate.clone(),
                verb: verb_text.clone(),
                object: item.value,
                complement: item.complement.or_else(|| inherited.clone()),
                temporal_qualifier: None,
                span,
                object_span: item.object_span,
                raw_text: String::new(),
            });
        }
        claims
    }

    /// Parse `Y in 1905 and Z in 1915`, `Y in 1905 and 1915` or `in Ulm`.
    /// Returns no items unless the whole remainder is consumed.
    fn parse_value_items(&self, rest: &str, base: usize) -> Vec<ValueItem> {
        let mut items = Vec::new();
        let mut pos = 0;
        loop {
            let tail = &rest[pos..];
            let item = if items.is_empty() {
                self.date_item.captures(tail)
            } else {
                self.date_item.captures(tail).or_else(|| self.bare_year.captures(tail))
            };
            let Some(caps) = item else { break };
            let year_m = caps.name("year").expect("year group");
            let Ok(year) = year_m.as_str().parse::<i32>() else { break };
            let month = caps
                .name("month")
                .and_then(|m| MONTHS.iter().position(|n| n.eq_ignore_ascii_case(m.as_str())))
                .map(|i| i as u8 + 1);
            let Ok(value) = ClaimValue::date(year, month, None) else { break };
            let obj_start = caps.name("month").map_or(year_m.start(), |m| m.start());
            let complement = caps.name("obj").map(|o| Slot {
                text: o.as_str().to_string(),
                span: Span::new(base + pos + o.start(), base + pos + o.end()),
            });
            items.push(ValueItem {
                start: base + pos,
                complement,
                value,
                object_span: Span::new(base + pos + obj_start, base + pos + year_m.end()),
            });
            pos += year_m.end();
            if pos == rest.len() {
                return items;
            }
            match self.list_sep.find(&rest[pos..]) {
                Some(sep) => pos += sep.end(),
                None => break,
            }
        }
        // Not a date list; try a single entity-valued item.
        let Some(caps) = self.entity_item.captures(rest) else {
            return Vec::new();
        };
        let val = caps.name("val").expect("val group");
        let entity = self.link(val.as_str());
        if !entity.is_linked() {
            return Vec::new();
        }
        vec![ValueItem {
            start: base,
            complement: caps.name("obj").map(|o| Slot {
                text: o.as_str().to_string(),
                span: Span::new(base + o.start(), base + o.end()),
            }),
            value: ClaimValue::Entity(entity),
            object_span: Span::new(base + val.start(), base + val.end()),
        }]
    }

    fn match_copular(&self, body: &str, base: usize) -> Option<Claim> {
        let caps = self.copular.captures(body)?;
        let subj = caps.name("subj")?;
        if !Self::subject_ok(subj.as_str()) {
            return None;
        }
        let obj = caps.name("obj")?;
        let obj_text = obj.as_str().trim();
        if obj_text.is_empty() {
            return None;
        }
        let object = if let Ok(y) = obj_text.parse::<i32>() {
            ClaimValue::date(y, None, None).ok()?
        } else {
            let e = self.link(obj_text);
            if e.is_linked() {
                ClaimValue::Entity(e)
            } else {
                ClaimValue::text(obj_text)
            }
        };
        let temporal_qualifier = caps
            .name("year")
            .and_then(|y| y.as_str().parse::<i32>().ok())
            .map(|y| YearRange { from: y, to: y });
        let verb = caps.name("verb")?.as_str();
        Some(Claim {
            id: ClaimId::from_index(0),
            subject: self.link(subj.as_str()),
            predicate: self.config.vocabulary.predicate_for(verb),
            verb: verb.to_string(),
            object,
            complement: None,
            temporal_qualifier,
            span: Span::new(base, base + body.len()),
            object_span: Span::new(base + obj.start(), base + obj.end()),
            raw_text: body.to_string(),
        })
    }
}

struct ValueItem {
    start: usize,
    complement: Option<Slot>,
    value: ClaimValue,
    object_span: Span,
}

impl Extractor for PatternExtractor {
    fn extract(&self, text: &str) -> Vec<Claim> {
        let mut claims = Vec::new();
        for sentence in sentences(text) {
            self.sentence_claims(text, sentence, &mut claims);
        }
        for (i, c) in claims.iter_mut().enumerate() {
            c.id = ClaimId::from_index(i);
            c.raw_text = text[c.span.start..c.span.end].to_string();
        }
        claims
    }
}

/// Extract with a freshly built [`PatternExtractor`].
pub fn extract_claims(response_text: &str, extractor_config: &ExtractorConfig) -> Vec<Claim> {
    PatternExtractor::new(extractor_config.clone()).extract(response_text)
}

fn strip_article(s: &str) -> &str {
    let trimmed = s.trim();
    for article in ["the ", "a ", "an "] {
        if trimmed.len() > article.len()
            && trimmed.get(..article.len()).is_some_and(|h| h.eq_ignore_ascii_case(article))
        {
            return trimmed[article.len()..].trim_start();
        }
    }
    trimmed
}

/// Sentence bodies: terminal punctuation, surrounding whitespace and a
/// trailing parenthetical are excluded from the span.
pub(crate) fn sentences(text: &str) -> Vec<Span> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let boundary = match b {
            b'.' | b'!' | b'?' => bytes.get(i + 1).is_none_or(|n| n.is_ascii_whitespace()),
            b'\n' => true,
            _ => false,
        };
        if boundary {
            push_sentence(text, start, i, &mut out);
            start = i + 1;
        }
        i += 1;
    }
    push_sentence(text, start, text.len(), &mut out);
    out
}

fn push_sentence(text: &str, start: usize, end: usize, out: &mut Vec<Span>) {
    let raw = &text[start..end];
    let lead = raw.len() - raw.trim_start().len();
    let mut body = raw.trim();
    // Drop a trailing "(...)" group, e.g. an attribution note.
    if body.ends_with(')') {
        if let Some(open) = body.rfind('(') {
            body = body[..open].trim_end();
        }
    }
    let body = body.trim_end_matches([',', ';', ':']).trim_end();
    if !body.is_empty() {
        out.push(Span::new(start + lead, start + lead + body.len()));
    }
}
