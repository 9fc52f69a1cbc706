//! Claim data model, entity linking and deterministic claim extraction.

mod alias;
mod extract;
mod vocab;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use alias::{link_entity, AliasTable, AliasTableError, DEFAULT_LINK_THRESHOLD};
pub use extract::{extract_claims, Extractor, ExtractorConfig, PatternExtractor};
pub use vocab::{Vocabulary, VocabularyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntityKind {
    Person,
    Org,
    Place,
    Work,
    Theory,
    Other,
}

impl std::str::FromStr for EntityKind {
    type Err = ValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "PERSON" => Self::Person,
            "ORG" => Self::Org,
            "PLACE" => Self::Place,
            "WORK" => Self::Work,
            "THEORY" => Self::Theory,
            "OTHER" | "" => Self::Other,
            other => return Err(ValueError::UnknownKind(other.to_string())),
        })
    }
}

/// A mention resolved (or not) against the alias table.
///
/// `canonical_id` is empty exactly when `link_score` is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRef {
    pub canonical_id: String,
    pub surface_form: String,
    pub kind: EntityKind,
    pub link_score: f64,
}

impl EntityRef {
    pub fn unlinked(surface_form: impl Into<String>) -> Self {
        Self {
            canonical_id: String::new(),
            surface_form: surface_form.into(),
            kind: EntityKind::Other,
            link_score: 0.0,
        }
    }

    pub fn is_linked(&self) -> bool {
        !self.canonical_id.is_empty()
    }

    /// Identifier used for lookups: the canonical id when linked, otherwise the
    /// normalized surface form.
    pub fn lookup_key(&self) -> String {
        if self.is_linked() {
            self.canonical_id.clone()
        } else {
            crate::text::normalize(&self.surface_form)
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ValueError {
    #[error("year {0} outside [-9999, 9999]")]
    YearOutOfRange(i32),
    #[error("invalid month {0}")]
    InvalidMonth(u8),
    #[error("invalid day {0}")]
    InvalidDay(u8),
    #[error("number is not finite")]
    NonFinite,
    #[error("cannot parse {kind} value {raw:?}")]
    Unparseable { kind: &'static str, raw: String },
    #[error("unknown value type {0:?}")]
    UnknownType(String),
    #[error("unknown entity kind {0:?}")]
    UnknownKind(String),
}

/// Object of a claim triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClaimValue {
    Date {
        year: i32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        month: Option<u8>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        day: Option<u8>,
    },
    Number {
        value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unit: Option<String>,
    },
    Entity(EntityRef),
    Text {
        text: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueKind {
    Date,
    Number,
    Entity,
    Text,
}

impl ClaimValue {
    pub fn year(year: i32) -> Self {
        Self::Date { year, month: None, day: None }
    }

    pub fn date(year: i32, month: Option<u8>, day: Option<u8>) -> Result<Self, ValueError> {
        if !(-9999..=9999).contains(&year) {
            return Err(ValueError::YearOutOfRange(year));
        }
        if let Some(m) = month {
            if !(1..=12).contains(&m) {
                return Err(ValueError::InvalidMonth(m));
            }
        }
        if let Some(d) = day {
            if !(1..=31).contains(&d) {
                return Err(ValueError::InvalidDay(d));
            }
        }
        Ok(Self::Date { year, month, day })
    }

    pub fn number(value: f64, unit: Option<&str>) -> Result<Self, ValueError> {
        if !value.is_finite() {
            return Err(ValueError::NonFinite);
        }
        Ok(Self::Number {
            value,
            unit: unit.map(|u| u.trim().to_lowercase()).filter(|u| !u.is_empty()),
        })
    }

    pub fn text(text: impl Into<String>) -> Self {
        Self::Text { text: text.into() }
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            Self::Date { .. } => ValueKind::Date,
            Self::Number { .. } => ValueKind::Number,
            Self::Entity(_) => ValueKind::Entity,
            Self::Text { .. } => ValueKind::Text,
        }
    }

    /// Identity used for distribution keys and equality checks.
    ///
    /// Dates compare at year granularity; entities by canonical id when
    /// linked; text by normalized form.
    pub fn key(&self) -> String {
        match self {
            Self::Date { year, .. } => format!("date:{year}"),
            Self::Number { value, unit } => {
                format!("number:{}|{}", value, unit.as_deref().unwrap_or(""))
            }
            Self::Entity(e) => format!("entity:{}", e.lookup_key()),
            Self::Text { text } => format!("text:{}", crate::text::normalize(text)),
        }
    }

    pub fn same_as(&self, other: &ClaimValue) -> bool {
        self.key() == other.key()
    }

    /// Surface rendering used when substituting values into text.
    pub fn render(&self) -> String {
        match self {
            Self::Date { year, .. } => year.to_string(),
            Self::Number { value, unit } => {
                let v = if value.fract() == 0.0 && value.abs() < 1e15 {
                    format!("{}", *value as i64)
                } else {
                    format!("{value}")
                };
                match unit {
                    Some(u) => format!("{v} {u}"),
                    None => v,
                }
            }
            Self::Entity(e) => e.surface_form.clone(),
            Self::Text { text } => text.clone(),
        }
    }

    /// Total order for presenting value sets: chronological for dates,
    /// numeric for numbers, otherwise by key.
    pub fn display_cmp(&self, other: &ClaimValue) -> Ordering {
        match (self, other) {
            (
                Self::Date { year: a, month: am, day: ad },
                Self::Date { year: b, month: bm, day: bd },
            ) => (a, am, ad).cmp(&(b, bm, bd)),
            (Self::Number { value: a, .. }, Self::Number { value: b, .. }) => a.total_cmp(b),
            _ => self.key().cmp(&other.key()),
        }
    }

    /// Parse a `(type, value)` pair as found in the KG file and HTTP hits.
    /// Entity values are resolved against `aliases`.
    pub fn parse_typed(
        value_type: &str,
        raw: &str,
        aliases: &AliasTable,
    ) -> Result<Self, ValueError> {
        let raw = raw.trim();
        match value_type.trim().to_ascii_lowercase().as_str() {
            "date" | "year" => parse_date(raw),
            "number" | "quantity" => {
                let mut parts = raw.splitn(2, char::is_whitespace);
                let num = parts.next().unwrap_or_default().replace(',', "");
                let value: f64 = num.parse().map_err(|_| ValueError::Unparseable {
                    kind: "number",
                    raw: raw.to_string(),
                })?;
                Self::number(value, parts.next())
            }
            "entity" => Ok(Self::Entity(aliases.resolve(raw))),
            "text" => Ok(Self::text(raw)),
            other => Err(ValueError::UnknownType(other.to_string())),
        }
    }
}

fn parse_date(raw: &str) -> Result<ClaimValue, ValueError> {
    let bad = || ValueError::Unparseable { kind: "date", raw: raw.to_string() };
    let (neg, body) = match raw.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, raw),
    };
    let mut parts = body.split('-');
    let year: i32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    let month = parts.next().map(|m| m.parse::<u8>().map_err(|_| bad())).transpose()?;
    let day = parts.next().map(|d| d.parse::<u8>().map_err(|_| bad())).transpose()?;
    if parts.next().is_some() {
        return Err(bad());
    }
    ClaimValue::date(if neg { -year } else { year }, month, day)
}

impl fmt::Display for ClaimValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Half-open byte range `[start, end)` into the response text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Inclusive year interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct YearRange {
    pub from: i32,
    pub to: i32,
}

/// Text slot inside a claim, e.g. the work "relativity" in
/// "Einstein published relativity in 1920".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub text: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClaimId(pub String);

impl ClaimId {
    pub fn from_index(i: usize) -> Self {
        Self(format!("c{i}"))
    }
}

impl fmt::Display for ClaimId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One verifiable assertion extracted from a response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: ClaimId,
    pub subject: EntityRef,
    /// Normalized relation label from the vocabulary.
    pub predicate: String,
    /// Relation as written in the text.
    pub verb: String,
    pub object: ClaimValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complement: Option<Slot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal_qualifier: Option<YearRange>,
    pub span: Span,
    pub object_span: Span,
    pub raw_text: String,
}

impl Claim {
    /// Search string sent to retrieval backends. The asserted value is left
    /// out so that retrieval is not biased towards it.
    pub fn query_text(&self) -> String {
        let mut q = format!("{} {}", self.subject.surface_form, self.verb);
        if let Some(c) = &self.complement {
            q.push(' ');
            q.push_str(&c.text);
        }
        q
    }

    pub fn complement_text(&self) -> Option<&str> {
        self.complement.as_ref().map(|c| c.text.as_str())
    }

    /// Year used for temporal filtering of knowledge-graph facts.
    pub fn as_of(&self) -> Option<i32> {
        self.temporal_qualifier.map(|q| q.from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn date_bounds() {
        assert!(ClaimValue::date(9999, None, None).is_ok());
        assert_eq!(ClaimValue::date(10000, None, None), Err(ValueError::YearOutOfRange(10000)));
        assert_eq!(ClaimValue::date(1905, Some(13), None), Err(ValueError::InvalidMonth(13)));
    }

    #[test]
    fn number_must_be_finite() {
        assert_eq!(ClaimValue::number(f64::NAN, None), Err(ValueError::NonFinite));
        assert_eq!(ClaimValue::number(f64::INFINITY, Some("m")), Err(ValueError::NonFinite));
    }

    #[test]
    fn keys_compare_dates_by_year() {
        let a = ClaimValue::date(1905, Some(6), Some(30)).unwrap();
        assert!(a.same_as(&ClaimValue::year(1905)));
        assert!(!a.same_as(&ClaimValue::year(1915)));
        let n1 = ClaimValue::number(300.0, Some("Meters")).unwrap();
        let n2 = ClaimValue::number(300.0, Some("meters")).unwrap();
        assert!(n1.same_as(&n2));
    }

    #[test]
    fn parse_typed_values() {
        let aliases = AliasTable::default();
        assert_eq!(
            ClaimValue::parse_typed("date", "1905-06-30", &aliases).unwrap(),
            ClaimValue::date(1905, Some(6), Some(30)).unwrap()
        );
        assert_eq!(
            ClaimValue::parse_typed("date", "-44", &aliases).unwrap(),
            ClaimValue::year(-44)
        );
        assert_eq!(
            ClaimValue::parse_typed("number", "1,083 feet", &aliases).unwrap().render(),
            "1083 feet"
        );
        assert!(ClaimValue::parse_typed("blob", "x", &aliases).is_err());
        assert!(ClaimValue::parse_typed("date", "19x5", &aliases).is_err());
    }

    #[test]
    fn value_json_shape() {
        let v = serde_json::to_string(&ClaimValue::year(1905)).unwrap();
        assert_eq!(v, r#"{"type":"date","year":1905}"#);
        let back: ClaimValue = serde_json::from_str(&v).unwrap();
        assert_eq!(back, ClaimValue::year(1905));
    }
}
