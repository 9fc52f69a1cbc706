//! Seeded generator for evaluation corpora and the matching source fixtures.
//!
//! Every fact lives in at most one source, so the facts reachable through a
//! set of sources grow as sources are added.

use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GoldClaim, Label, LabeledExample};
use crate::claims::{ClaimValue, EntityKind, EntityRef};
use crate::sources::{Document, HttpHit};

const FIRST: &[&str] = &[
    "Mara", "Tobin", "Ilse", "Corin", "Vesna", "Anselm", "Liora", "Dario", "Helka", "Oren", "Sabine", "Teodor",
    "Yara", "Emil", "Nadia", "Rufus", "Greta", "Lucan", "Ines", "Piet",
];
const LAST: &[&str] = &[
    "Quell", "Arden", "Voss", "Halloran", "Brandt", "Okafor", "Lindqvist", "Marchetti", "Sorell", "Kade", "Whitlow",
    "Ferro", "Dunmore", "Ashby", "Roskam", "Tavener", "Blom", "Caruso", "Eklund", "Mertens",
];
const PLACE_HEAD: &[&str] = &["Varn", "Ost", "Kel", "Bram", "Dun", "Hal", "Mer", "Tor", "Wey", "Ash", "Gil", "Lor"];
const PLACE_TAIL: &[&str] = &["hold", "rel", "mouth", "stead", "wick", "ford", "haven", "by"];
const ORG_HEAD: &[&str] = &[
    "Brightwater", "Kestrel", "Northgate", "Silverline", "Oakmere", "Redfern", "Bluepeak", "Greystone",
];
const ORG_TAIL: &[&str] = &["Labs", "Works", "Foundry", "Institute"];

/// Share of facts held by each source. Whatever remains is held by none.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub kg: f64,
    pub web: f64,
    pub db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub persons: usize,
    pub places: usize,
    pub orgs: usize,
    pub examples: usize,
    pub max_claims_per_example: usize,
    /// Probability that an asserted value is replaced by a wrong one.
    pub error_rate: f64,
    pub coverage: Coverage,
    /// Share of web and corpus records dated years before the reference date.
    pub stale_fraction: f64,
    pub reference_date: NaiveDate,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            persons: 60,
            places: 30,
            orgs: 20,
            examples: 150,
            max_claims_per_example: 2,
            error_rate: 0.5,
            coverage: Coverage { kg: 0.35, web: 0.3, db: 0.25 },
            stale_fraction: 0.2,
            reference_date: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Home {
    Kg,
    Web,
    Db,
    Nowhere,
}

#[derive(Debug, Clone)]
struct Entity {
    id: String,
    name: String,
    kind: EntityKind,
}

impl Entity {
    fn value(&self) -> ClaimValue {
        ClaimValue::Entity(EntityRef {
            canonical_id: self.id.clone(),
            surface_form: self.name.clone(),
            kind: self.kind,
            link_score: 1.0,
        })
    }
}

#[derive(Debug, Clone)]
struct Fact {
    subject: usize,
    predicate: &'static str,
    value: ClaimValue,
    home: Home,
}

/// Generated corpus plus the three source fixtures that back it.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub aliases_tsv: String,
    pub kg_tsv: String,
    pub web: Vec<HttpHit>,
    pub db: Vec<Document>,
    pub examples: Vec<LabeledExample>,
    pub config_toml: String,
}

fn sentence(subject: &Entity, predicate: &str, value: &ClaimValue) -> String {
    match (predicate, value) {
        ("population", v) => format!("{} has {}.", subject.name, v.render()),
        (p, v) => format!("{} was {p} in {}.", subject.name, v.render()),
    }
}

fn typed(value: &ClaimValue) -> (&'static str, String) {
    match value {
        ClaimValue::Date { year, .. } => ("date", year.to_string()),
        ClaimValue::Number { .. } => ("number", value.render()),
        ClaimValue::Entity(e) => ("entity", e.canonical_id.clone()),
        ClaimValue::Text { text } => ("text", text.clone()),
    }
}

fn population(n: f64) -> ClaimValue {
    ClaimValue::number(n, Some("inhabitants")).expect("finite")
}

/// A value of the same kind that differs from `value`.
fn corrupt(rng: &mut ChaCha8Rng, value: &ClaimValue, places: &[Entity]) -> ClaimValue {
    match value {
        ClaimValue::Date { year, .. } => {
            let shift = rng.gen_range(3..=40) * if rng.gen_bool(0.5) { 1 } else { -1 };
            ClaimValue::year(year + shift)
        }
        ClaimValue::Number { value, .. } => {
            let factor = if rng.gen_bool(0.5) { rng.gen_range(0.4..0.7) } else { rng.gen_range(1.4..2.5) };
            population(((value * factor) / 100.0).round().max(1.0) * 100.0)
        }
        ClaimValue::Entity(e) => loop {
            let other = places.choose(rng).expect("places");
            if other.id != e.canonical_id {
                break other.value();
            }
        },
        ClaimValue::Text { .. } => value.clone(),
    }
}

fn names(rng: &mut ChaCha8Rng, heads: &[&str], tails: &[&str], sep: &str, n: usize) -> Vec<String> {
    let mut all: Vec<String> = heads.iter().flat_map(|h| tails.iter().map(move |t| format!("{h}{sep}{t}"))).collect();
    all.shuffle(rng);
    all.truncate(n);
    all
}

pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut entities = Vec::new();
    let mut push = |prefix: &str, kind, list: Vec<String>| -> Vec<usize> {
        list.into_iter()
            .enumerate()
            .map(|(i, name)| {
                entities.push(Entity { id: format!("{prefix}{}", i + 1), name, kind });
                entities.len() - 1
            })
            .collect()
    };
    let persons = push("P", EntityKind::Person, names(&mut rng, FIRST, LAST, " ", cfg.persons));
    let places = push("L", EntityKind::Place, names(&mut rng, PLACE_HEAD, PLACE_TAIL, "", cfg.places.max(2)));
    let orgs = push("O", EntityKind::Org, names(&mut rng, ORG_HEAD, ORG_TAIL, " ", cfg.orgs));
    let place_entities: Vec<Entity> = places.iter().map(|&i| entities[i].clone()).collect();

    let c = cfg.coverage;
    let home = |rng: &mut ChaCha8Rng| {
        let u: f64 = rng.gen();
        if u < c.kg {
            Home::Kg
        } else if u < c.kg + c.web {
            Home::Web
        } else if u < c.kg + c.web + c.db {
            Home::Db
        } else {
            Home::Nowhere
        }
    };
    let mut facts = Vec::new();
    for &p in &persons {
        facts.push(Fact { subject: p, predicate: "born", value: ClaimValue::year(rng.gen_range(1850..1990)), home: home(&mut rng) });
        let place = place_entities.choose(&mut rng).expect("places").value();
        facts.push(Fact { subject: p, predicate: "born", value: place, home: home(&mut rng) });
    }
    for &l in &places {
        let n = rng.gen_range(20..9000) as f64 * 100.0;
        facts.push(Fact { subject: l, predicate: "population", value: population(n), home: home(&mut rng) });
    }
    for &o in &orgs {
        facts.push(Fact { subject: o, predicate: "founded", value: ClaimValue::year(rng.gen_range(1800..2015)), home: home(&mut rng) });
    }

    let mut aliases_tsv = String::new();
    for e in &entities {
        let kind = match e.kind {
            EntityKind::Person => "PERSON",
            EntityKind::Place => "PLACE",
            EntityKind::Org => "ORG",
            _ => "OTHER",
        };
        aliases_tsv.push_str(&format!("{}\t{kind}\t{}\n", e.id, e.name));
    }

    let mut kg_tsv = String::new();
    let mut web = Vec::new();
    let mut db = Vec::new();
    for (i, f) in facts.iter().enumerate() {
        let subject = &entities[f.subject];
        let (vtype, raw) = typed(&f.value);
        let text = sentence(subject, f.predicate, &f.value);
        let age_days = if rng.gen_bool(cfg.stale_fraction) { rng.gen_range(3000..6000) } else { rng.gen_range(10..120) };
        let published = cfg.reference_date - chrono::Duration::days(age_days);
        let authority = (rng.gen_range(80..97) as f64) / 100.0;
        let citations = rng.gen_range(50..5000u64);
        match f.home {
            Home::Kg => kg_tsv.push_str(&format!("{}\t{}\t{vtype}\t{raw}\t\t\t{authority}\n", subject.id, f.predicate)),
            Home::Web => web.push(HttpHit {
                snippet: text,
                value: raw,
                value_type: vtype.to_string(),
                authority,
                published: Some(published),
                citations,
            }),
            Home::Db => db.push(Document {
                doc_id: format!("doc-{:04}", i + 1),
                text,
                domain_tag: "synthetic".into(),
                authority,
                published,
                citation_count: citations,
            }),
            Home::Nowhere => {}
        }
    }

    let mut examples = Vec::with_capacity(cfg.examples);
    for _ in 0..cfg.examples {
        let k = rng.gen_range(1..=cfg.max_claims_per_example.max(1));
        let mut picked: Vec<&Fact> = Vec::with_capacity(k);
        while picked.len() < k {
            let f = facts.choose(&mut rng).expect("facts");
            // One fact per subject keeps sentences from answering each other.
            if picked.iter().all(|p| p.subject != f.subject) {
                picked.push(f);
            }
        }
        let mut input = Vec::new();
        let mut reference = Vec::new();
        let mut wrong = false;
        let mut gold = Vec::new();
        for f in picked {
            let subject = &entities[f.subject];
            let asserted = if rng.gen_bool(cfg.error_rate) {
                wrong = true;
                corrupt(&mut rng, &f.value, &place_entities)
            } else {
                f.value.clone()
            };
            input.push(sentence(subject, f.predicate, &asserted));
            reference.push(sentence(subject, f.predicate, &f.value));
            gold.push(GoldClaim {
                subject_id: subject.id.clone(),
                predicate: f.predicate.to_string(),
                value: f.value.clone(),
                complement: None,
            });
        }
        examples.push(LabeledExample {
            input_text: input.join(" "),
            gold_claims: gold,
            label: if wrong { Label::Hallucinated } else { Label::Factual },
            reference_text: Some(reference.join(" ")),
        });
    }

    SynthCorpus {
        aliases_tsv,
        kg_tsv,
        web,
        db,
        examples,
        config_toml: config_toml(cfg.reference_date),
    }
}

fn config_toml(reference_date: NaiveDate) -> String {
    format!(
        r#"[pipeline]
tau_confidence = 0.7
evidence_budget_ms = 800
report_timings = false

[extractor]
aliases = "aliases.tsv"

[[sources]]
id = "kg"
backend = "triple_store"
path = "kg.tsv"
reliability = 0.94
weight = 0.4

[[sources]]
id = "web"
backend = "mock_http"
fixture = "web.json"
reliability = 0.85
weight = 0.35

[[sources]]
id = "db"
backend = "corpus"
path = "db.jsonl"
reliability = 0.9
weight = 0.25

[fusion]
reference_date = "{reference_date}"

[correction]
hedge_phrases = ["It is uncertain whether "]

[correction.attribution_labels]
kg = "kg-main"
web = "web search"
db = "domain corpus"
"#
    )
}

impl SynthCorpus {
    /// Write `config.toml`, the source fixtures and `corpus.jsonl` into `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let jsonl = |items: Vec<String>| items.into_iter().map(|l| l + "\n").collect::<String>();
        std::fs::write(dir.join("config.toml"), &self.config_toml)?;
        std::fs::write(dir.join("aliases.tsv"), &self.aliases_tsv)?;
        std::fs::write(dir.join("kg.tsv"), &self.kg_tsv)?;
        std::fs::write(dir.join("web.json"), serde_json::to_string_pretty(&self.web)? + "\n")?;
        std::fs::write(
            dir.join("db.jsonl"),
            jsonl(self.db.iter().map(serde_json::to_string).collect::<Result<_, _>>()?),
        )?;
        std::fs::write(
            dir.join("corpus.jsonl"),
            jsonl(self.examples.iter().map(serde_json::to_string).collect::<Result<_, _>>()?),
        )?;
        Ok(())
    }
}
