//! TOML configuration, environment overrides and pipeline construction.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Pipeline, PipelineSettings};
use crate::calibration::{IntrinsicProvider, Weights};
use crate::claims::{AliasTable, Extractor, ExtractorConfig, PatternExtractor, Vocabulary, DEFAULT_LINK_THRESHOLD};
use crate::correction::CorrectionConfig;
use crate::fusion::FusionConfig;
use crate::sources::mock::{load_fixture, MockBehavior, MockServer};
use crate::sources::{
    CorpusIndex, CorpusSource, HttpSource, KgSource, SourceHandle, SourceKind, SourceProfile, TripleStore,
};

/// Prefix of environment variables overriding scalar settings, e.g.
/// `VERIFY_PIPELINE_TAU_CONFIDENCE=0.8`.
pub const ENV_PREFIX: &str = "VERIFY_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(String),
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("loading source {source_id}: {message}")]
    Load { source_id: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub max_concurrent_requests: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { bind: "127.0.0.1:8080".into(), max_concurrent_requests: 1024 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub tau_confidence: f64,
    pub evidence_budget_ms: u64,
    /// Source ids to use; all configured sources when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enabled_sources: Option<Vec<String>>,
    pub report_timings: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            tau_confidence: 0.7,
            evidence_budget_ms: 800,
            enabled_sources: None,
            report_timings: true,
            temperature: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aliases: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<PathBuf>,
    pub link_threshold: f64,
}

impl Default for ExtractorSection {
    fn default() -> Self {
        Self { aliases: None, vocabulary: None, link_threshold: DEFAULT_LINK_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub id: String,
    /// `triple_store`, `corpus`, `http` or `mock_http`.
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<SourceKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Hit list replayed by a `mock_http` source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PathBuf>,
    #[serde(default)]
    pub delay_ms: u64,
    pub reliability: f64,
    pub weight: f64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_results")]
    pub max_results: usize,
}

fn default_timeout_ms() -> u64 {
    800
}

fn default_max_results() -> usize {
    10
}

impl SourceConfig {
    fn profile(&self) -> SourceProfile {
        let kind = self.kind.unwrap_or(match self.backend.as_str() {
            "triple_store" => SourceKind::KnowledgeGraph,
            "corpus" => SourceKind::DomainDb,
            _ => SourceKind::WebSearch,
        });
        SourceProfile {
            source_id: self.id.clone(),
            kind,
            base_reliability: self.reliability,
            fusion_weight: self.weight,
            timeout: Duration::from_millis(self.timeout_ms),
            max_results: self.max_results,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfidenceSection {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub intrinsic: IntrinsicProvider,
}

impl Default for ConfidenceSection {
    fn default() -> Self {
        let w = Weights::default();
        Self { alpha: w.alpha, beta: w.beta, gamma: w.gamma, intrinsic: IntrinsicProvider::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheConfig {
    pub enabled: bool,
    pub capacity: usize,
    pub ttl_secs: u64,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self { enabled: true, capacity: 1000, ttl_secs: 300 }
    }
}

impl CacheConfig {
    pub fn ttl(&self) -> Duration {
        Duration::from_secs(self.ttl_secs)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub service: ServiceConfig,
    pub pipeline: PipelineSection,
    pub extractor: ExtractorSection,
    pub sources: Vec<SourceConfig>,
    pub fusion: FusionConfig,
    pub confidence: ConfidenceSection,
    pub correction: CorrectionConfig,
    pub cache: CacheConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Config {
    /// Parse TOML text, apply overrides from `env`, and validate.
    pub fn parse_with_env<I>(text: &str, env: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let parsed: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut tree = toml::Value::try_from(&parsed).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for (key, value) in env {
            if let Some(name) = key.strip_prefix(ENV_PREFIX) {
                apply_override(&mut tree, name, &value)?;
            }
        }
        let config: Config = tree.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_with_env(text, std::iter::empty())
    }

    /// Read a config file, applying `VERIFY_*` variables from the process
    /// environment.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut config = Self::parse_with_env(&text, std::env::vars())?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.pipeline;
        if !(0.0..=1.0).contains(&p.tau_confidence) {
            return Err(invalid("pipeline.tau_confidence", format!("{} outside [0,1]", p.tau_confidence)));
        }
        if p.evidence_budget_ms == 0 {
            return Err(invalid("pipeline.evidence_budget_ms", "must be positive"));
        }
        if let Some(t) = p.temperature {
            if !(t > 0.0) {
                return Err(invalid("pipeline.temperature", format!("{t} must be positive")));
            }
        }
        if self.service.max_concurrent_requests == 0 {
            return Err(invalid("service.max_concurrent_requests", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.extractor.link_threshold) {
            return Err(invalid("extractor.link_threshold", format!("{} outside [0,1]", self.extractor.link_threshold)));
        }
        if self.sources.is_empty() {
            return Err(invalid("sources", "at least one source is required"));
        }
        for (i, s) in self.sources.iter().enumerate() {
            let field = |f: &str| format!("sources[{i}].{f}");
            if self.sources[..i].iter().any(|o| o.id == s.id) {
                return Err(invalid(field("id"), format!("duplicate id {}", s.id)));
            }
            s.profile().validate().map_err(|m| {
                let (name, rest) = m.split_once(": ").unwrap_or(("", m.as_str()));
                let name = match name {
                    "source_id" => "id",
                    "base_reliability" => "reliability",
                    "fusion_weight" => "weight",
                    other => other,
                };
                invalid(field(name), rest)
            })?;
            let needs = |opt: bool, name: &str| if opt { Ok(()) } else { Err(invalid(field(name), format!("required for backend {}", s.backend))) };
            match s.backend.as_str() {
                "triple_store" | "corpus" => needs(s.path.is_some(), "path")?,
                "http" => needs(s.endpoint.is_some(), "endpoint")?,
                "mock_http" => needs(s.fixture.is_some(), "fixture")?,
                other => return Err(invalid(field("backend"), format!("unknown backend {other:?}"))),
            }
        }
        if let Some(enabled) = &p.enabled_sources {
            if enabled.is_empty() {
                return Err(invalid("pipeline.enabled_sources", "must name at least one source"));
            }
            for id in enabled {
                if !self.sources.iter().any(|s| &s.id == id) {
                    return Err(invalid("pipeline.enabled_sources", format!("unknown source {id:?}")));
                }
            }
        }
        self.fusion.validate().map_err(|m| {
            let (name, rest) = m.split_once(": ").unwrap_or(("", m.as_str()));
            invalid(format!("fusion.{name}"), rest)
        })?;
        let c = &self.confidence;
        Weights { alpha: c.alpha, beta: c.beta, gamma: c.gamma }
            .validate()
            .map_err(|e| invalid("confidence.alpha/beta/gamma", e.to_string()))?;
        if let IntrinsicProvider::Constant { value } = c.intrinsic {
            if !(0.0..=1.0).contains(&value) {
                return Err(invalid("confidence.intrinsic.value", format!("{value} outside [0,1]")));
            }
        }
        self.correction.validate().map_err(|m| {
            let (name, rest) = m.split_once(": ").unwrap_or(("", m.as_str()));
            invalid(format!("correction.{name}"), rest)
        })?;
        if self.cache.enabled && self.cache.capacity == 0 {
            return Err(invalid("cache.capacity", "must be at least 1"));
        }
        Ok(())
    }

    /// The same configuration restricted to `ids`.
    pub fn with_enabled_sources(&self, ids: &[String]) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        c.pipeline.enabled_sources = Some(ids.to_vec());
        c.validate()?;
        Ok(c)
    }

    pub fn enabled_source_ids(&self) -> Vec<String> {
        match &self.pipeline.enabled_sources {
            Some(ids) => ids.clone(),
            None => self.sources.iter().map(|s| s.id.clone()).collect(),
        }
    }

    pub fn settings(&self) -> PipelineSettings {
        let mut fusion = self.fusion.clone();
        fusion.weights = self.sources.iter().map(|s| (s.id.clone(), s.weight)).collect();
        PipelineSettings {
            tau_confidence: self.pipeline.tau_confidence,
            evidence_budget: Duration::from_millis(self.pipeline.evidence_budget_ms),
            fusion,
            weights: Weights { alpha: self.confidence.alpha, beta: self.confidence.beta, gamma: self.confidence.gamma },
            intrinsic: self.confidence.intrinsic.clone(),
            temperature: self.pipeline.temperature,
            correction: self.correction.clone(),
            report_timings: self.pipeline.report_timings,
            cache: self.cache.clone(),
        }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn extractor_config(&self) -> Result<ExtractorConfig, ConfigError> {
        let aliases = match &self.extractor.aliases {
            Some(p) => AliasTable::load(&self.resolve(p)).map_err(|e| invalid("extractor.aliases", e.to_string()))?,
            None => AliasTable::default(),
        };
        let vocabulary = match &self.extractor.vocabulary {
            Some(p) => Vocabulary::load(&self.resolve(p)).map_err(|e| invalid("extractor.vocabulary", e.to_string()))?,
            None => Vocabulary::default(),
        };
        Ok(ExtractorConfig { vocabulary, aliases: Arc::new(aliases), link_threshold: self.extractor.link_threshold })
    }

    /// Load data files, start any in-process mock servers and assemble the
    /// pipeline for the enabled sources.
    pub async fn build(&self) -> Result<Pipeline, ConfigError> {
        let ex_cfg = self.extractor_config()?;
        let aliases = ex_cfg.aliases.clone();
        let vocabulary = ex_cfg.vocabulary.clone();
        let extractor: Arc<dyn Extractor> = Arc::new(PatternExtractor::new(ex_cfg));
        let margin = self.fusion.stance_margin;
        let enabled = self.enabled_source_ids();
        let mut handles: Vec<SourceHandle> = Vec::new();
        let mut servers = Vec::new();
        for s in self.sources.iter().filter(|s| enabled.contains(&s.id)) {
            let load_err = |message: String| ConfigError::Load { source_id: s.id.clone(), message };
            let profile = s.profile();
            let handle: SourceHandle = match s.backend.as_str() {
                "triple_store" => {
                    let path = self.resolve(s.path.as_deref().unwrap_or(Path::new("")));
                    let store = TripleStore::load(&path, &aliases).map_err(|e| load_err(e.to_string()))?;
                    Arc::new(KgSource::new(profile, store, aliases.clone()).with_stance_margin(margin))
                }
                "corpus" => {
                    let path = self.resolve(s.path.as_deref().unwrap_or(Path::new("")));
                    let index = CorpusIndex::load(&path).map_err(load_err)?;
                    Arc::new(CorpusSource::new(profile, index, extractor.clone()).with_stance_margin(margin))
                }
                "http" => {
                    let raw = s.endpoint.as_deref().unwrap_or_default();
                    let url = raw.parse().map_err(|e| load_err(format!("endpoint {raw:?}: {e}")))?;
                    Arc::new(HttpSource::new(profile, url, extractor.clone(), aliases.clone()).with_stance_margin(margin))
                }
                "mock_http" => {
                    let path = self.resolve(s.fixture.as_deref().unwrap_or(Path::new("")));
                    let hits = load_fixture(&path).map_err(load_err)?;
                    let behavior = MockBehavior { delay: Duration::from_millis(s.delay_ms), ..Default::default() };
                    let server = MockServer::spawn_local(hits, behavior)
                        .await
                        .map_err(|e| load_err(format!("starting mock server: {e}")))?;
                    let url = server.url().parse().map_err(|e| load_err(format!("{e}")))?;
                    servers.push(server);
                    Arc::new(HttpSource::new(profile, url, extractor.clone(), aliases.clone()).with_stance_margin(margin))
                }
                other => return Err(invalid("backend", format!("unknown backend {other:?}"))),
            };
            handles.push(handle);
        }
        let mut pipeline = Pipeline::with_extractor(self.settings(), extractor, vocabulary, handles);
        pipeline.keep_servers(servers);
        Ok(pipeline)
    }
}

/// Set the scalar addressed by `name` (section and key joined by `_`,
/// case-insensitive) to `raw`, keeping the existing value's type.
fn apply_override(tree: &mut toml::Value, name: &str, raw: &str) -> Result<(), ConfigError> {
    let lower = name.to_ascii_lowercase();
    let Some(root) = tree.as_table_mut() else { return Ok(()) };
    for (section, table) in root.iter_mut() {
        let Some(key) = lower.strip_prefix(&format!("{section}_")) else { continue };
        let Some(table) = table.as_table_mut() else { continue };
        let Some(slot) = table.get_mut(key) else { continue };
        let field = format!("{section}.{key}");
        let bad = |m: String| invalid(format!("{ENV_PREFIX}{name} ({field})"), m);
        *slot = match slot {
            toml::Value::Integer(_) => toml::Value::Integer(raw.trim().parse().map_err(|e| bad(format!("{e}")))?),
            toml::Value::Float(_) => toml::Value::Float(raw.trim().parse().map_err(|e| bad(format!("{e}")))?),
            toml::Value::Boolean(_) => toml::Value::Boolean(raw.trim().parse().map_err(|e| bad(format!("{e}")))?),
            toml::Value::String(_) => toml::Value::String(raw.to_string()),
            _ => return Err(bad("only scalar settings can be overridden".into())),
        };
        return Ok(());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[[sources]]
id = "kg"
backend = "triple_store"
path = "kg.tsv"
reliability = 0.94
weight = 0.4
"#;

    #[test]
    fn defaults_fill_in() {
        let c = Config::parse(MINIMAL).unwrap();
        assert_eq!(c.pipeline.tau_confidence, 0.7);
        assert_eq!(c.pipeline.evidence_budget_ms, 800);
        assert_eq!(c.sources[0].timeout_ms, 800);
        assert_eq!(c.settings().fusion.weights["kg"], 0.4);
        assert_eq!(c.enabled_source_ids(), vec!["kg"]);
    }

    #[test]
    fn env_overrides_scalars() {
        let env = vec![
            ("VERIFY_PIPELINE_TAU_CONFIDENCE".to_string(), "0.8".to_string()),
            ("VERIFY_CACHE_CAPACITY".to_string(), "5".to_string()),
            ("VERIFY_SERVICE_BIND".to_string(), "0.0.0.0:9".to_string()),
            ("OTHER".to_string(), "x".to_string()),
        ];
        let c = Config::parse_with_env(MINIMAL, env).unwrap();
        assert_eq!(c.pipeline.tau_confidence, 0.8);
        assert_eq!(c.cache.capacity, 5);
        assert_eq!(c.service.bind, "0.0.0.0:9");
        let bad = Config::parse_with_env(MINIMAL, vec![("VERIFY_CACHE_CAPACITY".into(), "many".into())]);
        assert!(bad.unwrap_err().to_string().contains("cache.capacity"));
    }

    #[test]
    fn errors_name_the_field() {
        let msg = |text: &str| Config::parse(text).unwrap_err().to_string();
        assert!(msg(&format!("{MINIMAL}\n[pipeline]\ntau_confidence = 1.5\n")).contains("pipeline.tau_confidence"));
        assert!(msg(&MINIMAL.replace("0.94", "1.94")).contains("sources[0].reliability"));
        assert!(msg(&MINIMAL.replace("triple_store", "neo4j")).contains("sources[0].backend"));
        assert!(msg(&format!("{MINIMAL}\n[confidence]\nalpha = 0.9\n")).contains("confidence.alpha/beta/gamma"));
        assert!(msg(&format!("{MINIMAL}\n[pipeline]\nenabled_sources = [\"web\"]\n")).contains("pipeline.enabled_sources"));
        assert!(msg("").contains("sources"));
        assert!(msg(&format!("{MINIMAL}\n[pipeline]\ntau = 0.5\n")).contains("tau"));
    }
}
