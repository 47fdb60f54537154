//! Service configuration read from a TOML file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusPaths;
use crate::llm::{LlmError, ProviderConfig, ProviderRegistry, PROVIDER_ENV};
use crate::matcher::MatcherConfig;
use crate::query::{default_nutrient_defaults, NutrientDefault};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config{}: {message}", key.as_ref().map(|k| format!(" key `{k}`")).unwrap_or_default())]
    Parse { key: Option<String>, message: String },
    #[error("invalid config key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

impl ConfigError {
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Io { .. } => None,
            ConfigError::Parse { key, .. } => key.as_deref(),
            ConfigError::Invalid { key, .. } => Some(key),
        }
    }

    fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

impl From<LlmError> for ConfigError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::InvalidConfig { key, reason } => ConfigError::Invalid { key, reason },
            LlmError::UnknownProvider(name) => ConfigError::invalid("provider", format!("unknown provider `{name}`")),
            LlmError::CredentialMissing(var) => {
                ConfigError::invalid("credential_env", format!("environment variable `{var}` is not set"))
            }
            other => ConfigError::invalid("provider", other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Distinct rejections of a class before a learned exclusion is proposed.
    pub repetition_threshold: u32,
    /// How long `/updates` waits for a newer recommendation.
    pub long_poll_ms: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            repetition_threshold: 3,
            long_poll_ms: 25_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub bind_address: String,
    pub port: u16,
    /// Provider name; `GENIE_PROVIDER` overrides it.
    pub provider: String,
    /// Where per-session logs are written; no persistence when unset.
    pub session_log_dir: Option<PathBuf>,
    /// Corpus files; the bundled sample corpus when unset.
    pub corpus: Option<CorpusPaths>,
    pub providers: BTreeMap<String, ProviderConfig>,
    pub matcher: MatcherConfig,
    pub session: SessionConfig,
    pub nutrient_defaults: Vec<NutrientDefault>,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            bind_address: "127.0.0.1".into(),
            port: 8080,
            provider: "mock".into(),
            session_log_dir: None,
            corpus: None,
            providers: BTreeMap::new(),
            matcher: MatcherConfig::default(),
            session: SessionConfig::default(),
            nutrient_defaults: default_nutrient_defaults(),
        }
    }
}

static UNKNOWN_FIELD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"unknown field `([^`]+)`").unwrap());
static KEY_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*([A-Za-z0-9_\-.]+)\s*=").unwrap());
static TABLE_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*\[\[?\s*([A-Za-z0-9_\-.]+)\s*\]\]?").unwrap());

/// Dotted key of the assignment on the line holding byte `offset`.
fn key_at(src: &str, offset: usize) -> Option<String> {
    let line_no = src[..offset.min(src.len())].matches('\n').count();
    let lines: Vec<&str> = src.lines().collect();
    let table = lines[..line_no.min(lines.len())]
        .iter()
        .rev()
        .find_map(|l| TABLE_LINE.captures(l).map(|c| c[1].to_string()));
    let line = lines.get(line_no)?;
    if let Some(c) = KEY_LINE.captures(line) {
        return Some(match table {
            Some(t) => format!("{t}.{}", &c[1]),
            None => c[1].to_string(),
        });
    }
    TABLE_LINE.captures(line).map(|c| c[1].to_string())
}

impl AppConfig {
    pub fn from_toml_str(src: &str) -> Result<Self, ConfigError> {
        let cfg: AppConfig = toml::from_str(src).map_err(|e| {
            let message = e.message().to_string();
            let field = UNKNOWN_FIELD.captures(&message).map(|c| c[1].to_string());
            let located = e.span().and_then(|s| key_at(src, s.start));
            let key = match (located, field) {
                (Some(k), Some(f)) if !k.ends_with(&f) => Some(format!("{k}.{f}")),
                (Some(k), _) => Some(k),
                (None, f) => f,
            };
            ConfigError::Parse { key, message }
        })?;
        Ok(cfg)
    }

    /// Parses, resolves relative corpus and log paths against the file's
    /// directory, and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = AppConfig::from_toml_str(&src)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate(&ProviderRegistry::default())?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(c) = self.corpus.as_mut() {
            fix(&mut c.triples);
            fix(&mut c.attrs);
            for p in [&mut c.relations, &mut c.lexicon, &mut c.synonyms, &mut c.entailments]
                .into_iter()
                .flatten()
            {
                fix(p);
            }
        }
        if let Some(d) = self.session_log_dir.as_mut() {
            fix(d);
        }
    }

    /// The provider in effect once `GENIE_PROVIDER` is taken into account.
    pub fn effective_provider(&self) -> String {
        std::env::var(PROVIDER_ENV).unwrap_or_else(|_| self.provider.clone())
    }

    pub fn validate(&self, registry: &ProviderRegistry) -> Result<(), ConfigError> {
        if self.bind_address.parse::<std::net::IpAddr>().is_err() {
            return Err(ConfigError::invalid("bind_address", format!("`{}` is not an IP address", self.bind_address)));
        }
        let provider = self.effective_provider();
        if !registry.contains(&provider) {
            let key = if std::env::var(PROVIDER_ENV).is_ok() { PROVIDER_ENV } else { "provider" };
            return Err(ConfigError::invalid(key, format!("unknown provider `{provider}`")));
        }
        for (name, p) in &self.providers {
            if !registry.contains(name) {
                return Err(ConfigError::invalid(format!("providers.{name}"), "unknown provider name"));
            }
            p.validate(name, &format!("providers.{name}"))?;
        }
        if !self.providers.contains_key(&provider) {
            ProviderConfig::default().validate(&provider, &format!("providers.{provider}"))?;
        }

        let m = &self.matcher;
        let w = &m.weights;
        if [w.satisfaction, w.affinity, w.borderline_penalty, w.tightness]
            .iter()
            .any(|x| !x.is_finite() || *x < 0.0)
            || w.total() <= 0.0
        {
            return Err(ConfigError::invalid("matcher.weights", "weights must be non-negative with a positive sum"));
        }
        if m.result_count == 0 {
            return Err(ConfigError::invalid("matcher.result_count", "must be at least 1"));
        }
        if m.hop_cap == 0 {
            return Err(ConfigError::invalid("matcher.hop_cap", "must be at least 1"));
        }
        if m.nodes_per_detail == 0 {
            return Err(ConfigError::invalid("matcher.nodes_per_detail", "must be at least 1"));
        }
        if m.max_detail == 0 {
            return Err(ConfigError::invalid("matcher.max_detail", "must be at least 1"));
        }
        if m.default_detail == 0 || m.default_detail > m.max_detail {
            return Err(ConfigError::invalid("matcher.default_detail", "must lie in 1..=max_detail"));
        }
        if let Some(b) = m.bands.iter().find(|b| b.below.is_some_and(|x| !x.is_finite() || x < 0.0)) {
            return Err(ConfigError::invalid("matcher.bands", format!("band `{}` has an invalid limit", b.label)));
        }
        if self.session.repetition_threshold == 0 {
            return Err(ConfigError::invalid("session.repetition_threshold", "must be at least 1"));
        }
        if let Some(d) = self.nutrient_defaults.iter().find(|d| !d.value.is_finite() || d.value < 0.0) {
            return Err(ConfigError::invalid("nutrient_defaults", format!("default for `{}` must be non-negative", d.nutrient)));
        }
        Ok(())
    }
}
