//! Uniform completion interface over language-model providers, and the typed
//! generation duties built on it.

mod http;
mod mock;
pub mod prompt;
mod registry;

use std::collections::BTreeMap;
use std::sync::{Arc, LazyLock};

use regex::Regex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use http::HttpChatProvider;
pub use mock::{nutrition_answer, summary_text, MockProvider};
pub use prompt::{PromptEnvelope, Task};
pub use registry::{ProviderFactory, ProviderRegistry};

use crate::matcher::SummaryPayload;
use crate::query::{Clarification, Intent, IntentCategory, PriorTurn};

/// Env var that overrides the configured provider name.
pub const PROVIDER_ENV: &str = "GENIE_PROVIDER";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("provider `{provider}` timed out after {timeout_ms} ms")]
    ProviderTimeout { provider: String, timeout_ms: u64 },
    #[error("{task} response violated its schema: {detail}")]
    SchemaViolation { task: String, detail: String },
    #[error("credential variable `{0}` is not set")]
    CredentialMissing(String),
    #[error("unknown provider `{0}`")]
    UnknownProvider(String),
    #[error("provider `{provider}`: {detail}")]
    Transport { provider: String, detail: String },
    #[error("invalid provider config `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },
}

pub type Result<T> = std::result::Result<T, LlmError>;

fn default_timeout() -> u64 {
    20_000
}

fn default_retries() -> u32 {
    2
}

/// Settings for one named provider. The credential itself never appears
/// here, only the name of the env var holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub credential_env: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            endpoint: None,
            credential_env: None,
            model: None,
            timeout_ms: default_timeout(),
            max_retries: default_retries(),
        }
    }
}

impl ProviderConfig {
    /// Checks the invariants for provider `name`; `prefix` names the config
    /// table in errors.
    pub fn validate(&self, name: &str, prefix: &str) -> Result<()> {
        let bad = |key: &str, reason: &str| LlmError::InvalidConfig {
            key: format!("{prefix}.{key}"),
            reason: reason.into(),
        };
        if self.timeout_ms == 0 {
            return Err(bad("timeout_ms", "must be greater than zero"));
        }
        if name != "mock" {
            if self.endpoint.as_deref().is_none_or(str::is_empty) {
                return Err(bad("endpoint", "required for non-mock providers"));
            }
            if self.credential_env.as_deref().is_none_or(str::is_empty) {
                return Err(bad("credential_env", "required for non-mock providers"));
            }
        }
        Ok(())
    }
}

/// One completion backend. Implementations return the parsed JSON object
/// the model produced; validation happens in [`Gateway`].
pub trait LlmProvider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, envelope: &PromptEnvelope) -> Result<Value>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposedRelation {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub evidence: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryContext {
    /// Descriptions of the active constraints.
    pub constraints: Vec<String>,
    /// Attributes bounded from above, then from below.
    pub reduced: Vec<String>,
    pub increased: Vec<String>,
    pub flags: Vec<String>,
    /// Names of the dishes currently shown, best first.
    pub dishes: Vec<String>,
}

#[derive(Deserialize)]
struct TextOut {
    text: String,
}

#[derive(Deserialize)]
struct QueriesOut {
    queries: Vec<String>,
}

#[derive(Deserialize)]
struct RelationsOut {
    relations: Vec<ProposedRelation>,
}

#[derive(Deserialize)]
struct CandidatesOut {
    candidates: Vec<String>,
}

#[derive(Deserialize)]
struct IntentOut {
    category: IntentCategory,
    confidence: f64,
    rationale: String,
}

static NUMERAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+(?:\.\d+)?").unwrap());

/// Numerals in `text`.
pub fn numerals(text: &str) -> Vec<&str> {
    NUMERAL.find_iter(text).map(|m| m.as_str()).collect()
}

/// Numerals of `text` whose value appears nowhere in `source`.
pub fn ungrounded_numerals<'t>(text: &'t str, source: &Value) -> Vec<&'t str> {
    let raw = source.to_string();
    let known: Vec<f64> = numerals(&raw).iter().filter_map(|n| n.parse().ok()).collect();
    numerals(text)
        .into_iter()
        .filter(|n| {
            let v: f64 = n.parse().unwrap_or(f64::NAN);
            !known.iter().any(|k| (k - v).abs() < 1e-9)
        })
        .collect()
}

/// Typed front end over a provider with bounded re-asking.
#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn LlmProvider>,
    max_retries: u32,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("provider", &self.provider.name())
            .field("max_retries", &self.max_retries)
            .finish()
    }
}

impl Gateway {
    pub fn new(provider: Arc<dyn LlmProvider>, max_retries: u32) -> Self {
        Gateway { provider, max_retries }
    }

    pub fn mock() -> Self {
        Gateway::new(Arc::new(MockProvider), default_retries())
    }

    /// Builds the provider named by `GENIE_PROVIDER`, or `configured` when
    /// the variable is unset.
    pub fn from_config(
        registry: &ProviderRegistry,
        configured: &str,
        providers: &BTreeMap<String, ProviderConfig>,
    ) -> Result<Self> {
        let name = std::env::var(PROVIDER_ENV).unwrap_or_else(|_| configured.to_string());
        let cfg = providers.get(&name).cloned().unwrap_or_default();
        cfg.validate(&name, &format!("providers.{name}"))?;
        let provider = registry.build(&name, &cfg)?;
        Ok(Gateway::new(provider, cfg.max_retries))
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub fn complete(&self, envelope: &PromptEnvelope) -> Result<Value> {
        self.provider.complete(envelope)
    }

    /// Asks up to `1 + max_retries` times for a response that parses as `T`
    /// and passes `check`.
    fn ask<T: DeserializeOwned>(
        &self,
        envelope: &PromptEnvelope,
        check: impl Fn(&T) -> std::result::Result<(), String>,
    ) -> Result<T> {
        let mut last = String::new();
        for _ in 0..=self.max_retries {
            let raw = self.provider.complete(envelope)?;
            match serde_json::from_value::<T>(raw) {
                Ok(v) => match check(&v) {
                    Ok(()) => return Ok(v),
                    Err(e) => last = e,
                },
                Err(e) => last = e.to_string(),
            }
            tracing::warn!(task = envelope.task.as_str(), detail = %last, "re-asking after invalid response");
        }
        Err(LlmError::SchemaViolation {
            task: envelope.task.as_str().into(),
            detail: last,
        })
    }

    pub fn classify_intent(&self, message: &str, history: &[PriorTurn]) -> Result<Intent> {
        let env = PromptEnvelope::new(
            Task::IntentClassification,
            json!({"message": message, "history": history}),
        );
        let out: IntentOut = self.ask(&env, |o: &IntentOut| {
            (0.0..=1.0)
                .contains(&o.confidence)
                .then_some(())
                .ok_or_else(|| format!("confidence {} outside [0, 1]", o.confidence))
        })?;
        Ok(Intent {
            category: out.category,
            confidence: out.confidence,
            rationale: out.rationale,
        })
    }

    fn grounded_text(&self, env: &PromptEnvelope) -> Result<String> {
        let out: TextOut = self.ask(env, |o: &TextOut| {
            let bad = ungrounded_numerals(&o.text, &env.structured_inputs);
            if bad.is_empty() {
                Ok(())
            } else {
                Err(format!("numerals not in payload: {}", bad.join(", ")))
            }
        })?;
        Ok(out.text)
    }

    /// Explanation of why the dishes in `payload` were chosen.
    pub fn summarize(&self, payload: &SummaryPayload) -> Result<String> {
        self.grounded_text(&PromptEnvelope::new(Task::Summary, json!({"payload": payload})))
    }

    /// Answer to an information question about the dishes in `payload`.
    pub fn answer(&self, question: &str, payload: &SummaryPayload) -> Result<String> {
        self.grounded_text(&PromptEnvelope::new(
            Task::Summary,
            json!({"payload": payload, "question": question}),
        ))
    }

    pub fn suggest_queries(&self, ctx: &QueryContext) -> Result<Vec<String>> {
        let env = PromptEnvelope::new(Task::QueryGeneration, serde_json::to_value(ctx).expect("serializable"));
        let out: QueriesOut = self.ask(&env, |o: &QueriesOut| {
            if o.queries.len() == 3 && o.queries.iter().all(|q| !q.trim().is_empty()) {
                Ok(())
            } else {
                Err(format!("expected three non-empty queries, got {}", o.queries.len()))
            }
        })?;
        Ok(out.queries)
    }

    /// Relation proposals in free text; `relations` lists the allowed names.
    pub fn extract_relations(&self, text: &str, relations: &[String]) -> Result<Vec<ProposedRelation>> {
        let env = PromptEnvelope::new(
            Task::RelationExtraction,
            json!({"text": text, "relations": relations}),
        );
        let out: RelationsOut = self.ask(&env, |o: &RelationsOut| {
            match o.relations.iter().find(|r| !relations.contains(&r.relation)) {
                Some(r) => Err(format!("unknown relation `{}`", r.relation)),
                None => Ok(()),
            }
        })?;
        Ok(out.relations)
    }

    pub fn propose_synonyms(&self, term: &str, labels: &[String]) -> Result<Vec<String>> {
        let env = PromptEnvelope::new(Task::SynonymProposal, json!({"term": term, "labels": labels}));
        let out: CandidatesOut = self.ask(&env, |o: &CandidatesOut| {
            match o.candidates.iter().find(|c| !labels.contains(c)) {
                Some(c) => Err(format!("`{c}` is not a graph label")),
                None => Ok(()),
            }
        })?;
        Ok(out.candidates)
    }

    pub fn clarify(&self, clarification: &Clarification) -> Result<String> {
        let env = PromptEnvelope::new(Task::Clarification, json!({"clarification": clarification}));
        Ok(self.ask(&env, |_: &TextOut| Ok(()))?.text)
    }
}
