//! Chat-completions client for hosted providers.

use std::time::Duration;

use serde_json::{json, Value};

use super::prompt::PromptEnvelope;
use super::{LlmError, LlmProvider, ProviderConfig, Result};

pub struct HttpChatProvider {
    name: String,
    url: String,
    model: String,
    credential: String,
    timeout_ms: u64,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpChatProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpChatProvider")
            .field("name", &self.name)
            .field("url", &self.url)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl HttpChatProvider {
    /// Reads the credential from the env var named in `cfg`.
    pub fn new(name: &str, cfg: &ProviderConfig) -> Result<Self> {
        let missing = |key: &str| LlmError::InvalidConfig {
            key: format!("providers.{name}.{key}"),
            reason: "required for non-mock providers".into(),
        };
        let endpoint = cfg.endpoint.as_deref().ok_or_else(|| missing("endpoint"))?;
        let var = cfg.credential_env.as_deref().ok_or_else(|| missing("credential_env"))?;
        let credential = std::env::var(var)
            .ok()
            .filter(|v| !v.is_empty())
            .ok_or_else(|| LlmError::CredentialMissing(var.to_string()))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpChatProvider {
            name: name.to_string(),
            url: format!("{}/chat/completions", endpoint.trim_end_matches('/')),
            model: cfg.model.clone().unwrap_or_else(|| name.to_string()),
            credential,
            timeout_ms: cfg.timeout_ms,
            agent,
        })
    }

    fn transport(&self, detail: impl Into<String>) -> LlmError {
        LlmError::Transport {
            provider: self.name.clone(),
            detail: detail.into(),
        }
    }
}

impl LlmProvider for HttpChatProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, envelope: &PromptEnvelope) -> Result<Value> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": "You are a nutrition assistant. Reply with JSON only."},
                {"role": "user", "content": envelope.rendered_prompt},
            ],
        });
        let sent = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.credential))
            .send_json(&body);
        let mut resp = match sent {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => {
                return Err(LlmError::ProviderTimeout {
                    provider: self.name.clone(),
                    timeout_ms: self.timeout_ms,
                })
            }
            Err(e) => return Err(self.transport(e.to_string())),
        };
        let status = resp.status();
        if !status.is_success() {
            return Err(self.transport(format!("HTTP {status}")));
        }
        let reply: Value = resp.body_mut().read_json().map_err(|e| match e {
            ureq::Error::Timeout(_) => LlmError::ProviderTimeout {
                provider: self.name.clone(),
                timeout_ms: self.timeout_ms,
            },
            e => self.transport(e.to_string()),
        })?;
        let content = reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| self.transport("reply has no message content"))?;
        // A malformed body is the model's fault, so let the gateway re-ask.
        Ok(serde_json::from_str(strip_fences(content)).unwrap_or(Value::String(content.to_string())))
    }
}

/// Models sometimes wrap JSON in a fenced code block.
fn strip_fences(s: &str) -> &str {
    let t = s.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    rest.strip_suffix("```").unwrap_or(rest).trim()
}
