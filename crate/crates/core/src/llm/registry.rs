//! Provider implementations selectable by name.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{HttpChatProvider, LlmError, LlmProvider, MockProvider, ProviderConfig, Result};

pub type ProviderFactory = fn(&str, &ProviderConfig) -> Result<Arc<dyn LlmProvider>>;

/// Names of the hosted chat providers; all speak the same chat-completions
/// dialect and differ only in endpoint, model and credential.
pub const HOSTED: [&str; 4] = ["provider_a", "provider_b", "provider_c", "provider_d"];

#[derive(Clone)]
pub struct ProviderRegistry {
    factories: BTreeMap<String, ProviderFactory>,
}

fn mock(_: &str, _: &ProviderConfig) -> Result<Arc<dyn LlmProvider>> {
    Ok(Arc::new(MockProvider))
}

fn hosted(name: &str, cfg: &ProviderConfig) -> Result<Arc<dyn LlmProvider>> {
    Ok(Arc::new(HttpChatProvider::new(name, cfg)?))
}

impl Default for ProviderRegistry {
    fn default() -> Self {
        let mut r = ProviderRegistry {
            factories: BTreeMap::new(),
        };
        r.register("mock", mock);
        for name in HOSTED {
            r.register(name, hosted);
        }
        r
    }
}

impl ProviderRegistry {
    pub fn register(&mut self, name: &str, factory: ProviderFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn build(&self, name: &str, cfg: &ProviderConfig) -> Result<Arc<dyn LlmProvider>> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| LlmError::UnknownProvider(name.to_string()))?;
        factory(name, cfg)
    }
}
