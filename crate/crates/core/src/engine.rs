//! The long-lived service object: graph store, language resources, provider
//! gateway, and the session context for the current snapshot.

use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{AppConfig, ConfigError};
use crate::corpus::{Corpus, CorpusText, Entailments, LexiconEntry, SynonymEntry};
use crate::kg::{GraphSnapshot, IngestMode, IngestReport, KgError, KgStore, NodeId, Provenance, RelationEdge};
use crate::llm::{Gateway, LlmError, ProviderRegistry};
use crate::query::{Lexicon, Resolution};
use crate::session::{Session, SessionContext, SessionError, SystemClock, TurnResponse};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("cannot read corpus: {0}")]
    Io(#[from] std::io::Error),
}

/// One relation read from free text, linked to graph nodes where possible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentProposal {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub evidence: String,
    /// The edge to insert; absent when a mention did not link.
    pub edge: Option<RelationEdge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
}

pub struct Engine {
    config: AppConfig,
    store: KgStore,
    lexicon: Vec<LexiconEntry>,
    synonyms: Vec<SynonymEntry>,
    entailments: Arc<Entailments>,
    gateway: Gateway,
    report: IngestReport,
    context: Mutex<Option<Arc<SessionContext>>>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("provider", &self.gateway.provider_name())
            .field("version", &self.store.version())
            .finish_non_exhaustive()
    }
}

/// Node for a free-text mention: the whole phrase, else its longest linkable
/// run of words.
fn link(lexicon: &Lexicon, mention: &str) -> Option<NodeId> {
    let words: Vec<&str> = mention.split_whitespace().collect();
    for len in (1..=words.len()).rev() {
        for start in 0..=words.len() - len {
            match lexicon.resolve_entity(&words[start..start + len].join(" ")) {
                Resolution::Node(id) | Resolution::Substitute { node: id, .. } => return Some(id),
                Resolution::Unresolved => {}
            }
        }
    }
    None
}

impl Engine {
    pub fn new(corpus: Corpus, config: AppConfig, gateway: Gateway) -> Self {
        Engine {
            config,
            store: KgStore::new(corpus.snapshot),
            lexicon: corpus.lexicon,
            synonyms: corpus.synonyms,
            entailments: Arc::new(corpus.entailments),
            gateway,
            report: corpus.report,
            context: Mutex::new(None),
        }
    }

    /// Loads the configured corpus (or the bundled one) and builds the
    /// configured provider.
    pub fn from_config(config: AppConfig) -> Result<Self, EngineError> {
        let registry = ProviderRegistry::default();
        config.validate(&registry)?;
        let text = match &config.corpus {
            Some(paths) => CorpusText::read(paths)?,
            None => CorpusText::sample(),
        };
        let corpus = Corpus::load(&text, IngestMode::Lenient)?;
        let gateway = Gateway::from_config(&registry, &config.provider, &config.providers)?;
        Ok(Engine::new(corpus, config, gateway))
    }

    /// The bundled corpus with the mock provider.
    pub fn sample() -> Self {
        Engine::new(Corpus::sample(), AppConfig::default(), Gateway::mock())
    }

    pub fn config(&self) -> &AppConfig {
        &self.config
    }

    pub fn store(&self) -> &KgStore {
        &self.store
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn ingest_report(&self) -> &IngestReport {
        &self.report
    }

    pub fn snapshot(&self) -> Arc<GraphSnapshot> {
        self.store.current()
    }

    /// Session context over the current snapshot, rebuilt when the store has
    /// moved on.
    pub fn context(&self) -> Arc<SessionContext> {
        let graph = self.store.current();
        let mut cached = self.context.lock();
        if let Some(ctx) = cached.as_ref().filter(|c| c.graph.version() == graph.version()) {
            return ctx.clone();
        }
        let ctx = Arc::new(SessionContext {
            lexicon: Arc::new(Lexicon::build(&graph, &self.lexicon, &self.synonyms)),
            graph,
            entailments: self.entailments.clone(),
            nutrient_defaults: self.config.nutrient_defaults.clone(),
            matcher: self.config.matcher.clone(),
            gateway: self.gateway.clone(),
            repetition_threshold: self.config.session.repetition_threshold,
        });
        *cached = Some(ctx.clone());
        ctx
    }

    pub fn new_session(&self, id: impl Into<String>) -> Session {
        Session::new(self.context(), id, Arc::new(SystemClock))
    }

    pub fn query_once(&self, text: &str) -> Result<TurnResponse, EngineError> {
        Ok(self.new_session("one-shot").route_turn(text)?)
    }

    /// Reads relation proposals from curator notes. Nothing is written.
    pub fn propose_enrichment(&self, notes: &str) -> Result<Vec<EnrichmentProposal>, EngineError> {
        let ctx = self.context();
        let relations: Vec<String> = ctx.graph.relations().names().map(|r| r.to_string()).collect();
        let found = self.gateway.extract_relations(notes, &relations)?;
        Ok(found
            .into_iter()
            .map(|r| {
                let s = link(&ctx.lexicon, &r.subject);
                let o = link(&ctx.lexicon, &r.object);
                let (edge, problem) = match (s, o) {
                    (Some(s), Some(o)) if s == o => (None, Some(format!("`{}` links to itself", r.subject))),
                    (Some(s), Some(o)) => {
                        let edge = RelationEdge::new(s, &r.relation, o, Provenance::Inferred);
                        if ctx.graph.has_edge(&edge.key()) {
                            (None, Some("already in the graph".to_string()))
                        } else {
                            (Some(edge), None)
                        }
                    }
                    (None, _) => (None, Some(format!("no node for `{}`", r.subject))),
                    (_, None) => (None, Some(format!("no node for `{}`", r.object))),
                };
                EnrichmentProposal {
                    subject: r.subject,
                    relation: r.relation,
                    object: r.object,
                    evidence: r.evidence,
                    edge,
                    problem,
                }
            })
            .collect())
    }

    /// Inserts the linked proposals as one new snapshot version.
    pub fn accept_enrichment(&self, proposals: &[EnrichmentProposal]) -> Result<Arc<GraphSnapshot>, EngineError> {
        let edges: Vec<RelationEdge> = proposals.iter().filter_map(|p| p.edge.clone()).collect();
        Ok(self.store.upsert_batch(Vec::new(), edges, None)?)
    }
}
