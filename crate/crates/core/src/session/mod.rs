//! Per-user conversational state: the interaction record, the preference
//! profile folded from it, and the turn loop that keeps recommendations in
//! step with both.

pub mod log;
mod profile;

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use log::{
    read_log, with_current_status, ActionKind, ActionStatus, Answer, Clock, LogEntry, StepClock, SystemClock, Target,
};
pub use profile::{excluded_nodes, fold, reading_class, PreferenceProfile};

use crate::corpus::{Corpus, Entailments};
use crate::kg::{GraphSnapshot, KgError, NodeId};
use crate::llm::{Gateway, LlmError, QueryContext};
use crate::matcher::{MatchError, Matcher, MatcherConfig, NearMiss, Recommendation, SubgraphView, SummaryPayload};
use crate::query::{
    classify_by_rules, default_nutrient_defaults, parse_constraints, Clarification, ClarificationKind, Conflict,
    Constraint, ConstraintBody, Intent, IntentCategory, Lexicon, NutrientDefault, ParseContext, PriorTurn,
    QueryError, Resolution,
};

const NO_PARSE: &str = "I could not find a dietary preference or a known ingredient in that message. \
                        Could you rephrase it, for example \"low sodium dinner without shrimp\"?";
const HELP: &str = "I can recommend recipes, adjust them to your preferences, or answer questions about \
                    the dishes shown. Try something like \"Find me a vegan lunch under 400 kcal\".";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("message is empty")]
    EmptyMessage,
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("{node} is already staged for {kind:?}")]
    DuplicateStage { node: NodeId, kind: ActionKind },
    #[error("there are no staged actions to apply")]
    NoStagedActions,
    #[error("unknown action {0}")]
    UnknownAction(u64),
    #[error("action {0} is already undone")]
    AlreadyUndone(u64),
    #[error("action {0} cannot be undone")]
    NotUndoable(u64),
    #[error("unknown conflict `{0}`")]
    UnknownConflict(String),
    #[error("conflict `{0}` is already resolved")]
    ConflictAlreadyResolved(String),
    #[error("`{choice}` is not a valid choice for `{subject}`")]
    InvalidChoice { subject: String, choice: String },
    #[error("{} unresolved conflict(s) must be resolved first", .0.len())]
    UnresolvedConflicts(Vec<Conflict>),
    #[error("no pending learned proposal `{0}`")]
    UnknownProposal(String),
    #[error("no pending clarification for `{0}`")]
    UnknownClarification(String),
    #[error("no recommendation has been made yet")]
    NoRecommendationYet,
    #[error("stale query version {expected}; current is {current}")]
    StaleVersion { expected: u64, current: u64 },
    #[error("turn {turn}: {source}")]
    Turn {
        turn: u64,
        #[source]
        source: Box<SessionError>,
    },
    #[error("replay diverged at action {action_id}: {reason}")]
    ReplayDiverged { action_id: u64, reason: String },
    #[error("session log line {line}: {reason}")]
    MalformedLog { line: u64, reason: String },
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("session log I/O: {0}")]
    Io(#[source] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SessionError>;

/// Everything a session reads but never changes.
#[derive(Debug, Clone)]
pub struct SessionContext {
    pub graph: Arc<GraphSnapshot>,
    pub lexicon: Arc<Lexicon>,
    pub entailments: Arc<Entailments>,
    pub nutrient_defaults: Vec<NutrientDefault>,
    pub matcher: MatcherConfig,
    pub gateway: Gateway,
    pub repetition_threshold: u32,
}

impl SessionContext {
    pub fn from_corpus(corpus: &Corpus, gateway: Gateway) -> Self {
        SessionContext {
            graph: Arc::new(corpus.snapshot.clone()),
            lexicon: Arc::new(Lexicon::from_corpus(corpus)),
            entailments: Arc::new(corpus.entailments.clone()),
            nutrient_defaults: default_nutrient_defaults(),
            matcher: MatcherConfig::default(),
            gateway,
            repetition_threshold: 3,
        }
    }

    /// The bundled corpus with the mock provider and default settings.
    pub fn sample() -> Self {
        SessionContext::from_corpus(&Corpus::sample(), Gateway::mock())
    }

    pub fn matcher(&self) -> Matcher<'_> {
        Matcher::new(&self.graph, &self.entailments, &self.matcher)
    }

    pub fn parse_context(&self) -> ParseContext<'_> {
        ParseContext {
            graph: &self.graph,
            lexicon: &self.lexicon,
            defaults: &self.nutrient_defaults,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Include,
    Exclude,
}

impl Polarity {
    pub fn kind(self) -> ActionKind {
        match self {
            Polarity::Include => ActionKind::IncludeNode,
            Polarity::Exclude => ActionKind::ExcludeNode,
        }
    }
}

/// A pending clarification as shown to the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClarificationPrompt {
    pub term: String,
    pub kind: ClarificationKind,
    pub candidates: Vec<String>,
    pub question: String,
}

/// What a state change left behind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Update {
    pub action_id: u64,
    pub profile: PreferenceProfile,
    pub recommendation: Option<Recommendation>,
    pub near_misses: Vec<NearMiss>,
    pub conflicts: Vec<Conflict>,
    pub proposals: Vec<Constraint>,
    pub query_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResponse {
    pub action_id: u64,
    pub intent: Intent,
    pub reply_text: String,
    /// Present when this turn produced or changed the recommendation.
    pub recommendation: Option<Recommendation>,
    pub pending_clarifications: Vec<ClarificationPrompt>,
    pub conflicts: Vec<Conflict>,
    pub proposals: Vec<Constraint>,
    pub near_misses: Vec<NearMiss>,
    pub warnings: Vec<String>,
    pub query_version: u64,
}

pub struct Session {
    id: String,
    ctx: Arc<SessionContext>,
    log: Vec<LogEntry>,
    profile: PreferenceProfile,
    last: Option<Recommendation>,
    detail: u32,
    turns: Vec<PriorTurn>,
    clock: Arc<dyn Clock>,
    sink: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.id)
            .field("actions", &self.log.len())
            .field("query_version", &self.query_version())
            .finish_non_exhaustive()
    }
}

impl Session {
    pub fn new(ctx: Arc<SessionContext>, id: impl Into<String>, clock: Arc<dyn Clock>) -> Self {
        let detail = ctx.matcher.default_detail;
        Session {
            id: id.into(),
            ctx,
            log: Vec::new(),
            profile: PreferenceProfile::default(),
            last: None,
            detail,
            turns: Vec::new(),
            clock,
            sink: None,
        }
    }

    /// Every later entry is also written to `sink`, one JSON object per line.
    pub fn with_sink(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn context(&self) -> &Arc<SessionContext> {
        &self.ctx
    }

    pub fn snapshot_version(&self) -> u64 {
        self.ctx.graph.version()
    }

    /// Bumps with every logged action.
    pub fn query_version(&self) -> u64 {
        self.log.len() as u64
    }

    pub fn profile(&self) -> &PreferenceProfile {
        &self.profile
    }

    pub fn recommendation(&self) -> Option<&Recommendation> {
        self.last.as_ref()
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    /// The record with current statuses.
    pub fn history(&self) -> Vec<LogEntry> {
        with_current_status(&self.log)
    }

    pub fn staged(&self) -> Vec<LogEntry> {
        log::staged(&self.log).into_iter().cloned().collect()
    }

    /// Learned constraints waiting for confirmation.
    pub fn learn_repetition(&self) -> Vec<Constraint> {
        self.profile.proposals().cloned().collect()
    }

    fn check_version(&self, expected: Option<u64>) -> Result<()> {
        match expected {
            Some(v) if v != self.query_version() => Err(SessionError::StaleVersion {
                expected: v,
                current: self.query_version(),
            }),
            _ => Ok(()),
        }
    }

    fn entry(&self, kind: ActionKind, target: Target, at: chrono::DateTime<chrono::Utc>) -> LogEntry {
        let status = match kind {
            ActionKind::IncludeNode | ActionKind::ExcludeNode => ActionStatus::Staged,
            _ => ActionStatus::Applied,
        };
        LogEntry {
            action_id: self.log.len() as u64 + 1,
            kind,
            target,
            timestamp: at,
            status,
            intent: None,
        }
    }

    fn commit(&mut self, entry: LogEntry) -> Result<()> {
        if let Some(sink) = self.sink.as_mut() {
            log::write_entry(sink.as_mut(), &entry).map_err(SessionError::Io)?;
        }
        self.log.push(entry);
        Ok(())
    }

    /// Recomputes the recommendation for the current profile.
    fn refresh(&mut self) -> Result<Vec<NearMiss>> {
        let set = &self.profile.active_constraints;
        let m = self.ctx.matcher();
        let out = match &self.last {
            Some(prev) => m.adapt(prev, set),
            None => m.recommend(set, self.detail),
        };
        match out {
            Ok(mut rec) => {
                rec.query_version = self.query_version();
                self.last = Some(rec);
                Ok(Vec::new())
            }
            Err(MatchError::NoCandidates { near_misses }) => {
                self.last = None;
                Ok(near_misses)
            }
            Err(MatchError::Kg(e)) => Err(e.into()),
        }
    }

    /// Logs `entry`, refolds and, if the profile moved (or nothing is shown
    /// yet), recomputes the recommendation.
    fn advance(&mut self, entry: LogEntry, folded: Option<PreferenceProfile>) -> Result<Vec<NearMiss>> {
        self.commit(entry)?;
        let next = folded.unwrap_or_else(|| fold(&self.ctx, &self.log));
        let changed = next != self.profile;
        self.profile = next;
        if changed || self.last.is_none() {
            self.refresh()
        } else {
            Ok(Vec::new())
        }
    }

    fn update(&self, near_misses: Vec<NearMiss>) -> Update {
        Update {
            action_id: self.query_version(),
            profile: self.profile.clone(),
            recommendation: self.last.clone(),
            near_misses,
            conflicts: self.profile.unresolved_conflicts().into_iter().cloned().collect(),
            proposals: self.learn_repetition(),
            query_version: self.query_version(),
        }
    }

    // ---- graph actions ----

    pub fn stage(&mut self, polarity: Polarity, node: &str) -> Result<LogEntry> {
        let at = self.clock.now();
        self.stage_at(polarity, node, at)
    }

    fn stage_at(&mut self, polarity: Polarity, node: &str, at: chrono::DateTime<chrono::Utc>) -> Result<LogEntry> {
        let id = self
            .ctx
            .graph
            .node(node)
            .map(|n| n.id.clone())
            .ok_or_else(|| SessionError::UnknownNode(node.to_string()))?;
        let kind = polarity.kind();
        if log::staged(&self.log).iter().any(|e| e.kind == kind && e.node() == Some(&id)) {
            return Err(SessionError::DuplicateStage { node: id, kind });
        }
        let entry = self.entry(kind, Target::Node(id), at);
        self.commit(entry.clone())?;
        Ok(entry)
    }

    fn tentative_apply(&self, at: chrono::DateTime<chrono::Utc>) -> Option<(LogEntry, PreferenceProfile)> {
        let batch: Vec<u64> = log::staged(&self.log).iter().map(|e| e.action_id).collect();
        if batch.is_empty() {
            return None;
        }
        let entry = self.entry(ActionKind::Apply, Target::Batch(batch), at);
        let mut log = self.log.clone();
        log.push(entry.clone());
        let folded = fold(&self.ctx, &log);
        Some((entry, folded))
    }

    /// Folds every staged action into the profile at once.
    pub fn apply(&mut self, expected_version: Option<u64>) -> Result<Update> {
        let at = self.clock.now();
        self.apply_at(expected_version, at)
    }

    fn apply_at(&mut self, expected: Option<u64>, at: chrono::DateTime<chrono::Utc>) -> Result<Update> {
        self.check_version(expected)?;
        let (entry, folded) = self.tentative_apply(at).ok_or(SessionError::NoStagedActions)?;
        let open: Vec<Conflict> = folded.unresolved_conflicts().into_iter().cloned().collect();
        if !open.is_empty() {
            return Err(SessionError::UnresolvedConflicts(open));
        }
        let near = self.advance(entry, Some(folded))?;
        Ok(self.update(near))
    }

    /// Takes back an applied action, an apply with its batch, or unstages a
    /// staged action.
    pub fn undo(&mut self, action_id: u64, expected_version: Option<u64>) -> Result<Update> {
        let at = self.clock.now();
        self.undo_at(action_id, expected_version, at)
    }

    fn undo_at(&mut self, action_id: u64, expected: Option<u64>, at: chrono::DateTime<chrono::Utc>) -> Result<Update> {
        self.check_version(expected)?;
        let current = with_current_status(&self.log);
        let target = current
            .iter()
            .find(|e| e.action_id == action_id)
            .ok_or(SessionError::UnknownAction(action_id))?;
        if target.kind == ActionKind::Undo {
            return Err(SessionError::NotUndoable(action_id));
        }
        if target.status == ActionStatus::Undone {
            return Err(SessionError::AlreadyUndone(action_id));
        }
        let entry = self.entry(ActionKind::Undo, Target::Action(action_id), at);
        let near = self.advance(entry, None)?;
        Ok(self.update(near))
    }

    // ---- answers ----

    pub fn resolve_conflict(&mut self, conflict: &str, keep: &str, expected_version: Option<u64>) -> Result<Update> {
        let at = self.clock.now();
        self.resolve_at(conflict, keep, expected_version, at)
    }

    /// Unresolved conflicts now, plus those the next apply would raise.
    pub fn flagged_conflicts(&self) -> Vec<Conflict> {
        let mut out: Vec<Conflict> = self.profile.unresolved_conflicts().into_iter().cloned().collect();
        if let Some((_, folded)) = self.tentative_apply(self.clock.now()) {
            for c in folded.unresolved_conflicts() {
                if !out.iter().any(|x| x.id == c.id) {
                    out.push(c.clone());
                }
            }
        }
        out
    }

    fn resolve_at(
        &mut self,
        conflict: &str,
        keep: &str,
        expected: Option<u64>,
        at: chrono::DateTime<chrono::Utc>,
    ) -> Result<Update> {
        self.check_version(expected)?;
        let already = self.profile.resolutions.contains_key(conflict)
            || self
                .profile
                .active_constraints
                .conflicts
                .iter()
                .any(|c| c.id == conflict && !c.is_unresolved());
        if already {
            return Err(SessionError::ConflictAlreadyResolved(conflict.to_string()));
        }
        let flagged = self.flagged_conflicts();
        let c = flagged
            .iter()
            .find(|c| c.id == conflict)
            .ok_or_else(|| SessionError::UnknownConflict(conflict.to_string()))?;
        if !c.involves(keep) {
            return Err(SessionError::InvalidChoice {
                subject: conflict.to_string(),
                choice: keep.to_string(),
            });
        }
        let answer = Answer::ResolveConflict {
            conflict: conflict.to_string(),
            keep: keep.to_string(),
        };
        let entry = self.entry(ActionKind::ClarificationAnswer, Target::Answer(answer), at);
        let near = self.advance(entry, None)?;
        Ok(self.update(near))
    }

    /// Accepts or declines a learned proposal.
    pub fn confirm_learned(&mut self, signature: &str, accept: bool, expected_version: Option<u64>) -> Result<Update> {
        let at = self.clock.now();
        self.confirm_at(signature, accept, expected_version, at)
    }

    fn confirm_at(
        &mut self,
        signature: &str,
        accept: bool,
        expected: Option<u64>,
        at: chrono::DateTime<chrono::Utc>,
    ) -> Result<Update> {
        self.check_version(expected)?;
        if !self.profile.proposals().any(|c| c.signature() == signature) {
            return Err(SessionError::UnknownProposal(signature.to_string()));
        }
        let answer = Answer::ConfirmLearned {
            signature: signature.to_string(),
            accept,
        };
        let entry = self.entry(ActionKind::ClarificationAnswer, Target::Answer(answer), at);
        let near = self.advance(entry, None)?;
        Ok(self.update(near))
    }

    pub fn answer_clarification(&mut self, term: &str, choice: &str, expected_version: Option<u64>) -> Result<Update> {
        let at = self.clock.now();
        self.clarify_at(term, choice, expected_version, at)
    }

    fn clarify_at(
        &mut self,
        term: &str,
        choice: &str,
        expected: Option<u64>,
        at: chrono::DateTime<chrono::Utc>,
    ) -> Result<Update> {
        self.check_version(expected)?;
        let clar = self
            .profile
            .active_constraints
            .pending_clarifications
            .iter()
            .find(|c| c.term == term)
            .ok_or_else(|| SessionError::UnknownClarification(term.to_string()))?;
        let valid = match clar.kind {
            ClarificationKind::Subjective => {
                reading_class(choice).is_some() && clar.candidates.iter().any(|c| reading_class(c) == reading_class(choice))
            }
            ClarificationKind::Synonym => !matches!(self.ctx.lexicon.resolve_entity(choice), Resolution::Unresolved),
        };
        if !valid {
            return Err(SessionError::InvalidChoice {
                subject: term.to_string(),
                choice: choice.to_string(),
            });
        }
        let answer = Answer::Clarify {
            term: term.to_string(),
            choice: choice.to_string(),
        };
        let entry = self.entry(ActionKind::ClarificationAnswer, Target::Answer(answer), at);
        let near = self.advance(entry, None)?;
        Ok(self.update(near))
    }

    // ---- views ----

    /// The current recommendation re-viewed at `detail`, without re-ranking.
    /// The flag reports whether `detail` was clamped.
    pub fn view(&self, detail: u32) -> Result<(SubgraphView, bool)> {
        let rec = self.last.as_ref().ok_or(SessionError::NoRecommendationYet)?;
        let (d, clamped) = self.ctx.matcher.clamp_detail(detail);
        let highlights = crate::matcher::highlights(rec, &self.profile.active_constraints);
        let view = self.ctx.matcher().view(rec, d, highlights)?;
        Ok((view, clamped))
    }

    pub fn query_context(&self) -> QueryContext {
        let mut ctx = QueryContext::default();
        for c in self.profile.active_constraints.filters() {
            ctx.constraints.push(c.body.describe());
            match &c.body {
                ConstraintBody::Bound { attr, cmp, .. } if cmp.is_upper() => ctx.reduced.push(attr.clone()),
                ConstraintBody::Bound { attr, .. } => ctx.increased.push(attr.clone()),
                ConstraintBody::Flag { name, value: true } => ctx.flags.push(name.clone()),
                _ => {}
            }
        }
        if let Some(rec) = &self.last {
            ctx.dishes = rec.summary_payload.dishes.iter().map(|d| d.name.clone()).collect();
        }
        ctx
    }

    /// Three follow-up queries for the current state.
    pub fn suggested_queries(&self) -> Result<Vec<String>> {
        Ok(self.ctx.gateway.suggest_queries(&self.query_context())?)
    }

    fn clarification_prompts(&self, warnings: &mut Vec<String>) -> Vec<ClarificationPrompt> {
        let labels: Vec<String> = self.ctx.lexicon.labels().iter().map(|(l, _)| l.clone()).collect();
        self.profile
            .active_constraints
            .pending_clarifications
            .iter()
            .map(|c| {
                let mut c = c.clone();
                if c.kind == ClarificationKind::Synonym && c.candidates.is_empty() {
                    match self.ctx.gateway.propose_synonyms(&c.term, &labels) {
                        Ok(cands) => c.candidates = cands,
                        Err(e) => warnings.push(format!("synonym proposal failed: {e}")),
                    }
                }
                let question = self.ctx.gateway.clarify(&c).unwrap_or_else(|e| {
                    warnings.push(format!("clarification prompt failed: {e}"));
                    format!("Could you say more about \"{}\"?", c.term)
                });
                ClarificationPrompt {
                    term: c.term,
                    kind: c.kind,
                    candidates: c.candidates,
                    question,
                }
            })
            .collect()
    }

    // ---- turns ----

    /// A short reply that picks one reading of a pending taste question.
    fn match_reading(&self, message: &str) -> Option<(Clarification, String)> {
        let lower = message.trim().trim_end_matches(['.', '!', '?']).to_lowercase();
        if lower.split_whitespace().count() > 4 {
            return None;
        }
        self.profile
            .active_constraints
            .pending_clarifications
            .iter()
            .filter(|c| c.kind == ClarificationKind::Subjective)
            .find_map(|c| {
                let hits: Vec<&String> = c.candidates.iter().filter(|r| lower.contains(r.as_str())).collect();
                match hits.as_slice() {
                    [one] => Some((c.clone(), (*one).clone())),
                    _ => None,
                }
            })
    }

    pub fn route_turn(&mut self, message: &str) -> Result<TurnResponse> {
        let at = self.clock.now();
        let msg = message.trim();
        if msg.is_empty() {
            return Err(SessionError::EmptyMessage);
        }
        if let Some((clar, reading)) = self.match_reading(msg) {
            let turn = self.query_version() + 1;
            let upd = self
                .clarify_at(&clar.term, &reading, None, at)
                .map_err(|e| SessionError::Turn { turn, source: Box::new(e) })?;
            let intent = Intent {
                category: IntentCategory::GeneralClarification,
                confidence: 1.0,
                rationale: format!("answers the pending question about \"{}\"", clar.term),
            };
            return self.respond(intent, upd.near_misses, true, Vec::new());
        }
        self.route_text_at(msg, None, at)
    }

    fn route_text_at(
        &mut self,
        msg: &str,
        recorded: Option<IntentCategory>,
        at: chrono::DateTime<chrono::Utc>,
    ) -> Result<TurnResponse> {
        let turn = self.query_version() + 1;
        let wrap = |e: SessionError| SessionError::Turn { turn, source: Box::new(e) };
        let mut warnings = Vec::new();
        let intent = match recorded {
            Some(category) => Intent {
                category,
                confidence: 1.0,
                rationale: "recorded".into(),
            },
            None => self.ctx.gateway.classify_intent(msg, &self.turns).unwrap_or_else(|e| {
                warnings.push(format!("intent classification fell back to rules: {e}"));
                classify_by_rules(msg, &self.turns)
            }),
        };
        let mut entry = self.entry(ActionKind::TextQuery, Target::Text(msg.to_string()), at);
        entry.intent = Some(intent.category);

        if !intent.category.bears_constraints() {
            self.commit(entry).map_err(wrap)?;
            self.turns.push(PriorTurn {
                message: msg.to_string(),
                produced_recommendation: false,
            });
            let reply = match intent.category {
                IntentCategory::InformationRequest => {
                    let empty = SummaryPayload::default();
                    let payload = self.last.as_ref().map(|r| &r.summary_payload).unwrap_or(&empty);
                    self.ctx.gateway.answer(msg, payload).unwrap_or_else(|e| {
                        warnings.push(format!("answer generation failed: {e}"));
                        crate::llm::nutrition_answer(payload)
                    })
                }
                _ => HELP.to_string(),
            };
            let mut resp = self.respond(intent, Vec::new(), false, warnings)?;
            if resp.reply_text.is_empty() {
                resp.reply_text = reply;
            } else {
                resp.reply_text = format!("{reply}\n\n{}", resp.reply_text);
            }
            return Ok(resp);
        }

        let parsed = parse_constraints(msg, &self.ctx.parse_context(), 0);
        let before = self.last.clone();
        let near = self.advance(entry, None).map_err(wrap)?;
        let produced = self.last.is_some() && self.last != before;
        self.turns.push(PriorTurn {
            message: msg.to_string(),
            produced_recommendation: self.last.is_some(),
        });
        let mut resp = self.respond(intent, near, produced, warnings)?;
        if let Err(QueryError::NoParsableContent) = parsed {
            resp.reply_text = if resp.reply_text.is_empty() {
                NO_PARSE.to_string()
            } else {
                format!("{NO_PARSE}\n\n{}", resp.reply_text)
            };
        }
        Ok(resp)
    }

    /// Reply text and attachments for the state after a turn.
    fn respond(
        &self,
        intent: Intent,
        near_misses: Vec<NearMiss>,
        with_summary: bool,
        mut warnings: Vec<String>,
    ) -> Result<TurnResponse> {
        let mut parts = Vec::new();
        if with_summary {
            if let Some(rec) = &self.last {
                parts.push(self.ctx.gateway.summarize(&rec.summary_payload).unwrap_or_else(|e| {
                    warnings.push(format!("summary generation fell back to the template: {e}"));
                    crate::llm::summary_text(&rec.summary_payload)
                }));
            }
        }
        if !near_misses.is_empty() {
            let items: Vec<String> = near_misses
                .iter()
                .map(|n| format!("{} ({} recipes)", n.description, n.candidates))
                .collect();
            parts.push(format!(
                "No recipe satisfies all of your preferences. Dropping one of these would help: {}.",
                items.join("; ")
            ));
        } else if with_summary && self.last.is_none() {
            parts.push("No recipe satisfies all of your preferences.".to_string());
        }
        let conflicts: Vec<Conflict> = self.profile.unresolved_conflicts().into_iter().cloned().collect();
        for c in &conflicts {
            parts.push(format!(
                "These preferences conflict: {}. Which one should I keep: {} or {}?",
                c.explanation, c.a, c.b
            ));
        }
        let proposals = self.learn_repetition();
        for p in &proposals {
            parts.push(format!(
                "You have turned down similar items several times. Should I also apply \"{}\" from now on?",
                p.body.describe()
            ));
        }
        let clarifications = self.clarification_prompts(&mut warnings);
        parts.extend(clarifications.iter().map(|c| c.question.clone()));
        Ok(TurnResponse {
            action_id: self.query_version(),
            intent,
            reply_text: parts.join("\n\n"),
            recommendation: if with_summary { self.last.clone() } else { None },
            pending_clarifications: clarifications,
            conflicts,
            proposals,
            near_misses,
            warnings,
            query_version: self.query_version(),
        })
    }

    // ---- replay ----

    /// Rebuilds a session by re-running every entry of `entries` in order.
    pub fn replay(
        ctx: Arc<SessionContext>,
        id: impl Into<String>,
        entries: &[LogEntry],
        clock: Arc<dyn Clock>,
    ) -> Result<Session> {
        let mut s = Session::new(ctx, id, clock);
        for e in entries {
            let diverged = |reason: String| SessionError::ReplayDiverged {
                action_id: e.action_id,
                reason,
            };
            if e.action_id != s.query_version() + 1 {
                return Err(diverged(format!("expected action {}", s.query_version() + 1)));
            }
            let at = e.timestamp;
            let outcome = match (&e.kind, &e.target) {
                (ActionKind::TextQuery, Target::Text(t)) => {
                    let intent = e.intent.unwrap_or_else(|| classify_by_rules(t, &s.turns).category);
                    s.route_text_at(t, Some(intent), at).map(|_| ())
                }
                (ActionKind::IncludeNode, Target::Node(n)) => s.stage_at(Polarity::Include, n.as_str(), at).map(|_| ()),
                (ActionKind::ExcludeNode, Target::Node(n)) => s.stage_at(Polarity::Exclude, n.as_str(), at).map(|_| ()),
                (ActionKind::Apply, Target::Batch(batch)) => {
                    let mine: Vec<u64> = log::staged(&s.log).iter().map(|x| x.action_id).collect();
                    if &mine != batch {
                        return Err(diverged(format!("staged {mine:?}, log applied {batch:?}")));
                    }
                    s.apply_at(None, at).map(|_| ())
                }
                (ActionKind::Undo, Target::Action(id)) => s.undo_at(*id, None, at).map(|_| ()),
                (ActionKind::ClarificationAnswer, Target::Answer(a)) => match a {
                    Answer::ResolveConflict { conflict, keep } => s.resolve_at(conflict, keep, None, at).map(|_| ()),
                    Answer::ConfirmLearned { signature, accept } => {
                        s.confirm_at(signature, *accept, None, at).map(|_| ())
                    }
                    Answer::Clarify { term, choice } => s.clarify_at(term, choice, None, at).map(|_| ()),
                },
                _ => return Err(diverged("kind and target do not match".into())),
            };
            outcome.map_err(|err| diverged(err.to_string()))?;
        }
        Ok(s)
    }

    /// Pins the session to a newer snapshot and recomputes.
    pub fn repin(&mut self, ctx: Arc<SessionContext>) -> Result<Update> {
        self.ctx = ctx;
        self.profile = fold(&self.ctx, &self.log);
        let near = self.refresh()?;
        Ok(self.update(near))
    }
}

/// One-shot query against a fresh session.
pub fn query_once(ctx: Arc<SessionContext>, message: &str) -> Result<TurnResponse> {
    Session::new(ctx, "one-shot", Arc::new(SystemClock)).route_turn(message)
}
