//! Retrieval, borderline partitioning, ranking and subgraph assembly.

mod eval;
pub mod payload;
mod view;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use eval::{candidate_retrieval, check_recipe, is_soft, Checked, RecipeFacts, RetrievalMode, Verdict};
pub use payload::{build_payload, default_bands, AttrFact, Band, DishFacts, SummaryPayload};
pub use view::{DiffMarker, SubgraphView, ViewEdge, ViewNode};

use crate::corpus::Entailments;
use crate::kg::{GraphSnapshot, KgError, NodeId};
use crate::query::{ConstraintBody, ConstraintSet, EntityRef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreWeights {
    pub satisfaction: f64,
    pub affinity: f64,
    pub borderline_penalty: f64,
    pub tightness: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            satisfaction: 0.5,
            affinity: 0.25,
            borderline_penalty: 0.15,
            tightness: 0.10,
        }
    }
}

impl ScoreWeights {
    pub fn total(&self) -> f64 {
        self.satisfaction + self.affinity + self.borderline_penalty + self.tightness
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherConfig {
    pub weights: ScoreWeights,
    /// Results shown per recommendation, borderline ones included.
    pub result_count: usize,
    pub hop_cap: u32,
    pub nodes_per_detail: usize,
    pub max_detail: u32,
    pub default_detail: u32,
    pub mode: RetrievalMode,
    pub bands: Vec<Band>,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig {
            weights: ScoreWeights::default(),
            result_count: 5,
            hop_cap: 3,
            nodes_per_detail: 10,
            max_detail: 5,
            default_detail: 2,
            mode: RetrievalMode::Lenient,
            bands: default_bands(),
        }
    }
}

impl MatcherConfig {
    /// (hop budget, node budget) for a detail level.
    pub fn budgets(&self, detail: u32, seeds: usize) -> (u32, usize) {
        let hop = detail.min(self.hop_cap).max(1);
        let nodes = (self.nodes_per_detail * detail as usize).max(seeds).max(1);
        (hop, nodes)
    }

    /// Clamps `detail` into `1..=max_detail`; the flag says whether it moved.
    pub fn clamp_detail(&self, detail: u32) -> (u32, bool) {
        let d = detail.clamp(1, self.max_detail.max(1));
        (d, d != detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStatus {
    Full,
    Borderline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnmetReason {
    Violated,
    AttributeMissing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unmet {
    pub constraint: String,
    pub reason: UnmetReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstitutionHit {
    pub constraint: String,
    pub wanted: NodeId,
    pub via: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub recipe: NodeId,
    pub status: MatchStatus,
    /// Signatures of constraints the recipe meets.
    pub satisfied: Vec<String>,
    pub violated_or_unknown: Vec<Unmet>,
    pub substitutions: Vec<SubstitutionHit>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub results: Vec<MatchResult>,
    pub subgraph: SubgraphView,
    pub summary_payload: SummaryPayload,
    /// Set by the session that asked for it; 0 outside a session.
    pub query_version: u64,
    pub snapshot_version: u64,
    /// Excluded entity nodes kept out of every view of this recommendation.
    pub excluded_nodes: Vec<NodeId>,
}

impl Recommendation {
    pub fn recipe_ids(&self) -> Vec<NodeId> {
        self.results.iter().map(|r| r.recipe.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NearMiss {
    pub constraint: String,
    pub description: String,
    /// Recipes that survive once this constraint is dropped.
    pub candidates: usize,
}

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("no recipe satisfies the constraints")]
    NoCandidates { near_misses: Vec<NearMiss> },
    #[error(transparent)]
    Kg(#[from] KgError),
}

pub struct Matcher<'a> {
    pub graph: &'a GraphSnapshot,
    pub entailments: &'a Entailments,
    pub config: &'a MatcherConfig,
}

/// Score of one recipe from its checked constraints, in [0, 1].
pub fn score(checks: &[Checked<'_>], status: MatchStatus, graph: &GraphSnapshot, recipe: &str, w: &ScoreWeights) -> f64 {
    let hard: Vec<&Checked<'_>> = checks.iter().filter(|c| !is_soft(c.constraint)).collect();
    let n = hard.len();
    let exact = hard.iter().filter(|c| c.verdict == Verdict::Satisfied).count();
    let satisfaction = if n == 0 { 1.0 } else { exact as f64 / n as f64 };

    let mut includes = 0usize;
    let mut learned = 0usize;
    let mut hits = 0.0;
    let mut near = 0.0;
    for c in checks {
        if is_soft(c.constraint) {
            learned += 1;
            match (&c.constraint.body, &c.verdict) {
                (ConstraintBody::ExcludeEntity { .. }, Verdict::Violated { .. }) => near += 1.0,
                (ConstraintBody::IncludeEntity { .. }, Verdict::Satisfied) => hits += 1.0,
                (ConstraintBody::IncludeEntity { .. }, Verdict::Substituted { .. }) => hits += 0.5,
                _ => {}
            }
        } else if matches!(c.constraint.body, ConstraintBody::IncludeEntity { .. }) {
            includes += 1;
            hits += match c.verdict {
                Verdict::Satisfied => 1.0,
                Verdict::Substituted { .. } => 0.5,
                _ => 0.0,
            };
        }
    }
    let affinity = ((hits - near) / (includes + learned).max(1) as f64 + 1.0) / 2.0;

    let borderline = if status == MatchStatus::Borderline { 1.0 } else { 0.0 };

    let node = graph.node(recipe);
    let margins: Vec<f64> = checks
        .iter()
        .filter(|c| c.verdict == Verdict::Satisfied)
        .filter_map(|c| {
            let ConstraintBody::Bound { attr, .. } = &c.constraint.body else {
                return None;
            };
            let value = node?.numeric_attrs.get(attr)?.canonical_value();
            let limit = c.constraint.body.canonical_limit()?;
            Some(if limit > 0.0 { ((limit - value).abs() / limit).min(1.0) } else { 1.0 })
        })
        .collect();
    let tightness = if margins.is_empty() {
        0.0
    } else {
        margins.iter().sum::<f64>() / margins.len() as f64
    };

    let total = w.total();
    if total <= 0.0 {
        return 0.0;
    }
    (w.satisfaction * satisfaction + w.affinity * affinity + w.borderline_penalty * (1.0 - borderline)
        + w.tightness * tightness)
        / total
}

impl<'a> Matcher<'a> {
    pub fn new(graph: &'a GraphSnapshot, entailments: &'a Entailments, config: &'a MatcherConfig) -> Self {
        Matcher {
            graph,
            entailments,
            config,
        }
    }

    fn result_for(&self, id: &NodeId, set: &ConstraintSet) -> Option<MatchResult> {
        let facts = RecipeFacts::new(self.graph, id);
        let checks = check_recipe(&facts, set, self.entailments, self.config.mode)?;
        let mut satisfied = Vec::new();
        let mut unmet = Vec::new();
        let mut substitutions = Vec::new();
        let mut soft_misses = Vec::new();
        for c in &checks {
            let sig = c.constraint.signature();
            if is_soft(c.constraint) {
                // A learned exclusion that the dish breaks is worth telling; a
                // learned preference it lacks is not.
                if let (ConstraintBody::ExcludeEntity { .. }, Verdict::Violated { detail }) = (&c.constraint.body, &c.verdict) {
                    soft_misses.push(Unmet {
                        constraint: sig,
                        reason: UnmetReason::Violated,
                        detail: detail.clone(),
                    });
                } else if matches!(c.verdict, Verdict::Satisfied | Verdict::Substituted { .. }) {
                    satisfied.push(sig);
                }
                continue;
            }
            match &c.verdict {
                Verdict::Satisfied => satisfied.push(sig),
                Verdict::Substituted { via } => {
                    if let ConstraintBody::IncludeEntity {
                        entity: EntityRef::Node { id: wanted },
                    } = &c.constraint.body
                    {
                        substitutions.push(SubstitutionHit {
                            constraint: sig.clone(),
                            wanted: wanted.clone(),
                            via: via.clone(),
                        });
                    }
                    satisfied.push(sig);
                }
                Verdict::Unknown { detail } => unmet.push(Unmet {
                    constraint: sig,
                    reason: UnmetReason::AttributeMissing,
                    detail: detail.clone(),
                }),
                Verdict::Violated { detail } => unmet.push(Unmet {
                    constraint: sig,
                    reason: UnmetReason::Violated,
                    detail: detail.clone(),
                }),
            }
        }
        let status = if unmet.is_empty() {
            MatchStatus::Full
        } else {
            MatchStatus::Borderline
        };
        unmet.extend(soft_misses);
        let score = score(&checks, status, self.graph, id.as_str(), &self.config.weights);
        Some(MatchResult {
            recipe: id.clone(),
            status,
            satisfied,
            violated_or_unknown: unmet,
            substitutions,
            score,
        })
    }

    /// Every surviving recipe, ranked by score (descending) then id.
    pub fn rank(&self, set: &ConstraintSet) -> Vec<MatchResult> {
        let ids = self.graph.recipe_ids();
        let mut results: Vec<MatchResult> = ids.iter().filter_map(|id| self.result_for(id, set)).collect();
        results.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.recipe.cmp(&b.recipe)));
        results
    }

    /// Splits candidates into full and borderline matches, keeping order.
    pub fn partition_borderline(&self, set: &ConstraintSet) -> (Vec<MatchResult>, Vec<MatchResult>) {
        self.rank(set).into_iter().partition(|r| r.status == MatchStatus::Full)
    }

    /// For an empty result: which single hard constraint, dropped, would let
    /// recipes through.
    pub fn near_misses(&self, set: &ConstraintSet) -> Vec<NearMiss> {
        let hard: Vec<usize> = set
            .constraints
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_active() && c.body.is_filter_effective() && !is_soft(c))
            .map(|(i, _)| i)
            .collect();
        hard.into_iter()
            .filter_map(|i| {
                let mut reduced = set.clone();
                let dropped = reduced.constraints.remove(i);
                let n = candidate_retrieval(&reduced, self.graph, self.entailments, self.config.mode).len();
                (n > 0).then(|| NearMiss {
                    constraint: dropped.signature(),
                    description: dropped.body.describe(),
                    candidates: n,
                })
            })
            .collect()
    }

    pub fn recommend(&self, set: &ConstraintSet, detail: u32) -> Result<Recommendation, MatchError> {
        let mut results = self.rank(set);
        results.truncate(self.config.result_count);
        if results.is_empty() {
            return Err(MatchError::NoCandidates {
                near_misses: self.near_misses(set),
            });
        }
        let excluded_nodes: Vec<NodeId> = set
            .filters()
            .filter(|c| !is_soft(c))
            .filter_map(|c| match &c.body {
                ConstraintBody::ExcludeEntity {
                    entity: EntityRef::Node { id },
                } => Some(id.clone()),
                _ => None,
            })
            .collect();
        let mut rec = Recommendation {
            summary_payload: build_payload(&results, set, self.graph, self.entailments, &self.config.bands),
            results,
            subgraph: SubgraphView {
                nodes: Vec::new(),
                edges: Vec::new(),
                detail_level: detail,
                diff: None,
                highlights: Vec::new(),
            },
            query_version: 0,
            snapshot_version: self.graph.version(),
            excluded_nodes,
        };
        let highlights = highlights(&rec, set);
        rec.subgraph = self.view(&rec, detail, highlights)?;
        Ok(rec)
    }

    /// The view of `rec` at another detail level, without re-ranking.
    pub fn view(&self, rec: &Recommendation, detail: u32, highlights: Vec<NodeId>) -> Result<SubgraphView, KgError> {
        let (detail, _) = self.config.clamp_detail(detail);
        let seeds = rec.recipe_ids();
        let (hop, nodes) = self.config.budgets(detail, seeds.len());
        let blocked: HashSet<NodeId> = rec.excluded_nodes.iter().cloned().collect();
        let sub = self.graph.extract_subgraph_filtered(&seeds, hop, nodes, &blocked)?;
        Ok(SubgraphView::from_subgraph(self.graph, &sub, detail, highlights))
    }

    /// Recomputes under `set` and marks the new view against `prev`.
    pub fn adapt(&self, prev: &Recommendation, set: &ConstraintSet) -> Result<Recommendation, MatchError> {
        let mut rec = self.recommend(set, prev.subgraph.detail_level)?;
        rec.subgraph.mark_against(&prev.subgraph);
        Ok(rec)
    }
}

/// Result recipes plus included entity nodes.
pub fn highlights(rec: &Recommendation, set: &ConstraintSet) -> Vec<NodeId> {
    let mut out = rec.recipe_ids();
    for c in set.filters() {
        if let ConstraintBody::IncludeEntity {
            entity: EntityRef::Node { id },
        } = &c.body
        {
            if !out.contains(id) {
                out.push(id.clone());
            }
        }
    }
    out
}
