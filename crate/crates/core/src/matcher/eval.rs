//! Per-recipe constraint evaluation and candidate retrieval.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Entailments;
use crate::kg::registry::{COMPOSITION, SUBSTITUTABLE_BY};
use crate::kg::{Direction, GraphSnapshot, NodeId, NodeKind};
use crate::query::{Constraint, ConstraintBody, ConstraintSet, EntityRef, Origin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    /// Missing attributes fail bounded keys.
    Strict,
    /// Missing attributes and unknown classes are tolerated and reported.
    #[default]
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Satisfied,
    /// Satisfied only through a `substitutableBy` link to `via`.
    Substituted { via: NodeId },
    /// Cannot be checked: an attribute or a class is unknown.
    Unknown { detail: String },
    Violated { detail: String },
}

/// What a recipe is made of, computed once per recipe.
pub struct RecipeFacts<'g> {
    pub id: &'g NodeId,
    /// Composition closure, the recipe itself included.
    pub closure: BTreeSet<NodeId>,
    /// Closure plus every direct out-neighbor (cuisine, conditions).
    pub reach: BTreeSet<NodeId>,
    /// Closure members without any categorical attribute, recipe excluded.
    pub unclassified: Vec<NodeId>,
    graph: &'g GraphSnapshot,
}

impl<'g> RecipeFacts<'g> {
    pub fn new(graph: &'g GraphSnapshot, id: &'g NodeId) -> Self {
        let closure = graph.closure(id.as_str(), &COMPOSITION);
        let mut reach = closure.clone();
        if let Ok(out) = graph.neighbors(id.as_str(), None, Direction::Out) {
            reach.extend(out.into_iter().map(|(_, n)| n));
        }
        let unclassified = closure
            .iter()
            .filter(|n| *n != id)
            .filter(|n| {
                graph
                    .node(n.as_str())
                    .is_some_and(|x| x.kind == NodeKind::Ingredient && x.categorical_attrs.is_empty())
            })
            .cloned()
            .collect();
        RecipeFacts {
            id,
            closure,
            reach,
            unclassified,
            graph,
        }
    }

    /// First closure member carrying `class`, if any.
    fn member_with_class(&self, class: &str) -> Option<&NodeId> {
        self.closure.iter().find(|n| {
            self.graph
                .node(n.as_str())
                .is_some_and(|x| x.categorical_attrs.values().any(|v| v == class))
        })
    }

    fn unknown_classes(&self) -> Option<Verdict> {
        (!self.unclassified.is_empty()).then(|| Verdict::Unknown {
            detail: format!(
                "unknown class: {}",
                self.unclassified.iter().map(|n| n.as_str()).collect::<Vec<_>>().join(", ")
            ),
        })
    }

    fn substitute_for(&self, wanted: &NodeId) -> Option<NodeId> {
        let subs = self
            .graph
            .neighbors(wanted.as_str(), Some(SUBSTITUTABLE_BY), Direction::Both)
            .ok()?;
        subs.into_iter().map(|(_, n)| n).find(|n| self.closure.contains(n))
    }

    pub fn evaluate(&self, body: &ConstraintBody, entailments: &Entailments) -> Verdict {
        let node = self.graph.node(self.id.as_str());
        match body {
            ConstraintBody::Flag { name, value } => {
                let hit = entailments
                    .classes(name)
                    .find_map(|c| self.member_with_class(c).map(|n| (c, n)));
                match (value, hit) {
                    (true, Some((c, n))) => Verdict::Violated {
                        detail: format!("{n} is {c}"),
                    },
                    (false, Some(_)) => Verdict::Satisfied,
                    (true, None) => self.unknown_classes().unwrap_or(Verdict::Satisfied),
                    (false, None) => self.unknown_classes().unwrap_or(Verdict::Violated {
                        detail: format!("nothing rules out {name}"),
                    }),
                }
            }
            ConstraintBody::Bound { attr, cmp, .. } => {
                let Some(q) = node.and_then(|n| n.numeric_attrs.get(attr)) else {
                    return Verdict::Unknown {
                        detail: format!("attribute_missing: {attr}"),
                    };
                };
                let limit = body.canonical_limit().expect("bound has a limit");
                if cmp.holds(q.canonical_value(), limit) {
                    Verdict::Satisfied
                } else {
                    Verdict::Violated {
                        detail: format!("{attr} is {}", crate::kg::format_number(q.value)),
                    }
                }
            }
            ConstraintBody::ExcludeEntity { entity } => match entity {
                EntityRef::Node { id } => {
                    if self.reach.contains(id) {
                        Verdict::Violated {
                            detail: format!("contains {id}"),
                        }
                    } else {
                        Verdict::Satisfied
                    }
                }
                EntityRef::Class { name } => match self.member_with_class(name) {
                    Some(n) => Verdict::Violated {
                        detail: format!("{n} is {name}"),
                    },
                    None => self.unknown_classes().unwrap_or(Verdict::Satisfied),
                },
                EntityRef::Unresolved { .. } => Verdict::Satisfied,
            },
            ConstraintBody::IncludeEntity { entity } => match entity {
                EntityRef::Node { id } => {
                    if self.reach.contains(id) {
                        Verdict::Satisfied
                    } else if let Some(via) = self.substitute_for(id) {
                        Verdict::Substituted { via }
                    } else {
                        Verdict::Violated {
                            detail: format!("does not contain {id}"),
                        }
                    }
                }
                EntityRef::Class { name } => match self.member_with_class(name) {
                    Some(_) => Verdict::Satisfied,
                    None => Verdict::Violated {
                        detail: format!("nothing in it is {name}"),
                    },
                },
                EntityRef::Unresolved { .. } => Verdict::Satisfied,
            },
            ConstraintBody::MethodFlag { name, value } => {
                match node.and_then(|n| n.categorical_attrs.get(name)).map(String::as_str) {
                    Some("true") if *value => Verdict::Satisfied,
                    Some("false") if !*value => Verdict::Satisfied,
                    Some(v @ ("true" | "false")) => Verdict::Violated {
                        detail: format!("{name} is {v}"),
                    },
                    _ => Verdict::Unknown {
                        detail: format!("attribute_missing: {name}"),
                    },
                }
            }
            ConstraintBody::Subjective { .. } => Verdict::Satisfied,
        }
    }
}

/// A learned constraint only ever demotes; everything else filters.
pub fn is_soft(c: &Constraint) -> bool {
    c.origin == Origin::Learned
}

/// One evaluated (constraint, verdict) pair.
#[derive(Debug, Clone)]
pub struct Checked<'c> {
    pub constraint: &'c Constraint,
    pub verdict: Verdict,
}

/// Evaluates every filter-effective constraint; `None` when a hard
/// constraint is violated (or, in strict mode, unknown).
pub fn check_recipe<'c>(
    facts: &RecipeFacts<'_>,
    set: &'c ConstraintSet,
    entailments: &Entailments,
    mode: RetrievalMode,
) -> Option<Vec<Checked<'c>>> {
    let mut out = Vec::new();
    for c in set.filters() {
        let verdict = facts.evaluate(&c.body, entailments);
        if !is_soft(c) {
            match (&verdict, mode) {
                (Verdict::Violated { .. }, _) => return None,
                (Verdict::Unknown { .. }, RetrievalMode::Strict) => return None,
                _ => {}
            }
        }
        out.push(Checked { constraint: c, verdict });
    }
    Some(out)
}

/// Recipe ids surviving `set`, in id order.
pub fn candidate_retrieval(
    set: &ConstraintSet,
    graph: &GraphSnapshot,
    entailments: &Entailments,
    mode: RetrievalMode,
) -> Vec<NodeId> {
    let ids = graph.recipe_ids();
    ids.iter()
        .filter(|id| check_recipe(&RecipeFacts::new(graph, id), set, entailments, mode).is_some())
        .cloned()
        .collect()
}
