//! Pairwise contradiction checks between constraints.

use std::collections::BTreeSet;

use super::constraint::{Conflict, ConflictKind, Constraint, ConstraintBody, EntityRef};
use crate::corpus::Entailments;
use crate::kg::registry::COMPOSITION;
use crate::kg::GraphSnapshot;

/// Every categorical class found on `node` or anything it is made of.
pub fn composition_classes(graph: &GraphSnapshot, node: &str) -> BTreeSet<String> {
    graph
        .closure(node, &COMPOSITION)
        .iter()
        .filter_map(|id| graph.node(id.as_str()))
        .flat_map(|n| n.categorical_attrs.values().cloned())
        .collect()
}

fn entity_classes(graph: &GraphSnapshot, entity: &EntityRef) -> BTreeSet<String> {
    match entity {
        EntityRef::Node { id } => composition_classes(graph, id.as_str()),
        EntityRef::Class { name } => BTreeSet::from([name.clone()]),
        EntityRef::Unresolved { .. } => BTreeSet::new(),
    }
}

/// Interval check for two bounds on the same attribute.
fn bounds_disjoint(a: &ConstraintBody, b: &ConstraintBody) -> bool {
    let (
        ConstraintBody::Bound { attr: xa, cmp: ca, .. },
        ConstraintBody::Bound { attr: xb, cmp: cb, .. },
    ) = (a, b)
    else {
        return false;
    };
    if xa != xb || ca.is_upper() == cb.is_upper() {
        return false;
    }
    let (upper, lower) = if ca.is_upper() { (a, b) } else { (b, a) };
    let (ConstraintBody::Bound { cmp: cu, .. }, ConstraintBody::Bound { cmp: cl, .. }) = (upper, lower) else {
        unreachable!()
    };
    let hi = upper.canonical_limit().unwrap();
    let lo = lower.canonical_limit().unwrap();
    lo > hi || (lo == hi && (cu.is_strict() || cl.is_strict()))
}

/// Why `a` and `b` cannot both hold, if they cannot.
pub fn pair_conflict(
    a: &ConstraintBody,
    b: &ConstraintBody,
    graph: &GraphSnapshot,
    entailments: &Entailments,
) -> Option<(ConflictKind, String)> {
    use ConstraintBody::*;
    match (a, b) {
        (Flag { name: n1, value: v1 }, Flag { name: n2, value: v2 }) if n1 == n2 && v1 != v2 => {
            Some((ConflictKind::OppositeFlags, format!("{n1} is both required and rejected")))
        }
        (Flag { name, value: true }, IncludeEntity { entity }) | (IncludeEntity { entity }, Flag { name, value: true }) => {
            let classes = entity_classes(graph, entity);
            let hit: Vec<&str> = entailments.classes(name).filter(|c| classes.contains(*c)).collect();
            (!hit.is_empty()).then(|| {
                (
                    ConflictKind::FlagViolation,
                    format!("{name} rules out {}, which {} brings in", hit.join(", "), entity_label(entity)),
                )
            })
        }
        (IncludeEntity { entity: i }, ExcludeEntity { entity: e }) | (ExcludeEntity { entity: e }, IncludeEntity { entity: i }) => {
            if i == e {
                return Some((
                    ConflictKind::IncludeExclude,
                    format!("{} is both included and excluded", entity_label(i)),
                ));
            }
            if let (EntityRef::Node { .. }, EntityRef::Class { name }) = (i, e) {
                if entity_classes(graph, i).contains(name) {
                    return Some((
                        ConflictKind::IncludeExclude,
                        format!("{} belongs to excluded class {name}", entity_label(i)),
                    ));
                }
            }
            None
        }
        (Bound { attr, .. }, Bound { .. }) if bounds_disjoint(a, b) => Some((
            ConflictKind::EmptyInterval,
            format!("no value of {attr} satisfies both {} and {}", a.describe(), b.describe()),
        )),
        (MethodFlag { name: n1, value: v1 }, MethodFlag { name: n2, value: v2 }) if n1 == n2 && v1 != v2 => {
            Some((ConflictKind::OppositeMethods, format!("{n1} is both required and rejected")))
        }
        _ => None,
    }
}

fn entity_label(e: &EntityRef) -> String {
    match e {
        EntityRef::Node { id } => id.to_string(),
        EntityRef::Class { name } => format!("class {name}"),
        EntityRef::Unresolved { text } => format!("\"{text}\""),
    }
}

/// All contradicting pairs among the non-superseded constraints, in arrival
/// order of the later member. Every pair starts out unresolved.
pub fn detect_conflicts(constraints: &[Constraint], graph: &GraphSnapshot, entailments: &Entailments) -> Vec<Conflict> {
    let live: Vec<&Constraint> = constraints
        .iter()
        .filter(|c| c.status != super::constraint::ConstraintStatus::Superseded)
        .collect();
    let mut out: Vec<Conflict> = Vec::new();
    for j in 0..live.len() {
        for i in 0..j {
            if let Some((kind, why)) = pair_conflict(&live[i].body, &live[j].body, graph, entailments) {
                let c = Conflict::new(&live[i].body, &live[j].body, kind, why);
                if !out.iter().any(|x| x.id == c.id) {
                    out.push(c);
                }
            }
        }
    }
    out
}
