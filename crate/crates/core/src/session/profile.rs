//! The preference profile as a pure fold over the interaction record.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::log::{applied_ids, undone_ids, ActionKind, Answer, LogEntry, Target};
use super::SessionContext;
use crate::kg::NodeId;
use crate::query::{
    composition_classes, pair_conflict, parse_constraints, Citation, ClarificationKind, Conflict, Constraint,
    ConstraintBody, ConstraintSet, ConstraintStatus, EntityRef, Origin, ParseContext, Resolution, ResolutionStatus,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreferenceProfile {
    /// Everything said or done so far; losers of a conflict stay in with a
    /// superseded status.
    pub active_constraints: ConstraintSet,
    /// Applied exclusions per `node:<id>` and `class:<name>`.
    pub rejection_counters: BTreeMap<String, u32>,
    /// Applied inclusions, keyed the same way.
    pub selection_counters: BTreeMap<String, u32>,
    /// Learned constraints: pending proposals, confirmed (active) ones and
    /// declined (superseded) ones.
    pub learned: Vec<Constraint>,
    /// Conflict id to the signature the user chose to keep.
    pub resolutions: BTreeMap<String, String>,
}

impl PreferenceProfile {
    pub fn proposals(&self) -> impl Iterator<Item = &Constraint> {
        self.learned.iter().filter(|c| c.status == ConstraintStatus::Pending)
    }

    pub fn unresolved_conflicts(&self) -> Vec<&Conflict> {
        self.active_constraints.unresolved_conflicts().collect()
    }
}

fn live(c: &Constraint) -> bool {
    c.status != ConstraintStatus::Superseded
}

fn is_flag(b: &ConstraintBody) -> bool {
    matches!(b, ConstraintBody::Flag { .. })
}

/// Two constraints with the same merge key replace each other quietly.
fn merge_key(b: &ConstraintBody) -> String {
    match b {
        ConstraintBody::Bound { cmp, .. } => {
            format!("{}:{}", b.key(), if cmp.is_upper() { "upper" } else { "lower" })
        }
        _ => b.key(),
    }
}

/// The flavor class a subjective reading stands for.
pub fn reading_class(reading: &str) -> Option<&'static str> {
    match reading.trim().to_lowercase().as_str() {
        "sweet" => Some("sweet"),
        "savory" | "savoury" => Some("savory"),
        "high in umami" | "umami" => Some("umami"),
        _ => None,
    }
}

struct Folder<'a> {
    ctx: &'a SessionContext,
    p: PreferenceProfile,
    turn: u32,
    rejected: BTreeMap<String, (u32, u32)>,
    selected: BTreeMap<String, (u32, u32)>,
    confirmations: BTreeMap<String, bool>,
}

impl<'a> Folder<'a> {
    fn set(&mut self) -> &mut ConstraintSet {
        &mut self.p.active_constraints
    }

    /// Adds `c` with latest-wins resolution. `peers` are signatures from the
    /// same message, which have no order between them.
    fn merge(&mut self, mut c: Constraint, peers: &[String]) {
        let sig = c.signature();
        if self.p.active_constraints.constraints.iter().any(|e| live(e) && e.signature() == sig) {
            return;
        }
        let mk = merge_key(&c.body);
        let (graph, ent) = (&*self.ctx.graph, &*self.ctx.entailments);
        let mut lost = false;
        let mut pending = false;
        let mut found = Vec::new();
        for e in self.p.active_constraints.constraints.iter_mut().filter(|e| live(e)) {
            let Some((kind, why)) = pair_conflict(&e.body, &c.body, graph, ent) else {
                if merge_key(&e.body) == mk {
                    e.status = ConstraintStatus::Superseded;
                }
                continue;
            };
            let mut conflict = Conflict::new(&e.body, &c.body, kind, why);
            let esig = e.signature();
            if let Some(kept) = self.p.resolutions.get(&conflict.id) {
                if *kept == sig {
                    e.status = ConstraintStatus::Superseded;
                } else {
                    lost = true;
                }
                conflict.status = ResolutionStatus::Resolved { kept: kept.clone() };
            } else if peers.contains(&esig) || is_flag(&e.body) {
                // Overriding a flag, or choosing within one message, needs the user.
                if is_flag(&c.body) && !is_flag(&e.body) {
                    e.status = ConstraintStatus::Pending;
                } else {
                    pending = true;
                }
            } else {
                e.status = ConstraintStatus::Superseded;
                conflict.status = ResolutionStatus::Resolved { kept: sig.clone() };
            }
            found.push(conflict);
        }
        for conflict in found {
            let conflicts = &mut self.set().conflicts;
            match conflicts.iter_mut().find(|x| x.id == conflict.id) {
                Some(x) => *x = conflict,
                None => conflicts.push(conflict),
            }
        }
        if lost {
            c.status = ConstraintStatus::Superseded;
        } else if pending {
            c.status = ConstraintStatus::Pending;
        }
        self.set().constraints.push(c);
        self.settle();
    }

    fn live_index(&self, sig: &str) -> Option<usize> {
        self.p
            .active_constraints
            .constraints
            .iter()
            .rposition(|c| live(c) && c.signature() == sig)
    }

    /// Closes conflicts that lost a member and reactivates constraints that
    /// were only waiting on a conflict.
    fn settle(&mut self) {
        let n = self.p.active_constraints.conflicts.len();
        for i in 0..n {
            let conflict = &self.p.active_constraints.conflicts[i];
            if !conflict.is_unresolved() {
                continue;
            }
            let (a, b) = (conflict.a.clone(), conflict.b.clone());
            let kept = match (self.live_index(&a), self.live_index(&b)) {
                (Some(_), Some(_)) => continue,
                (Some(_), None) => a,
                (None, Some(_)) => b,
                (None, None) => String::new(),
            };
            self.p.active_constraints.conflicts[i].status = ResolutionStatus::Resolved { kept };
        }
        let blocked: BTreeSet<String> = self
            .p
            .active_constraints
            .unresolved_conflicts()
            .flat_map(|c| [c.a.clone(), c.b.clone()])
            .collect();
        for c in &mut self.p.active_constraints.constraints {
            if c.status == ConstraintStatus::Pending && c.body.is_filter_effective() && !blocked.contains(&c.signature()) {
                c.status = ConstraintStatus::Active;
            }
        }
    }

    fn count(&mut self, body: &ConstraintBody) {
        let (polarity_excl, id) = match body {
            ConstraintBody::ExcludeEntity {
                entity: EntityRef::Node { id },
            } => (true, id.clone()),
            ConstraintBody::IncludeEntity {
                entity: EntityRef::Node { id },
            } => (false, id.clone()),
            _ => return,
        };
        let known = self.ctx.entailments.all_classes();
        let mut keys = vec![format!("node:{id}")];
        keys.extend(
            composition_classes(&self.ctx.graph, id.as_str())
                .into_iter()
                .filter(|c| known.contains(c.as_str()))
                .map(|c| format!("class:{c}")),
        );
        let turn = self.turn;
        let counters = if polarity_excl { &mut self.rejected } else { &mut self.selected };
        for k in keys {
            let slot = counters.entry(k).or_insert((0, 0));
            slot.0 += 1;
            if slot.0 == self.ctx.repetition_threshold {
                slot.1 = turn;
            }
        }
    }

    fn text_query(&mut self, message: &str) {
        let pctx = ParseContext {
            graph: &self.ctx.graph,
            lexicon: &self.ctx.lexicon,
            defaults: &self.ctx.nutrient_defaults,
        };
        let Ok(parsed) = parse_constraints(message, &pctx, self.turn) else {
            return;
        };
        let mut peers = Vec::new();
        for c in parsed.set.constraints {
            let sig = c.signature();
            let body = c.body.clone();
            self.merge(c, &peers);
            self.count(&body);
            peers.push(sig);
        }
        for clar in parsed.set.pending_clarifications {
            if !self.p.active_constraints.pending_clarifications.iter().any(|x| x.term == clar.term) {
                self.set().pending_clarifications.push(clar);
            }
        }
        for s in parsed.set.substitutions {
            if !self.p.active_constraints.substitutions.contains(&s) {
                self.set().substitutions.push(s);
            }
        }
    }

    /// Folds one staged action; `peers` are signatures from the same apply.
    fn graph_action(&mut self, entry: &LogEntry, peers: &mut Vec<String>) {
        let Some(node) = entry.node() else { return };
        let entity = EntityRef::node(node.clone());
        let body = match entry.kind {
            ActionKind::IncludeNode => ConstraintBody::IncludeEntity { entity },
            ActionKind::ExcludeNode => ConstraintBody::ExcludeEntity { entity },
            _ => return,
        };
        self.count(&body);
        let sig = body.signature();
        self.merge(Constraint::new(body, Origin::GraphAction, self.turn), peers);
        peers.push(sig);
    }

    fn resolve(&mut self, conflict: &str, keep: &str) {
        self.p.resolutions.insert(conflict.to_string(), keep.to_string());
        let Some(i) = self
            .p
            .active_constraints
            .conflicts
            .iter()
            .position(|c| c.id == conflict && c.is_unresolved())
        else {
            return;
        };
        let Some(other) = self.p.active_constraints.conflicts[i].other(keep).map(String::from) else {
            return;
        };
        if let Some(k) = self.live_index(keep) {
            self.p.active_constraints.constraints[k].status = ConstraintStatus::Active;
        }
        if let Some(o) = self.live_index(&other) {
            self.p.active_constraints.constraints[o].status = ConstraintStatus::Superseded;
        }
        self.p.active_constraints.conflicts[i].status = ResolutionStatus::Resolved { kept: keep.to_string() };
        self.settle();
    }

    fn clarify(&mut self, term: &str, choice: &str) {
        let Some(i) = self
            .p
            .active_constraints
            .pending_clarifications
            .iter()
            .position(|c| c.term == term)
        else {
            return;
        };
        let clar = self.p.active_constraints.pending_clarifications[i].clone();
        let replacements: Vec<(usize, ConstraintBody)> = match clar.kind {
            ClarificationKind::Subjective => {
                let Some(class) = reading_class(choice) else { return };
                let include = ConstraintBody::IncludeEntity {
                    entity: EntityRef::class(class),
                };
                self.p
                    .active_constraints
                    .constraints
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| live(c) && matches!(&c.body, ConstraintBody::Subjective { term: t } if t == term))
                    .map(|(j, _)| (j, include.clone()))
                    .collect()
            }
            ClarificationKind::Synonym => {
                let id = match self.ctx.lexicon.resolve_entity(choice) {
                    Resolution::Node(id) | Resolution::Substitute { node: id, .. } => id,
                    Resolution::Unresolved => return,
                };
                self.p
                    .active_constraints
                    .constraints
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| live(c))
                    .filter_map(|(j, c)| {
                        let unresolved = |e: &EntityRef| matches!(e, EntityRef::Unresolved { text } if text == term);
                        let entity = EntityRef::node(id.clone());
                        match &c.body {
                            ConstraintBody::IncludeEntity { entity: e } if unresolved(e) => {
                                Some((j, ConstraintBody::IncludeEntity { entity }))
                            }
                            ConstraintBody::ExcludeEntity { entity: e } if unresolved(e) => {
                                Some((j, ConstraintBody::ExcludeEntity { entity }))
                            }
                            _ => None,
                        }
                    })
                    .collect()
            }
        };
        self.set().pending_clarifications.remove(i);
        for (j, body) in replacements {
            self.p.active_constraints.constraints[j].status = ConstraintStatus::Superseded;
            self.count(&body);
            let c = Constraint::new(body, Origin::Text, self.turn).with_source(format!("{term}: {choice}"));
            self.merge(c, &[]);
        }
    }

    fn finish(mut self) -> PreferenceProfile {
        let t = self.ctx.repetition_threshold;
        let explicit: BTreeSet<String> = self
            .p
            .active_constraints
            .constraints
            .iter()
            .filter(|c| live(c))
            .map(|c| c.key())
            .collect();
        let mut learned = Vec::new();
        for (exclude, counters) in [(true, &self.rejected), (false, &self.selected)] {
            for (key, (count, turn)) in counters {
                if *count < t {
                    continue;
                }
                let entity = match key.split_once(':') {
                    Some(("node", id)) => EntityRef::node(id),
                    Some(("class", name)) => EntityRef::class(name),
                    _ => continue,
                };
                let body = if exclude {
                    ConstraintBody::ExcludeEntity { entity: entity.clone() }
                } else {
                    ConstraintBody::IncludeEntity { entity: entity.clone() }
                };
                if explicit.contains(&body.key()) {
                    continue;
                }
                let mut c = Constraint::new(body, Origin::Learned, *turn).with_status(ConstraintStatus::Pending);
                c.cites = Some(Citation {
                    counter: entity,
                    count: *count,
                });
                c.status = match self.confirmations.get(&c.signature()) {
                    Some(true) => ConstraintStatus::Active,
                    Some(false) => ConstraintStatus::Superseded,
                    None => ConstraintStatus::Pending,
                };
                learned.push(c);
            }
        }
        // An entity both avoided and chosen often enough cancels out.
        let keys: Vec<String> = learned.iter().map(|c| c.key()).collect();
        learned.retain(|c| keys.iter().filter(|k| **k == c.key()).count() == 1);
        for c in learned.iter().filter(|c| c.is_active()) {
            self.p.active_constraints.constraints.push(c.clone());
        }
        self.p.learned = learned;
        self.p.rejection_counters = self.rejected.iter().map(|(k, v)| (k.clone(), v.0)).collect();
        self.p.selection_counters = self.selected.iter().map(|(k, v)| (k.clone(), v.0)).collect();
        self.p
    }
}

/// The profile implied by `log`: effective entries folded in order, undone
/// ones skipped.
pub fn fold(ctx: &SessionContext, log: &[LogEntry]) -> PreferenceProfile {
    let undone = undone_ids(log);
    let applied = applied_ids(log, &undone);
    let by_id: BTreeMap<u64, &LogEntry> = log.iter().map(|e| (e.action_id, e)).collect();
    let mut f = Folder {
        ctx,
        p: PreferenceProfile::default(),
        turn: 0,
        rejected: BTreeMap::new(),
        selected: BTreeMap::new(),
        confirmations: BTreeMap::new(),
    };
    for e in log.iter().filter(|e| !undone.contains(&e.action_id)) {
        match (e.kind, &e.target) {
            (ActionKind::TextQuery, Target::Text(message)) => {
                if e.intent.is_some_and(|i| i.bears_constraints()) {
                    f.turn += 1;
                    f.text_query(message);
                }
            }
            (ActionKind::Apply, Target::Batch(batch)) => {
                f.turn += 1;
                let mut peers = Vec::new();
                for id in batch.iter().filter(|id| applied.contains(id)) {
                    if let Some(entry) = by_id.get(id) {
                        f.graph_action(entry, &mut peers);
                    }
                }
            }
            (ActionKind::ClarificationAnswer, Target::Answer(answer)) => match answer {
                Answer::ResolveConflict { conflict, keep } => f.resolve(conflict, keep),
                Answer::ConfirmLearned { signature, accept } => {
                    f.confirmations.insert(signature.clone(), *accept);
                }
                Answer::Clarify { term, choice } => f.clarify(term, choice),
            },
            _ => {}
        }
    }
    f.finish()
}

/// Nodes whose exclusion is currently in force.
pub fn excluded_nodes(profile: &PreferenceProfile) -> BTreeSet<NodeId> {
    profile
        .active_constraints
        .active()
        .filter_map(|c| match &c.body {
            ConstraintBody::ExcludeEntity {
                entity: EntityRef::Node { id },
            } => Some(id.clone()),
            _ => None,
        })
        .collect()
}
