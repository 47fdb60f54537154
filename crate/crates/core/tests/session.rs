use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use genie_core::kg::{GraphSnapshot, NodeId};
use genie_core::session::*;

fn session() -> Session {
    Session::new(Arc::new(SessionContext::sample()), "t", Arc::new(StepClock::epoch()))
}

/// Everything `recipe` is made of, by breadth-first search over raw edges.
fn made_of(graph: &GraphSnapshot, recipe: &str) -> BTreeSet<NodeId> {
    let edges = graph.edges_sorted();
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([NodeId::new(recipe)]);
    while let Some(n) = queue.pop_front() {
        for e in &edges {
            let composes = matches!(&*e.relation, "contains" | "containsIngredient" | "derivesFrom");
            if composes && e.subject == n && seen.insert(e.object.clone()) {
                queue.push_back(e.object.clone());
            }
        }
    }
    seen
}

fn attr(graph: &GraphSnapshot, id: &NodeId, name: &str) -> Option<f64> {
    graph.node(id.as_str())?.numeric_attrs.get(name).map(|q| q.value)
}

#[test]
fn reduce_protein_and_salt_then_swap_ingredients() {
    let mut s = session();
    let r = s.route_turn("Recommend some dinners but I want to reduce protein and salt").unwrap();
    let rec = r.recommendation.expect("first turn recommends");
    let graph = s.context().graph.clone();
    assert!(!rec.results.is_empty());
    for id in rec.recipe_ids() {
        assert!(attr(&graph, &id, "protein").unwrap_or(0.0) < 15.0, "{id} protein");
        assert!(attr(&graph, &id, "sodium").unwrap_or(0.0) < 500.0, "{id} sodium");
    }

    s.stage(Polarity::Exclude, "BlackPepper").unwrap();
    s.stage(Polarity::Include, "CrushedTomato").unwrap();
    assert_eq!(s.staged().len(), 2);
    let upd = s.apply(Some(s.query_version())).unwrap();
    let rec = upd.recommendation.expect("apply recommends");
    let hits: Vec<_> = rec
        .recipe_ids()
        .into_iter()
        .filter(|id| {
            let parts = made_of(&graph, id.as_str());
            parts.contains(&NodeId::new("CrushedTomato")) && !parts.contains(&NodeId::new("BlackPepper"))
        })
        .collect();
    assert!(!hits.is_empty());
    for id in rec.recipe_ids() {
        assert!(!made_of(&graph, id.as_str()).contains(&NodeId::new("BlackPepper")));
    }
    assert!(!rec.subgraph.contains("BlackPepper"));
    assert!(s.staged().is_empty());
}

#[test]
fn empty_message_is_rejected_without_logging() {
    let mut s = session();
    assert!(matches!(s.route_turn("   "), Err(SessionError::EmptyMessage)));
    assert_eq!(s.query_version(), 0);
}

#[test]
fn duplicate_stage_is_refused() {
    let mut s = session();
    s.stage(Polarity::Exclude, "Shrimp").unwrap();
    let err = s.stage(Polarity::Exclude, "Shrimp").unwrap_err();
    assert!(matches!(err, SessionError::DuplicateStage { .. }));
    assert_eq!(s.staged().len(), 1);
    assert!(matches!(s.stage(Polarity::Exclude, "Unicorn"), Err(SessionError::UnknownNode(_))));
}

#[test]
fn apply_needs_staged_actions_and_a_current_version() {
    let mut s = session();
    assert!(matches!(s.apply(None), Err(SessionError::NoStagedActions)));
    s.stage(Polarity::Exclude, "Shrimp").unwrap();
    let err = s.apply(Some(0)).unwrap_err();
    assert!(matches!(err, SessionError::StaleVersion { expected: 0, current: 1 }));
}

#[test]
fn undo_of_an_apply_restores_the_prior_profile() {
    let mut s = session();
    s.route_turn("low sodium dinner").unwrap();
    let before = s.profile().clone();
    let shown = s.recommendation().map(|r| r.recipe_ids());
    s.stage(Polarity::Exclude, "Salmon").unwrap();
    s.stage(Polarity::Include, "Tofu").unwrap();
    let upd = s.apply(None).unwrap();
    assert_ne!(upd.profile, before);
    s.undo(upd.action_id, None).unwrap();
    assert_eq!(s.profile(), &before);
    assert_eq!(s.recommendation().map(|r| r.recipe_ids()), shown);
    let hist = s.history();
    assert!(hist.iter().take(4).skip(1).all(|e| e.status == ActionStatus::Undone));
    assert!(matches!(s.undo(upd.action_id, None), Err(SessionError::AlreadyUndone(_))));
    let last = s.query_version();
    assert!(matches!(s.undo(last, None), Err(SessionError::NotUndoable(_))));
    assert!(matches!(s.undo(99, None), Err(SessionError::UnknownAction(99))));
}

#[test]
fn undo_of_a_staged_action_unstages_it() {
    let mut s = session();
    let e = s.stage(Polarity::Exclude, "Shrimp").unwrap();
    s.undo(e.action_id, None).unwrap();
    assert!(s.staged().is_empty());
    assert!(matches!(s.apply(None), Err(SessionError::NoStagedActions)));
}

#[test]
fn vegan_with_cheese_blocks_apply_until_resolved() {
    let mut s = session();
    let r = s.route_turn("I want vegan dishes with cheese").unwrap();
    assert_eq!(r.conflicts.len(), 1);
    let id = r.conflicts[0].id.clone();
    s.stage(Polarity::Exclude, "Shrimp").unwrap();
    match s.apply(None) {
        Err(SessionError::UnresolvedConflicts(c)) => assert_eq!(c[0].id, id),
        other => panic!("apply went through: {other:?}"),
    }
    assert!(matches!(
        s.resolve_conflict(&id, "include:node:Tofu", None),
        Err(SessionError::InvalidChoice { .. })
    ));
    s.resolve_conflict(&id, "flag:isVegan=true", None).unwrap();
    assert!(matches!(
        s.resolve_conflict(&id, "flag:isVegan=true", None),
        Err(SessionError::ConflictAlreadyResolved(_))
    ));
    s.apply(None).unwrap();
    let active: Vec<String> = s.profile().active_constraints.active().map(|c| c.signature()).collect();
    assert!(active.contains(&"flag:isVegan=true".to_string()));
    assert!(!active.contains(&"include:node:Cheese".to_string()));
}

#[test]
fn conflicting_stages_are_flagged_at_apply() {
    let mut s = session();
    s.stage(Polarity::Exclude, "Tofu").unwrap();
    s.stage(Polarity::Include, "Tofu").unwrap();
    assert_eq!(s.staged().len(), 2);
    let err = s.apply(None).unwrap_err();
    let SessionError::UnresolvedConflicts(c) = err else { panic!("{err:?}") };
    s.resolve_conflict(&c[0].id, "include:node:Tofu", None).unwrap();
    s.apply(None).unwrap();
    let active: Vec<String> = s.profile().active_constraints.active().map(|c| c.signature()).collect();
    assert_eq!(active, ["include:node:Tofu"]);
}

#[test]
fn repetition_proposes_a_class_exclusion_at_the_threshold() {
    let mut s = session();
    for (i, node) in ["Salmon", "Cod", "Shrimp"].into_iter().enumerate() {
        s.stage(Polarity::Exclude, node).unwrap();
        s.apply(None).unwrap();
        let proposals = s.learn_repetition();
        if i < 2 {
            assert!(proposals.is_empty(), "proposal after {} rejections", i + 1);
        } else {
            // Every rejected item is seafood, and also animal-derived.
            let sigs: Vec<String> = proposals.iter().map(|c| c.signature()).collect();
            assert_eq!(sigs, ["exclude:class:animalDerived", "exclude:class:seafood"]);
        }
    }
    s.confirm_learned("exclude:class:seafood", true, None).unwrap();
    s.confirm_learned("exclude:class:animalDerived", false, None).unwrap();
    assert!(s.learn_repetition().is_empty());
    assert!(s
        .profile()
        .active_constraints
        .active()
        .any(|c| c.signature() == "exclude:class:seafood"));
    assert!(!s
        .profile()
        .active_constraints
        .active()
        .any(|c| c.signature() == "exclude:class:animalDerived"));
    assert!(matches!(
        s.confirm_learned("exclude:class:seafood", true, None),
        Err(SessionError::UnknownProposal(_))
    ));
}

#[test]
fn replay_rebuilds_the_same_state() {
    let mut s = session();
    s.route_turn("Recommend some dinners but I want to reduce protein and salt").unwrap();
    s.route_turn("What are the nutritional values of these recipes?").unwrap();
    s.stage(Polarity::Exclude, "BlackPepper").unwrap();
    s.stage(Polarity::Include, "CrushedTomato").unwrap();
    s.apply(None).unwrap();
    s.route_turn("I want vegan dishes with cheese").unwrap();
    let c = s.profile().unresolved_conflicts()[0].id.clone();
    s.resolve_conflict(&c, "include:node:Cheese", None).unwrap();

    let replayed = Session::replay(s.context().clone(), "t", s.log(), Arc::new(StepClock::epoch())).unwrap();
    assert_eq!(replayed.profile(), s.profile());
    assert_eq!(replayed.recommendation(), s.recommendation());
    assert_eq!(replayed.history(), s.history());
}

#[test]
fn log_round_trips_through_the_file_form() {
    let buf = Arc::new(parking_lot::Mutex::new(Vec::new()));
    struct Shared(Arc<parking_lot::Mutex<Vec<u8>>>);
    impl std::io::Write for Shared {
        fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
            self.0.lock().extend_from_slice(b);
            Ok(b.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }
    let mut s = session().with_sink(Box::new(Shared(buf.clone())));
    s.route_turn("low sodium dinner").unwrap();
    s.stage(Polarity::Exclude, "Salmon").unwrap();
    s.apply(None).unwrap();
    let bytes = buf.lock().clone();
    let read = read_log(bytes.as_slice()).unwrap();
    assert_eq!(read, s.log());
    let err = read_log("{\"nope\":1}\n".as_bytes()).unwrap_err();
    assert!(matches!(err, SessionError::MalformedLog { line: 1, .. }));
}

#[test]
fn detail_views_clamp_and_need_a_recommendation() {
    let mut s = session();
    assert!(matches!(s.view(2), Err(SessionError::NoRecommendationYet)));
    s.route_turn("low sodium dinner").unwrap();
    let (v1, c1) = s.view(1).unwrap();
    let (v3, _) = s.view(3).unwrap();
    let (_, clamped) = s.view(99).unwrap();
    assert!(!c1 && clamped);
    assert!(v1.node_ids().is_subset(&v3.node_ids()));
}

#[test]
fn gibberish_changes_nothing() {
    let mut s = session();
    let r = s.route_turn("zxqv flarn").unwrap();
    assert!(!r.reply_text.is_empty());
    assert!(r.recommendation.is_none());
    assert!(s.profile().active_constraints.is_empty());
    assert_eq!(s.query_version(), 1);
}

#[test]
fn subjective_terms_are_clarified_by_a_short_answer() {
    let mut s = session();
    let r = s.route_turn("Recommend a tasty dinner").unwrap();
    let clar = r.pending_clarifications.first().expect("tasty is ambiguous");
    assert!(clar.candidates.iter().any(|c| c == "savory"));
    let r = s.route_turn("savory").unwrap();
    assert!(r.pending_clarifications.is_empty());
    assert!(s
        .profile()
        .active_constraints
        .active()
        .any(|c| c.signature().contains("savory")));
}

#[test]
fn information_requests_do_not_change_the_profile() {
    let mut s = session();
    s.route_turn("low sodium dinner").unwrap();
    let before = s.profile().clone();
    let r = s.route_turn("What are the nutritional values of these recipes?").unwrap();
    assert!(r.reply_text.starts_with("Nutritional values"), "{}", r.reply_text);
    assert_eq!(s.profile(), &before);
    assert_eq!(s.suggested_queries().unwrap().len(), 3);
}
