//! Acceptance suite. Runs every primary criterion against the mock provider
//! and prints one PASS/FAIL line per criterion; exits non-zero on any FAIL.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde_json::{json, Value};
use tower::ServiceExt;

use genie_api::{router, AppState};
use genie_core::config::AppConfig;
use genie_core::corpus::Entailments;
use genie_core::engine::Engine;
use genie_core::kg::{load_triples, GraphSnapshot, IngestMode, NodeId, NodeKind, RelationRegistry, Unit};
use genie_core::llm::Gateway;
use genie_core::matcher::{
    highlights, AttrFact, DishFacts, MatchStatus, Recommendation, SummaryPayload,
};
use genie_core::query::{Comparator, Constraint, ConstraintBody, ConstraintSet, EntityRef, GoalDirection, Origin};
use genie_core::session::{ActionKind, Polarity, Session, SessionContext, SessionError, StepClock};

const COMPOSITION: [&str; 3] = ["contains", "containsIngredient", "derivesFrom"];

type Outcome = Result<String, String>;

fn ctx() -> Arc<SessionContext> {
    Arc::new(SessionContext::sample())
}

fn session(ctx: &Arc<SessionContext>) -> Session {
    Session::new(ctx.clone(), "acceptance", Arc::new(StepClock::epoch()))
}

// ---------------------------------------------------------------------------
// Brute-force per-recipe oracle, built from raw edges and node attributes.

struct Oracle<'g> {
    graph: &'g GraphSnapshot,
    out: HashMap<NodeId, Vec<(String, NodeId)>>,
    substitutes: HashMap<NodeId, BTreeSet<NodeId>>,
}

#[derive(Debug, PartialEq)]
enum V {
    Ok,
    Unknown,
    Bad,
}

impl<'g> Oracle<'g> {
    fn new(graph: &'g GraphSnapshot) -> Self {
        let mut out: HashMap<NodeId, Vec<(String, NodeId)>> = HashMap::new();
        let mut substitutes: HashMap<NodeId, BTreeSet<NodeId>> = HashMap::new();
        for e in graph.edges_sorted() {
            out.entry(e.subject.clone())
                .or_default()
                .push((e.relation.to_string(), e.object.clone()));
            if &*e.relation == "substitutableBy" {
                substitutes.entry(e.subject.clone()).or_default().insert(e.object.clone());
                substitutes.entry(e.object.clone()).or_default().insert(e.subject.clone());
            }
        }
        Oracle {
            graph,
            out,
            substitutes,
        }
    }

    fn closure(&self, recipe: &NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::from([recipe.clone()]);
        let mut queue = VecDeque::from([recipe.clone()]);
        while let Some(n) = queue.pop_front() {
            for (rel, o) in self.out.get(&n).into_iter().flatten() {
                if COMPOSITION.contains(&rel.as_str()) && seen.insert(o.clone()) {
                    queue.push_back(o.clone());
                }
            }
        }
        seen
    }

    fn classes(&self, id: &NodeId) -> Vec<String> {
        self.graph
            .node(id.as_str())
            .map(|n| n.categorical_attrs.values().cloned().collect())
            .unwrap_or_default()
    }

    fn eval(&self, recipe: &NodeId, body: &ConstraintBody, ent: &Entailments) -> V {
        let closure = self.closure(recipe);
        let mut reach = closure.clone();
        reach.extend(self.out.get(recipe).into_iter().flatten().map(|(_, o)| o.clone()));
        let has_class = |c: &str| closure.iter().any(|n| self.classes(n).iter().any(|x| x == c));
        let unclassified = closure.iter().any(|n| {
            n != recipe
                && self
                    .graph
                    .node(n.as_str())
                    .is_some_and(|x| x.kind == NodeKind::Ingredient && x.categorical_attrs.is_empty())
        });
        let node = self.graph.node(recipe.as_str()).unwrap();
        match body {
            ConstraintBody::Bound { attr, cmp, value, unit } => match node.numeric_attrs.get(attr) {
                None => V::Unknown,
                Some(q) => {
                    let have = q.value * q.unit.to_canonical_factor();
                    let limit = value * unit.to_canonical_factor();
                    if cmp.holds(have, limit) {
                        V::Ok
                    } else {
                        V::Bad
                    }
                }
            },
            ConstraintBody::Flag { name, value } => {
                let hit = ent.classes(name).any(&has_class);
                match (value, hit) {
                    (true, true) => V::Bad,
                    (false, true) => V::Ok,
                    (_, false) if unclassified => V::Unknown,
                    (true, false) => V::Ok,
                    (false, false) => V::Bad,
                }
            }
            ConstraintBody::ExcludeEntity { entity } => match entity {
                EntityRef::Node { id } => {
                    if reach.contains(id) {
                        V::Bad
                    } else {
                        V::Ok
                    }
                }
                EntityRef::Class { name } => {
                    if has_class(name) {
                        V::Bad
                    } else if unclassified {
                        V::Unknown
                    } else {
                        V::Ok
                    }
                }
                EntityRef::Unresolved { .. } => V::Ok,
            },
            ConstraintBody::IncludeEntity { entity } => match entity {
                EntityRef::Node { id } => {
                    let subs = self.substitutes.get(id);
                    if reach.contains(id) || subs.is_some_and(|s| s.iter().any(|x| closure.contains(x))) {
                        V::Ok
                    } else {
                        V::Bad
                    }
                }
                EntityRef::Class { name } => {
                    if has_class(name) {
                        V::Ok
                    } else {
                        V::Bad
                    }
                }
                EntityRef::Unresolved { .. } => V::Ok,
            },
            ConstraintBody::MethodFlag { name, value } => match node.categorical_attrs.get(name).map(String::as_str) {
                Some("true") => {
                    if *value {
                        V::Ok
                    } else {
                        V::Bad
                    }
                }
                Some("false") => {
                    if *value {
                        V::Bad
                    } else {
                        V::Ok
                    }
                }
                _ => V::Unknown,
            },
            ConstraintBody::Subjective { .. } => V::Ok,
        }
    }

    /// Survivors with their borderline flag, by id.
    fn retrieve(&self, set: &ConstraintSet, ent: &Entailments) -> BTreeMap<NodeId, bool> {
        let mut out = BTreeMap::new();
        for id in self.graph.recipe_ids() {
            let verdicts: Vec<V> = set
                .constraints
                .iter()
                .map(|c| self.eval(&id, &c.body, ent))
                .collect();
            if verdicts.iter().all(|v| *v != V::Bad) {
                out.insert(id, verdicts.contains(&V::Unknown));
            }
        }
        out
    }
}

fn random_set(rng: &mut ChaCha8Rng, graph: &GraphSnapshot, ent: &Entailments) -> ConstraintSet {
    let ingredients: Vec<NodeId> = graph
        .nodes()
        .filter(|n| n.kind == NodeKind::Ingredient)
        .map(|n| n.id.clone())
        .collect();
    let mut classes: Vec<String> = graph
        .nodes()
        .filter(|n| n.kind == NodeKind::Ingredient)
        .flat_map(|n| n.categorical_attrs.values().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    classes.sort();
    let flags: Vec<String> = ent.flags().map(String::from).collect();
    let cmps = [Comparator::Lt, Comparator::Le, Comparator::Gt, Comparator::Ge];
    let n = rng.random_range(1..=4);
    let mut set = ConstraintSet::default();
    for _ in 0..n {
        let body = match rng.random_range(0..7) {
            0 | 1 => {
                let (attr, lo, hi, unit) = *[
                    ("calories", 100.0, 700.0, Unit::Kcal),
                    ("protein", 2.0, 45.0, Unit::G),
                    ("sodium", 50.0, 1200.0, Unit::Mg),
                    ("sodium", 0.05, 1.2, Unit::G),
                    ("fiber", 1.0, 15.0, Unit::G),
                    ("carbs", 5.0, 80.0, Unit::G),
                    ("sugar", 1.0, 25.0, Unit::G),
                ]
                .choose(rng)
                .unwrap();
                let value = (rng.random_range(lo..hi) * 10.0_f64).round() / 10.0;
                ConstraintBody::Bound {
                    attr: attr.into(),
                    cmp: *cmps.choose(rng).unwrap(),
                    value,
                    unit,
                }
            }
            2 => ConstraintBody::Flag {
                name: flags.choose(rng).unwrap().clone(),
                value: rng.random_bool(0.8),
            },
            3 => ConstraintBody::ExcludeEntity {
                entity: EntityRef::node(ingredients.choose(rng).unwrap().clone()),
            },
            4 => ConstraintBody::IncludeEntity {
                entity: EntityRef::node(ingredients.choose(rng).unwrap().clone()),
            },
            5 => {
                let entity = EntityRef::class(classes.choose(rng).unwrap().clone());
                if rng.random_bool(0.5) {
                    ConstraintBody::ExcludeEntity { entity }
                } else {
                    ConstraintBody::IncludeEntity { entity }
                }
            }
            _ => ConstraintBody::MethodFlag {
                name: "highRetainNutrients".into(),
                value: rng.random_bool(0.5),
            },
        };
        set.constraints.push(Constraint::new(body, Origin::Text, 1));
    }
    set
}

fn oracle_equivalence() -> Outcome {
    let ctx = ctx();
    let start = Instant::now();
    let oracle = Oracle::new(&ctx.graph);
    let m = ctx.matcher();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut nonempty = 0;
    for i in 0..200 {
        let set = random_set(&mut rng, &ctx.graph, &ctx.entailments);
        let expected = oracle.retrieve(&set, &ctx.entailments);
        let got: BTreeMap<NodeId, bool> = m
            .rank(&set)
            .into_iter()
            .map(|r| (r.recipe, r.status == MatchStatus::Borderline))
            .collect();
        if got != expected {
            return Err(format!("set {i} disagrees: matcher {got:?} vs oracle {expected:?}"));
        }
        nonempty += usize::from(!got.is_empty());
    }
    let took = start.elapsed();
    if took > Duration::from_secs(10) {
        return Err(format!("took {took:?}"));
    }
    Ok(format!("200/200 sets agree ({nonempty} non-empty) in {took:.2?}"))
}

fn exclusion_sweep() -> Outcome {
    let ctx = ctx();
    let start = Instant::now();
    let oracle = Oracle::new(&ctx.graph);
    let ingredients: Vec<NodeId> = ctx
        .graph
        .nodes()
        .filter(|n| n.kind == NodeKind::Ingredient)
        .map(|n| n.id.clone())
        .collect();
    let mut shown = 0;
    for x in &ingredients {
        let mut s = session(&ctx);
        s.stage(Polarity::Exclude, x.as_str()).map_err(|e| e.to_string())?;
        s.apply(None).map_err(|e| format!("{x}: {e}"))?;
        let Some(rec) = s.recommendation() else { continue };
        for r in &rec.results {
            if oracle.closure(&r.recipe).contains(x) {
                return Err(format!("excluding {x} still recommends {}", r.recipe));
            }
            shown += 1;
        }
        if rec.subgraph.contains(x.as_str()) {
            return Err(format!("excluding {x} still shows it in the subgraph"));
        }
    }
    let took = start.elapsed();
    if took > Duration::from_secs(10) {
        return Err(format!("took {took:?}"));
    }
    Ok(format!("{} ingredients, {shown} results checked in {took:.2?}", ingredients.len()))
}

// ---------------------------------------------------------------------------
// Randomized session scripts.

const MESSAGES: &[&str] = &[
    "Recommend some dinners but I want to reduce protein and salt",
    "I want vegan dishes under 400 kcal",
    "Show me high protein recipes with chicken",
    "low sodium lunch without shrimp",
    "no dairy please",
    "What are the nutritional values of these recipes?",
    "I want something with cheese",
    "gluten free dinner",
    "Recommend a tasty dinner",
    "savory",
    "more fiber",
    "vegetarian recipes with tofu",
];

const NODES: &[&str] = &[
    "BlackPepper",
    "CrushedTomato",
    "Tofu",
    "Cheese",
    "Salmon",
    "Cod",
    "Shrimp",
    "ChickenBreast",
    "Beef",
    "Lettuce",
    "Avocado",
    "BrownRice",
    "Corn",
];

fn random_script(rng: &mut ChaCha8Rng, ctx: &Arc<SessionContext>) -> Session {
    let mut s = session(ctx);
    let steps = rng.random_range(8..24);
    for _ in 0..steps {
        let _ = match rng.random_range(0..10) {
            0..=2 => s.route_turn(MESSAGES.choose(rng).unwrap()).map(|_| ()),
            3..=5 => {
                let p = if rng.random_bool(0.5) { Polarity::Include } else { Polarity::Exclude };
                s.stage(p, NODES.choose(rng).unwrap()).map(|_| ())
            }
            6 | 7 => match s.apply(None) {
                Err(SessionError::UnresolvedConflicts(cs)) => {
                    let c = &cs[0];
                    let keep = if rng.random_bool(0.5) { c.a.clone() } else { c.b.clone() };
                    s.resolve_conflict(&c.id, &keep, None).map(|_| ())
                }
                other => other.map(|_| ()),
            },
            8 => {
                let n = s.query_version();
                if n == 0 {
                    continue;
                }
                s.undo(rng.random_range(1..=n), None).map(|_| ())
            }
            _ => match s.learn_repetition().first() {
                Some(p) => s.confirm_learned(&p.signature(), rng.random_bool(0.5), None).map(|_| ()),
                None => Ok(()),
            },
        };
    }
    s
}

fn state_bytes(s: &Session) -> Vec<u8> {
    serde_json::to_vec(&json!({"profile": s.profile(), "recommendation": s.recommendation()})).unwrap()
}

fn scripts() -> Vec<(Arc<SessionContext>, Session)> {
    let ctx = ctx();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    (0..50).map(|_| (ctx.clone(), random_script(&mut rng, &ctx))).collect()
}

fn replay(ctx: &Arc<SessionContext>, log: &[genie_core::session::LogEntry]) -> Result<Session, SessionError> {
    Session::replay(ctx.clone(), "acceptance", log, Arc::new(StepClock::epoch()))
}

fn replay_determinism(scripts: &[(Arc<SessionContext>, Session)]) -> Outcome {
    let mut actions = 0;
    for (i, (ctx, s)) in scripts.iter().enumerate() {
        let a = replay(ctx, s.log()).map_err(|e| format!("log {i}: {e}"))?;
        let b = replay(ctx, s.log()).map_err(|e| format!("log {i}: {e}"))?;
        let (x, y, z) = (state_bytes(s), state_bytes(&a), state_bytes(&b));
        if y != z {
            return Err(format!("log {i}: two replays differ"));
        }
        if x != y {
            return Err(format!("log {i}: replay differs from the live session"));
        }
        actions += s.log().len();
    }
    Ok(format!("50 logs ({actions} actions) replay byte-identically"))
}

fn undo_inverse(scripts: &[(Arc<SessionContext>, Session)]) -> Outcome {
    let mut checked = 0;
    for (i, (ctx, s)) in scripts.iter().enumerate() {
        let log = s.log();
        for (j, e) in log.iter().enumerate() {
            if !matches!(e.kind, ActionKind::Apply | ActionKind::TextQuery | ActionKind::ClarificationAnswer) {
                continue;
            }
            let before = replay(ctx, &log[..j]).map_err(|e| format!("log {i}: {e}"))?;
            let mut after = replay(ctx, &log[..=j]).map_err(|e| format!("log {i}: {e}"))?;
            after
                .undo(e.action_id, None)
                .map_err(|err| format!("log {i} action {}: {err}", e.action_id))?;
            if after.profile() != before.profile() {
                return Err(format!("log {i}: undo of action {} ({:?}) did not restore the profile", e.action_id, e.kind));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked}/{checked} applied actions undone exactly"))
}

// ---------------------------------------------------------------------------

fn subgraph_soundness() -> Outcome {
    let ctx = ctx();
    let m = ctx.matcher();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut recs: Vec<(Recommendation, ConstraintSet)> = Vec::new();
    for _ in 0..200 {
        let set = random_set(&mut rng, &ctx.graph, &ctx.entailments);
        if let Ok(r) = m.recommend(&set, 2) {
            recs.push((r, set));
        }
    }
    for msg in MESSAGES {
        let mut s = session(&ctx);
        let _ = s.route_turn(msg);
        if let Some(r) = s.recommendation() {
            recs.push((r.clone(), s.profile().active_constraints.clone()));
        }
    }
    let mut views = 0;
    for (i, (rec, set)) in recs.iter().enumerate() {
        let mut prev: Option<BTreeSet<NodeId>> = None;
        for k in 1..=5 {
            let v = m.view(rec, k, highlights(rec, set)).map_err(|e| e.to_string())?;
            let nodes = v.node_ids();
            if let Some(e) = v.edges.iter().find(|e| !nodes.contains(&e.subject) || !nodes.contains(&e.object)) {
                return Err(format!("recommendation {i} k={k}: edge {}-{} leaves the view", e.subject, e.object));
            }
            if let Some(p) = &prev {
                if !p.is_subset(&nodes) {
                    return Err(format!("recommendation {i}: nodes({}) not within nodes({k})", k - 1));
                }
            }
            prev = Some(nodes);
            views += 1;
        }
    }
    Ok(format!("{} recommendations, {views} views sound and nested", recs.len()))
}

// ---------------------------------------------------------------------------
// Over HTTP.

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn attr(graph: &GraphSnapshot, id: &str, name: &str) -> Option<f64> {
    graph
        .node(id)?
        .numeric_attrs
        .get(name)
        .map(|q| q.value * q.unit.to_canonical_factor())
}

async fn reduce_and_swap_once() -> Result<Value, String> {
    let engine = Arc::new(Engine::sample());
    let graph = engine.snapshot();
    let oracle = Oracle::new(&graph);
    let state = AppState::new(engine).with_clock(Arc::new(StepClock::epoch()));
    let app = router(Arc::new(state));

    let (st, tok) = call(&app, "POST", "/sessions", None).await;
    if st != StatusCode::CREATED {
        return Err(format!("create: {st}"));
    }
    let t = tok["token"].as_str().unwrap().to_string();
    let msg = json!({"message": "Recommend some dinners but I want to reduce protein and salt"});
    let (st, chat) = call(&app, "POST", &format!("/sessions/{t}/chat"), Some(msg)).await;
    if st != StatusCode::OK {
        return Err(format!("chat: {st} {chat}"));
    }
    let limit = |n: &str| {
        let d = AppConfig::default()
            .nutrient_defaults
            .into_iter()
            .find(|d| d.nutrient == n && d.direction == GoalDirection::Reduce)
            .unwrap();
        (d.comparator, d.value * d.unit.to_canonical_factor())
    };
    let (pc, pl) = limit("protein");
    let (sc, sl) = limit("sodium");
    let first: Vec<String> = chat["recommendation"]["results"]
        .as_array()
        .ok_or("no recommendation on the opening query")?
        .iter()
        .map(|r| r["recipe"].as_str().unwrap().to_string())
        .collect();
    let meeting = first
        .iter()
        .filter(|id| {
            attr(&graph, id, "protein").is_some_and(|v| pc.holds(v, pl))
                && attr(&graph, id, "sodium").is_some_and(|v| sc.holds(v, sl))
        })
        .count();
    if meeting == 0 {
        return Err(format!("no opening result meets the bounds: {first:?}"));
    }
    if chat["subgraph"].is_null() {
        return Err("opening reply has no subgraph".into());
    }

    for (kind, node) in [("exclude", "BlackPepper"), ("include", "CrushedTomato")] {
        let (st, r) = call(
            &app,
            "POST",
            &format!("/sessions/{t}/interactions"),
            Some(json!({"kind": kind, "node_id": node})),
        )
        .await;
        if st != StatusCode::CREATED || r["entry"]["status"] != "staged" {
            return Err(format!("stage {node}: {st} {r}"));
        }
    }
    let (_, hist) = call(&app, "GET", &format!("/sessions/{t}/history"), None).await;
    let v = hist["query_version"].clone();
    let (st, applied) = call(&app, "POST", &format!("/sessions/{t}/apply"), Some(json!({"query_version": v}))).await;
    if st != StatusCode::OK {
        return Err(format!("apply: {st} {applied}"));
    }
    let after: Vec<String> = applied["recommendation"]["results"]
        .as_array()
        .ok_or("apply returned no recommendation")?
        .iter()
        .map(|r| r["recipe"].as_str().unwrap().to_string())
        .collect();
    let tomato = NodeId::new("CrushedTomato");
    let pepper = NodeId::new("BlackPepper");
    let hits = after
        .iter()
        .filter(|id| {
            let c = oracle.closure(&NodeId::new(id.as_str()));
            c.contains(&tomato) && !c.contains(&pepper)
        })
        .count();
    if hits == 0 {
        return Err(format!("no result with CrushedTomato and without BlackPepper: {after:?}"));
    }
    Ok(json!({"opening": chat["recommendation"], "applied": applied["recommendation"], "first": first, "after": after, "hits": hits, "meeting": meeting}))
}

async fn reduce_and_swap() -> Outcome {
    let a = reduce_and_swap_once().await?;
    let b = reduce_and_swap_once().await?;
    if a != b {
        return Err("two runs differ".into());
    }
    Ok(format!(
        "{} of {} opening results meet the bounds; {} of {} after apply contain CrushedTomato without BlackPepper; runs identical",
        a["meeting"],
        a["first"].as_array().unwrap().len(),
        a["hits"],
        a["after"].as_array().unwrap().len()
    ))
}

// ---------------------------------------------------------------------------

fn numerals(text: &str) -> Vec<f64> {
    let re = Regex::new(r"\d+(?:\.\d+)?").unwrap();
    re.find_iter(text).filter_map(|m| m.as_str().parse().ok()).collect()
}

fn fuzz_payload(rng: &mut ChaCha8Rng) -> SummaryPayload {
    let words = ["Kale", "Bean", "Soup", "Bowl", "No", "7", "Tofu", "Salad", "Stew", "42", "Wrap"];
    let tags = [
        "excludes dairy",
        "excludes gluten",
        "low in protein",
        "moderate in sodium",
        "high in fiber",
        "a good source of fiber",
    ];
    let mut p = SummaryPayload::default();
    for i in 0..rng.random_range(0..6) {
        let name: Vec<&str> = (0..rng.random_range(1..4)).map(|_| *words.choose(rng).unwrap()).collect();
        let mut key_attrs = Vec::new();
        for (attr, unit, hi) in [("calories", Unit::Kcal, 900.0), ("protein", Unit::G, 60.0), ("sodium", Unit::Mg, 2000.0)] {
            if rng.random_bool(0.8) {
                let v: f64 = (rng.random_range(0.0..hi) * 100.0_f64).round() / 100.0;
                let display = format!("{} {}", genie_core::kg::format_number(v), unit.as_str());
                key_attrs.push(AttrFact {
                    attr: attr.into(),
                    value: v,
                    unit,
                    display,
                });
            }
        }
        let status = if rng.random_bool(0.3) { MatchStatus::Borderline } else { MatchStatus::Full };
        let limit = rng.random_range(1..1500);
        p.dishes.push(DishFacts {
            id: format!("Dish{i}"),
            name: name.join(" "),
            status,
            key_attrs,
            tags: {
                let k = rng.random_range(0..4);
                tags.choose_multiple(rng, k)
            }.map(|t| t.to_string()).collect(),
            satisfied: vec![format!("calories < {limit} kcal")],
            unknown: if status == MatchStatus::Borderline {
                vec!["attribute_missing: calories".into()]
            } else {
                vec![]
            },
            substitutions: if rng.random_bool(0.2) {
                vec!["Tofu stands in for Chicken Breast".into()]
            } else {
                vec![]
            },
        });
        p.constraints.push(format!("calories < {limit} kcal"));
    }
    p
}

fn grounding() -> Outcome {
    let gw = Gateway::mock();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut seen = 0;
    for i in 0..200 {
        let p = fuzz_payload(&mut rng);
        let source = numerals(&serde_json::to_string(&p).unwrap());
        for text in [
            gw.summarize(&p).map_err(|e| format!("payload {i}: {e}"))?,
            gw.answer("What are the nutritional values of these recipes?", &p)
                .map_err(|e| format!("payload {i}: {e}"))?,
        ] {
            for n in numerals(&text) {
                seen += 1;
                if !source.iter().any(|s| (s - n).abs() < 1e-9) {
                    return Err(format!("payload {i}: `{n}` is not in the payload\n{text}"));
                }
            }
        }
    }
    Ok(format!("200 payloads, {seen} numerals, all grounded"))
}

// ---------------------------------------------------------------------------

fn scale() -> Outcome {
    let recipes = 10_000;
    let ingredients = 90_000;
    let per_recipe = 30;
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let mut attrs = String::from("node_id,attr,value,unit,kind_hint,label\n");
    for i in 0..recipes {
        let _ = writeln!(attrs, "R{i},calories,{},kcal,recipe,Recipe {i}", rng.random_range(100..900));
    }
    for i in 0..ingredients {
        let _ = writeln!(attrs, "I{i},foodClass,plantBased,,ingredient,Ingredient {i}");
    }
    let mut triples = String::from("subject,relation,object,provenance\n");
    for r in 0..recipes {
        let mut picked = BTreeSet::new();
        while picked.len() < per_recipe {
            picked.insert(rng.random_range(0..ingredients));
        }
        for i in picked {
            let _ = writeln!(triples, "R{r},contains,I{i},curated");
        }
    }
    let start = Instant::now();
    let (graph, report) = load_triples(
        triples.as_bytes(),
        attrs.as_bytes(),
        &RelationRegistry::default(),
        IngestMode::Strict,
    )
    .map_err(|e| e.to_string())?;
    let loaded = start.elapsed();
    let sub = graph
        .extract_subgraph(&[NodeId::new("R0")], 2, 100_000)
        .map_err(|e| e.to_string())?;
    let took = start.elapsed();
    if report.nodes != 100_000 || report.edges != 300_000 {
        return Err(format!("loaded {} nodes / {} edges", report.nodes, report.edges));
    }
    if sub.nodes.len() <= per_recipe {
        return Err(format!("hop-2 subgraph has only {} nodes", sub.nodes.len()));
    }
    if took > Duration::from_secs(5) {
        return Err(format!("took {took:?} (ingest {loaded:?})"));
    }
    Ok(format!(
        "100000 nodes / 300000 triples ingested in {loaded:.2?}; hop-2 query ({} nodes) done at {took:.2?}",
        sub.nodes.len()
    ))
}

// ---------------------------------------------------------------------------

/// Independent check that an active set has no contradictory pair.
fn contradictions(set: &ConstraintSet, oracle: &Oracle<'_>, ent: &Entailments) -> Vec<String> {
    let active: Vec<&Constraint> = set.filters().filter(|c| c.origin != Origin::Learned).collect();
    let mut out = Vec::new();
    for (i, a) in active.iter().enumerate() {
        for b in &active[i + 1..] {
            let clash = match (&a.body, &b.body) {
                (ConstraintBody::IncludeEntity { entity: x }, ConstraintBody::ExcludeEntity { entity: y })
                | (ConstraintBody::ExcludeEntity { entity: y }, ConstraintBody::IncludeEntity { entity: x }) => x == y,
                (ConstraintBody::Flag { name, value: true }, ConstraintBody::IncludeEntity { entity: EntityRef::Node { id } })
                | (ConstraintBody::IncludeEntity { entity: EntityRef::Node { id } }, ConstraintBody::Flag { name, value: true }) => {
                    let parts = oracle.closure(id);
                    ent.classes(name)
                        .any(|c| parts.iter().any(|n| oracle.classes(n).iter().any(|x| x == c)))
                }
                _ => false,
            };
            if clash {
                out.push(format!("{} / {}", a.signature(), b.signature()));
            }
        }
    }
    out
}

fn conflicts() -> Outcome {
    let ctx = ctx();
    let oracle = Oracle::new(&ctx.graph);

    // The fixture: vegan plus cheese.
    let mut s = session(&ctx);
    let turn = s.route_turn("I want vegan dishes with cheese").map_err(|e| e.to_string())?;
    let Some(c) = turn.conflicts.first().cloned() else {
        return Err("vegan with cheese was not flagged".into());
    };
    s.stage(Polarity::Exclude, "Shrimp").map_err(|e| e.to_string())?;
    if !matches!(s.apply(None), Err(SessionError::UnresolvedConflicts(_))) {
        return Err("apply went through with an open conflict".into());
    }
    s.resolve_conflict(&c.id, &c.a, None).map_err(|e| e.to_string())?;
    s.apply(None).map_err(|e| format!("apply after resolving: {e}"))?;

    // Randomized sets, each seeded with at least one contradictory pair.
    let animal = ["Cheese", "Salmon", "Beef", "ChickenBreast", "Shrimp", "Cod"];
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut resolved = 0;
    for i in 0..100 {
        let mut s = session(&ctx);
        match rng.random_range(0..3) {
            0 => {
                let x = NODES.choose(&mut rng).unwrap();
                let _ = s.stage(Polarity::Exclude, x);
                let _ = s.stage(Polarity::Include, x);
            }
            1 => {
                let _ = s.route_turn("I want vegan dishes");
                let _ = s.stage(Polarity::Include, animal.choose(&mut rng).unwrap());
            }
            _ => {
                let x = animal.choose(&mut rng).unwrap();
                let _ = s.route_turn(&format!("vegetarian recipes with {}", x.to_lowercase()));
                let _ = s.stage(Polarity::Exclude, NODES.choose(&mut rng).unwrap());
            }
        }
        for _ in 0..rng.random_range(0..4) {
            let p = if rng.random_bool(0.5) { Polarity::Include } else { Polarity::Exclude };
            let _ = s.stage(p, NODES.choose(&mut rng).unwrap());
        }
        let mut rounds = 0;
        loop {
            rounds += 1;
            if rounds > 20 {
                return Err(format!("set {i}: resolution did not terminate"));
            }
            let open = s.flagged_conflicts();
            if let Some(c) = open.first() {
                let keep = if rng.random_bool(0.5) { &c.a } else { &c.b };
                s.resolve_conflict(&c.id, keep, None)
                    .map_err(|e| format!("set {i}: resolving {}: {e}", c.id))?;
                resolved += 1;
                continue;
            }
            match s.apply(None) {
                Ok(_) | Err(SessionError::NoStagedActions) => break,
                Err(e) => return Err(format!("set {i}: apply failed with nothing flagged: {e}")),
            }
        }
        if !s.profile().unresolved_conflicts().is_empty() {
            return Err(format!("set {i}: conflicts left open"));
        }
        let left = contradictions(&s.profile().active_constraints, &oracle, &ctx.entailments);
        if !left.is_empty() {
            return Err(format!("set {i}: active set still contradicts itself: {left:?}"));
        }
    }
    Ok(format!("fixture flagged and blocked; 100 random sets settled after {resolved} resolutions"))
}

fn main() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let scripts = scripts();
    let results: Vec<(&str, Outcome)> = vec![
        ("oracle equivalence", oracle_equivalence()),
        ("exclusion soundness sweep", exclusion_sweep()),
        ("replay determinism", replay_determinism(&scripts)),
        ("undo inverse", undo_inverse(&scripts)),
        ("subgraph soundness and detail monotonicity", subgraph_soundness()),
        ("reduce-and-swap scenario over the API", rt.block_on(reduce_and_swap())),
        ("grounding invariant", grounding()),
        ("ingestion scale", scale()),
        ("conflict handling", conflicts()),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
