use std::collections::BTreeSet;

use proptest::prelude::*;

use genie_core::kg::{NodeKind, Unit};
use genie_core::llm::{Gateway, QueryContext};
use genie_core::matcher::{MatchStatus, ScoreWeights};
use genie_core::query::{
    classify_by_rules, parse_constraints, Comparator, Constraint, ConstraintBody, ConstraintSet, EntityRef,
    IntentCategory, Origin, PriorTurn, QueryError,
};
use genie_core::session::SessionContext;

use IntentCategory::*;

/// Hand-labelled messages: (text, a recommendation is on screen, expected).
const INTENTS: &[(&str, bool, IntentCategory)] = &[
    ("Recommend some dinners but I want to reduce protein and salt", false, RecipeSearch),
    ("Find me a vegan lunch under 400 kcal", false, RecipeSearch),
    ("Show me high protein breakfasts", false, RecipeSearch),
    ("suggest something with tofu", false, RecipeSearch),
    ("I'm looking for gluten free recipes", false, RecipeSearch),
    ("give me low sodium dishes", false, RecipeSearch),
    ("vegetarian dinner", false, RecipeSearch),
    ("low sugar snack", false, RecipeSearch),
    ("I want to eat healthy", false, RecipeSearch),
    ("meals with less than 20 g of carbs", false, RecipeSearch),
    ("no dairy please", false, RecipeSearch),
    ("avoid shrimp", false, RecipeSearch),
    ("without onion", false, RecipeSearch),
    ("Remove the black pepper", true, ConstraintOverride),
    ("use crushed tomato instead", true, ConstraintOverride),
    ("without mushrooms please", true, ConstraintOverride),
    ("exclude anything with cheese", true, ConstraintOverride),
    ("add more tofu", true, ConstraintOverride),
    ("swap the rice for quinoa", true, ConstraintOverride),
    ("I dislike salmon", true, ConstraintOverride),
    ("What are the nutritional values of these recipes?", true, InformationRequest),
    ("How much protein does the curry have?", true, InformationRequest),
    ("why is this one borderline", true, InformationRequest),
    ("which dish has the least sodium", true, InformationRequest),
    ("is the salad vegan", true, InformationRequest),
    ("hello there", false, GeneralClarification),
    ("thanks!", false, GeneralClarification),
    ("hmm", false, GeneralClarification),
    ("ok", true, GeneralClarification),
    ("zxqv flarn", false, GeneralClarification),
];

fn history(on_screen: bool) -> Vec<PriorTurn> {
    if on_screen {
        vec![PriorTurn {
            message: "vegan dinner".into(),
            produced_recommendation: true,
        }]
    } else {
        Vec::new()
    }
}

#[test]
fn intent_fixture() {
    let gw = Gateway::mock();
    let mut wrong = Vec::new();
    for (msg, on_screen, expected) in INTENTS {
        let h = history(*on_screen);
        let by_rules = classify_by_rules(msg, &h);
        let by_gateway = gw.classify_intent(msg, &h).unwrap();
        if by_rules.category != *expected || by_gateway.category != *expected {
            wrong.push((*msg, by_rules.category, by_gateway.category));
        }
        assert!((0.0..=1.0).contains(&by_rules.confidence));
    }
    assert!(wrong.is_empty(), "{wrong:?}");
}

#[test]
fn parsing_is_deterministic() {
    let ctx = SessionContext::sample();
    let pc = ctx.parse_context();
    for (msg, _, _) in INTENTS {
        let a = parse_constraints(msg, &pc, 1);
        let b = parse_constraints(msg, &pc, 1);
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}

#[test]
fn blank_and_gibberish_are_rejected() {
    let ctx = SessionContext::sample();
    let pc = ctx.parse_context();
    assert_eq!(parse_constraints("  ", &pc, 1).unwrap_err(), QueryError::EmptyMessage);
    assert_eq!(parse_constraints("zxqv flarn", &pc, 1).unwrap_err(), QueryError::NoParsableContent);
}

#[test]
fn suggestions_parse_back() {
    let ctx = SessionContext::sample();
    let pc = ctx.parse_context();
    let gw = Gateway::mock();
    let contexts = [
        QueryContext::default(),
        QueryContext {
            constraints: vec!["protein < 15 g".into(), "sodium < 500 mg".into()],
            reduced: vec!["protein".into(), "sodium".into()],
            increased: vec![],
            flags: vec![],
            dishes: vec!["Lentil Soup".into(), "Sweet Potato Curry".into()],
        },
        QueryContext {
            constraints: vec!["vegan".into()],
            reduced: vec![],
            increased: vec!["fiber".into()],
            flags: vec!["isVegan".into()],
            dishes: vec!["Grilled Tofu Wrap".into()],
        },
    ];
    for qc in &contexts {
        let queries = gw.suggest_queries(qc).unwrap();
        assert!(!queries.is_empty());
        for q in queries {
            let intent = classify_by_rules(&q, &history(!qc.dishes.is_empty()));
            if intent.category == InformationRequest {
                continue;
            }
            let parsed = parse_constraints(&q, &pc, 1).unwrap_or_else(|e| panic!("`{q}`: {e}"));
            assert!(!parsed.set.constraints.is_empty(), "`{q}` parsed to nothing");
        }
    }
}

#[test]
fn mock_is_deterministic_over_many_calls() {
    let gw = Gateway::mock();
    let h = history(true);
    let first: Vec<_> = INTENTS
        .iter()
        .map(|(m, _, _)| gw.classify_intent(m, &h).unwrap())
        .collect();
    for i in 0..1000 {
        let (m, _, _) = INTENTS[i % INTENTS.len()];
        assert_eq!(gw.classify_intent(m, &h).unwrap(), first[i % INTENTS.len()]);
    }
}

/// Score of a recipe meeting every bound in a bound-only set, recomputed from
/// the weighting: full satisfaction, neutral affinity, no borderline penalty,
/// and mean relative margin for tightness.
fn expected_score(margins: &[f64], w: &ScoreWeights) -> f64 {
    let tightness = margins.iter().sum::<f64>() / margins.len() as f64;
    (w.satisfaction + w.affinity * 0.5 + w.borderline_penalty + w.tightness * tightness) / w.total()
}

fn bound(attr: &str, cmp: Comparator, value: f64, unit: Unit) -> Constraint {
    Constraint::new(
        ConstraintBody::Bound {
            attr: attr.into(),
            cmp,
            value,
            unit,
        },
        Origin::Text,
        1,
    )
}

#[test]
fn scores_follow_the_weighting() {
    let ctx = SessionContext::sample();
    let m = ctx.matcher();
    let mut set = ConstraintSet::default();
    set.constraints.push(bound("calories", Comparator::Lt, 600.0, Unit::Kcal));
    set.constraints.push(bound("sodium", Comparator::Lt, 0.8, Unit::G));
    let ranked = m.rank(&set);
    assert!(!ranked.is_empty());
    for r in ranked.iter().filter(|r| r.status == MatchStatus::Full) {
        let node = ctx.graph.node(r.recipe.as_str()).unwrap();
        let margin = |attr: &str, limit: f64| {
            let v = node.numeric_attrs[attr].canonical_value();
            ((limit - v).abs() / limit).min(1.0)
        };
        let want = expected_score(&[margin("calories", 600.0), margin("sodium", 0.8)], &ctx.matcher.weights);
        assert!((r.score - want).abs() < 1e-9, "{}: {} vs {want}", r.recipe, r.score);
    }
    assert!(ranked.windows(2).all(|w| w[0].score >= w[1].score));
}

fn constraint_strategy() -> impl Strategy<Value = Constraint> {
    let ctx = SessionContext::sample();
    let ingredients: Vec<String> = ctx
        .graph
        .nodes()
        .filter(|n| n.kind == NodeKind::Ingredient)
        .map(|n| n.id.to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let flags: Vec<String> = ctx.entailments.flags().map(String::from).collect();
    let cmp = prop::sample::select(vec![Comparator::Lt, Comparator::Le, Comparator::Gt, Comparator::Ge]);
    prop_oneof![
        (prop::sample::select(vec!["calories", "protein", "fiber"]), cmp, 1.0f64..700.0).prop_map(|(a, c, v)| {
            let unit = if a == "calories" { Unit::Kcal } else { Unit::G };
            bound(a, c, v, unit)
        }),
        prop::sample::select(flags).prop_map(|f| Constraint::new(
            ConstraintBody::Flag { name: f, value: true },
            Origin::Text,
            1
        )),
        (prop::sample::select(ingredients), any::<bool>()).prop_map(|(i, include)| {
            let entity = EntityRef::node(i.as_str());
            let body = if include {
                ConstraintBody::IncludeEntity { entity }
            } else {
                ConstraintBody::ExcludeEntity { entity }
            };
            Constraint::new(body, Origin::Text, 1)
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn adding_a_constraint_only_narrows(base in prop::collection::vec(constraint_strategy(), 0..4), extra in constraint_strategy()) {
        let ctx = SessionContext::sample();
        let m = ctx.matcher();
        let mut set = ConstraintSet { constraints: base, ..Default::default() };
        let before: BTreeSet<_> = m.rank(&set).into_iter().map(|r| r.recipe).collect();
        set.constraints.push(extra);
        let after: BTreeSet<_> = m.rank(&set).into_iter().map(|r| r.recipe).collect();
        prop_assert!(after.is_subset(&before));
    }

    #[test]
    fn ranking_is_idempotent(base in prop::collection::vec(constraint_strategy(), 0..5)) {
        let ctx = SessionContext::sample();
        let m = ctx.matcher();
        let set = ConstraintSet { constraints: base, ..Default::default() };
        let a = serde_json::to_string(&m.rank(&set)).unwrap();
        let b = serde_json::to_string(&m.rank(&set)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn parser_never_panics(msg in "[a-z0-9 ,.<>!?']{0,60}") {
        let ctx = SessionContext::sample();
        let _ = parse_constraints(&msg, &ctx.parse_context(), 1);
        if !msg.trim().is_empty() {
            let i = classify_by_rules(&msg, &[]);
            prop_assert!((0.0..=1.0).contains(&i.confidence));
        }
    }
}
