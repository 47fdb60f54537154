use std::collections::{BTreeMap, BTreeSet, VecDeque};

use proptest::prelude::*;

use genie_core::kg::{
    load_triples, Direction, GraphSnapshot, IngestMode, KgStore, NodeId, Provenance, RelationEdge, RelationRegistry,
};

const RELATIONS: [&str; 5] = ["contains", "substitutableBy", "derivesFrom", "recommendsFor", "belongsToCuisine"];

#[derive(Debug, Clone)]
struct Raw {
    recipes: usize,
    ingredients: usize,
    triples: Vec<(String, String, String)>,
}

impl Raw {
    fn csv(&self) -> (String, String) {
        let mut attrs = String::from("node_id,attr,value,unit,kind_hint,label\n");
        for r in 0..self.recipes {
            attrs += &format!("R{r},calories,{},kcal,recipe,Recipe {r}\n", 100 + r * 7);
        }
        for i in 0..self.ingredients {
            attrs += &format!("I{i},foodClass,c{},,ingredient,Ingredient {i}\n", i % 3);
        }
        let mut triples = String::from("subject,relation,object,provenance\n");
        for (s, r, o) in &self.triples {
            triples += &format!("{s},{r},{o},curated\n");
        }
        (triples, attrs)
    }

    fn load(&self) -> GraphSnapshot {
        let (t, a) = self.csv();
        load_triples(t.as_bytes(), a.as_bytes(), &RelationRegistry::default(), IngestMode::Strict)
            .unwrap()
            .0
    }

    fn distinct(&self) -> BTreeSet<(String, String, String)> {
        self.triples.iter().cloned().collect()
    }
}

fn raw() -> impl Strategy<Value = Raw> {
    (1usize..8, 1usize..25).prop_flat_map(|(recipes, ingredients)| {
        let node = move || {
            prop_oneof![
                (0..recipes).prop_map(|r| format!("R{r}")),
                (0..ingredients).prop_map(|i| format!("I{i}")),
            ]
        };
        let extra = prop::collection::vec(
            (node(), prop::sample::select(RELATIONS.to_vec()), node()),
            0..60,
        );
        let firsts = prop::collection::vec(0..ingredients, recipes);
        (firsts, extra).prop_map(move |(firsts, extra)| {
            let mut triples: Vec<(String, String, String)> = firsts
                .into_iter()
                .enumerate()
                .map(|(r, i)| (format!("R{r}"), "contains".to_string(), format!("I{i}")))
                .collect();
            triples.extend(
                extra
                    .into_iter()
                    .filter(|(s, _, o)| s != o)
                    .map(|(s, r, o)| (s, r.to_string(), o)),
            );
            Raw {
                recipes,
                ingredients,
                triples,
            }
        })
    })
}

/// Neighbors by scanning every triple.
fn scan(raw: &Raw, node: &str, rel: Option<&str>, dir: Direction) -> Vec<(String, String)> {
    let mut out = BTreeSet::new();
    for (s, r, o) in raw.distinct() {
        if rel.is_some_and(|x| x != r) {
            continue;
        }
        if s == node && matches!(dir, Direction::Out | Direction::Both) {
            out.insert((r.clone(), o.clone()));
        }
        if o == node && matches!(dir, Direction::In | Direction::Both) {
            out.insert((r, s));
        }
    }
    out.into_iter().collect()
}

fn hop_distances(raw: &Raw, seed: &str) -> BTreeMap<String, u32> {
    let mut adj: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (s, _, o) in raw.distinct() {
        adj.entry(s.clone()).or_default().insert(o.clone());
        adj.entry(o).or_default().insert(s);
    }
    let mut dist = BTreeMap::from([(seed.to_string(), 0)]);
    let mut queue = VecDeque::from([seed.to_string()]);
    while let Some(n) = queue.pop_front() {
        let d = dist[&n];
        for m in adj.get(&n).into_iter().flatten() {
            if !dist.contains_key(m) {
                dist.insert(m.clone(), d + 1);
                queue.push_back(m.clone());
            }
        }
    }
    dist
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counts_match_the_rows(raw in raw()) {
        let g = raw.load();
        prop_assert_eq!(g.node_count(), raw.recipes + raw.ingredients);
        prop_assert_eq!(g.triple_count(), raw.distinct().len());
        let keys: BTreeSet<(String, String, String)> = g
            .edges_sorted()
            .iter()
            .map(|e| (e.subject.to_string(), e.relation.to_string(), e.object.to_string()))
            .collect();
        prop_assert_eq!(keys, raw.distinct());
    }

    #[test]
    fn neighbors_match_a_full_scan(raw in raw(), pick in 0usize..40, rel in prop::option::of(prop::sample::select(RELATIONS.to_vec()))) {
        let g = raw.load();
        let ids = g.node_ids_sorted();
        let node = ids[pick % ids.len()].clone();
        for dir in [Direction::Out, Direction::In, Direction::Both] {
            let got: Vec<(String, String)> = g
                .neighbors(node.as_str(), rel, dir)
                .unwrap()
                .into_iter()
                .map(|(r, n)| (r.to_string(), n.to_string()))
                .collect();
            let mut expected = scan(&raw, node.as_str(), rel, dir);
            expected.sort();
            prop_assert_eq!(got, expected, "{:?} {:?}", node, dir);
        }
    }

    #[test]
    fn closure_is_reachability(raw in raw(), pick in 0usize..40) {
        let g = raw.load();
        let ids = g.node_ids_sorted();
        let start = ids[pick % ids.len()].to_string();
        let follow = ["contains", "derivesFrom"];
        let mut expected = BTreeSet::from([start.clone()]);
        let mut queue = VecDeque::from([start.clone()]);
        while let Some(n) = queue.pop_front() {
            for (s, r, o) in raw.distinct() {
                if s == n && follow.contains(&r.as_str()) && expected.insert(o.clone()) {
                    queue.push_back(o);
                }
            }
        }
        let got: BTreeSet<String> = g.closure(&start, &follow).into_iter().map(|n| n.to_string()).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn subgraph_respects_budgets(raw in raw(), pick in 0usize..40, hops in 1u32..4, budget in 1usize..30) {
        let g = raw.load();
        let ids = g.node_ids_sorted();
        let seed = ids[pick % ids.len()].clone();
        let sub = g.extract_subgraph(std::slice::from_ref(&seed), hops, budget).unwrap();
        let dist = hop_distances(&raw, seed.as_str());
        prop_assert!(sub.nodes.len() <= budget);
        prop_assert_eq!(&sub.nodes[0], &seed);
        for (n, d) in sub.nodes.iter().zip(&sub.depths) {
            prop_assert_eq!(dist.get(n.as_str()).copied(), Some(*d));
            prop_assert!(*d <= hops);
        }
        // Admission is breadth-first: depths never go down.
        prop_assert!(sub.depths.windows(2).all(|w| w[0] <= w[1]));
        let ball = dist.values().filter(|d| **d <= hops).count();
        prop_assert_eq!(sub.nodes.len(), ball.min(budget));
        let set = sub.node_set();
        for e in &sub.edges {
            prop_assert!(set.contains(&e.subject) && set.contains(&e.object));
        }
        let induced = raw
            .distinct()
            .iter()
            .filter(|(s, _, o)| set.contains(&NodeId::new(s)) && set.contains(&NodeId::new(o)))
            .count();
        prop_assert_eq!(sub.edges.len(), induced);
    }

    #[test]
    fn upserts_are_a_set_union(raw in raw(), more in prop::collection::vec((0usize..40, prop::sample::select(RELATIONS.to_vec()), 0usize..40), 0..20)) {
        let g = raw.load();
        let ids = g.node_ids_sorted();
        let store = KgStore::new(g);
        let v0 = store.version();
        let mut expected = raw.distinct();
        let mut batch = Vec::new();
        for (s, r, o) in more {
            let (s, o) = (ids[s % ids.len()].clone(), ids[o % ids.len()].clone());
            expected.insert((s.to_string(), r.to_string(), o.to_string()));
            batch.push(RelationEdge::new(s, r, o, Provenance::Inferred));
        }
        let grew = expected.len() > raw.distinct().len();
        let snap = store.upsert_batch(Vec::new(), batch.clone(), None).unwrap();
        let got: BTreeSet<(String, String, String)> = snap
            .edges_sorted()
            .iter()
            .map(|e| (e.subject.to_string(), e.relation.to_string(), e.object.to_string()))
            .collect();
        prop_assert_eq!(got, expected);
        prop_assert_eq!(snap.version(), if grew { v0 + 1 } else { v0 });

        // Same batch again: nothing changes.
        let again = store.upsert_batch(Vec::new(), batch, None).unwrap();
        prop_assert_eq!(again.version(), snap.version());
        prop_assert_eq!(again.triple_count(), snap.triple_count());
        // The old version is still readable as it was.
        prop_assert_eq!(store.snapshot(v0).unwrap().triple_count(), raw.distinct().len());
    }
}
