use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use super::error::{KgError, Result};
use super::model::{Adjacent, Direction, EntityNode, NodeId, NodeKind, Relation, RelationEdge, TripleKey};
use super::registry::RelationRegistry;
use super::subgraph::Subgraph;

/// Immutable view of the graph at one version.
///
/// Every edge appears twice in `adjacency`: outgoing at its subject and
/// incoming at its object. Adjacency lists are kept sorted by
/// `(relation, neighbor, direction)` so traversal order is deterministic.
#[derive(Debug, Clone)]
pub struct GraphSnapshot {
    pub(crate) version: u64,
    pub(crate) nodes: HashMap<NodeId, EntityNode>,
    pub(crate) adjacency: HashMap<NodeId, Vec<Adjacent>>,
    pub(crate) edges: HashMap<TripleKey, RelationEdge>,
    pub(crate) relations: Arc<RelationRegistry>,
}

impl GraphSnapshot {
    pub fn empty(relations: Arc<RelationRegistry>) -> Self {
        GraphSnapshot {
            version: 1,
            nodes: HashMap::new(),
            adjacency: HashMap::new(),
            edges: HashMap::new(),
            relations,
        }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn triple_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn relations(&self) -> &RelationRegistry {
        &self.relations
    }

    pub fn node(&self, id: &str) -> Option<&EntityNode> {
        self.nodes.get(id)
    }

    pub fn require(&self, id: &str) -> Result<&EntityNode> {
        self.nodes
            .get(id)
            .ok_or_else(|| KgError::UnknownNode(NodeId::new(id)))
    }

    pub fn contains_node(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &EntityNode> {
        self.nodes.values()
    }

    /// Node ids in ascending order.
    pub fn node_ids_sorted(&self) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self.nodes.keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Recipe ids in ascending order.
    pub fn recipe_ids(&self) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self
            .nodes
            .values()
            .filter(|n| n.kind == NodeKind::Recipe)
            .map(|n| n.id.clone())
            .collect();
        ids.sort();
        ids
    }

    pub fn has_edge(&self, key: &TripleKey) -> bool {
        self.edges.contains_key(key)
    }

    pub fn edge(&self, key: &TripleKey) -> Option<&RelationEdge> {
        self.edges.get(key)
    }

    /// All edges sorted by `(subject, relation, object)`.
    pub fn edges_sorted(&self) -> Vec<&RelationEdge> {
        let mut edges: Vec<&RelationEdge> = self.edges.values().collect();
        edges.sort_by(|a, b| {
            (&a.subject, &a.relation, &a.object).cmp(&(&b.subject, &b.relation, &b.object))
        });
        edges
    }

    pub(crate) fn adjacency_of(&self, id: &str) -> &[Adjacent] {
        self.adjacency.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Neighbors of `node`, duplicate-free and sorted by (relation, neighbor id).
    pub fn neighbors(
        &self,
        node: &str,
        relation_filter: Option<&str>,
        direction: Direction,
    ) -> Result<Vec<(Relation, NodeId)>> {
        self.require(node)?;
        let mut out: Vec<(Relation, NodeId)> = Vec::new();
        for adj in self.adjacency_of(node) {
            if let Some(rel) = relation_filter {
                if &*adj.relation != rel {
                    continue;
                }
            }
            let keep = match direction {
                Direction::Out => adj.outgoing,
                Direction::In => !adj.outgoing,
                Direction::Both => true,
            };
            if !keep {
                continue;
            }
            // sorted input: a pair seen both ways sits next to itself
            if out
                .last()
                .is_some_and(|(r, n)| *r == adj.relation && *n == adj.neighbor)
            {
                continue;
            }
            out.push((adj.relation.clone(), adj.neighbor.clone()));
        }
        Ok(out)
    }

    /// Nodes reachable from `start` by following outgoing edges whose relation is
    /// in `relations`. The start node is included.
    pub fn closure(&self, start: &str, relations: &[&str]) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let Some(start) = self.nodes.get_key_value(start).map(|(k, _)| k.clone()) else {
            return seen;
        };
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            if !seen.insert(n.clone()) {
                continue;
            }
            for adj in self.adjacency_of(n.as_str()) {
                if adj.outgoing
                    && relations.contains(&&*adj.relation)
                    && !seen.contains(&adj.neighbor)
                {
                    stack.push(adj.neighbor.clone());
                }
            }
        }
        seen
    }

    /// Breadth-first expansion from all seeds at once, following edges in both
    /// directions. Stops at `hop_budget` hops or `node_budget` nodes, whichever
    /// comes first. Seeds are always included.
    pub fn extract_subgraph(
        &self,
        seeds: &[NodeId],
        hop_budget: u32,
        node_budget: usize,
    ) -> Result<Subgraph> {
        self.extract_subgraph_filtered(seeds, hop_budget, node_budget, &HashSet::new())
    }

    /// As [`extract_subgraph`](Self::extract_subgraph), never admitting nodes in
    /// `blocked` (seeds excepted).
    pub fn extract_subgraph_filtered(
        &self,
        seeds: &[NodeId],
        hop_budget: u32,
        node_budget: usize,
        blocked: &HashSet<NodeId>,
    ) -> Result<Subgraph> {
        if seeds.is_empty() {
            return Err(KgError::InvalidRequest("seeds must be non-empty".into()));
        }
        if hop_budget == 0 || node_budget == 0 {
            return Err(KgError::InvalidRequest("budgets must be >= 1".into()));
        }
        let mut admitted: Vec<NodeId> = Vec::new();
        let mut depth: HashMap<NodeId, u32> = HashMap::new();
        for s in seeds {
            self.require(s.as_str())?;
            if !depth.contains_key(s) {
                depth.insert(s.clone(), 0);
                admitted.push(s.clone());
            }
        }
        let mut frontier: VecDeque<NodeId> = admitted.iter().cloned().collect();
        'bfs: while let Some(node) = frontier.pop_front() {
            let d = depth[&node];
            if d >= hop_budget {
                continue;
            }
            for adj in self.adjacency_of(node.as_str()) {
                if admitted.len() >= node_budget {
                    break 'bfs;
                }
                if depth.contains_key(&adj.neighbor) || blocked.contains(&adj.neighbor) {
                    continue;
                }
                depth.insert(adj.neighbor.clone(), d + 1);
                admitted.push(adj.neighbor.clone());
                frontier.push_back(adj.neighbor.clone());
            }
        }

        let set: HashSet<&NodeId> = admitted.iter().collect();
        let mut edges: Vec<TripleKey> = Vec::new();
        for n in &admitted {
            for adj in self.adjacency_of(n.as_str()) {
                if adj.outgoing && set.contains(&adj.neighbor) {
                    edges.push(TripleKey {
                        subject: n.clone(),
                        relation: adj.relation.clone(),
                        object: adj.neighbor.clone(),
                    });
                }
            }
        }
        edges.sort();
        let depths = admitted.iter().map(|n| depth[n]).collect();
        Ok(Subgraph {
            nodes: admitted,
            depths,
            edges,
        })
    }

    // --- mutation helpers, used only while building a new version ---

    pub(crate) fn insert_node(&mut self, node: EntityNode) {
        self.adjacency.entry(node.id.clone()).or_default();
        self.nodes.insert(node.id.clone(), node);
    }

    /// Inserts an edge, keeping adjacency sorted. Returns false if the triple
    /// already existed.
    pub(crate) fn insert_edge(&mut self, edge: RelationEdge) -> bool {
        let key = edge.key();
        if self.edges.contains_key(&key) {
            return false;
        }
        let out = Adjacent {
            relation: edge.relation.clone(),
            neighbor: edge.object.clone(),
            outgoing: true,
        };
        let inc = Adjacent {
            relation: edge.relation.clone(),
            neighbor: edge.subject.clone(),
            outgoing: false,
        };
        let list = self.adjacency.entry(edge.subject.clone()).or_default();
        let pos = list.binary_search(&out).unwrap_or_else(|p| p);
        list.insert(pos, out);
        let list = self.adjacency.entry(edge.object.clone()).or_default();
        let pos = list.binary_search(&inc).unwrap_or_else(|p| p);
        list.insert(pos, inc);
        self.edges.insert(key, edge);
        true
    }

    /// Bulk construction path: pushes without ordering, then sorts once.
    pub(crate) fn from_parts(
        version: u64,
        nodes: HashMap<NodeId, EntityNode>,
        edges: HashMap<TripleKey, RelationEdge>,
        relations: Arc<RelationRegistry>,
    ) -> Self {
        let mut adjacency: HashMap<NodeId, Vec<Adjacent>> =
            nodes.keys().map(|k| (k.clone(), Vec::new())).collect();
        for e in edges.values() {
            if let Some(l) = adjacency.get_mut(&e.subject) {
                l.push(Adjacent {
                    relation: e.relation.clone(),
                    neighbor: e.object.clone(),
                    outgoing: true,
                });
            }
            if let Some(l) = adjacency.get_mut(&e.object) {
                l.push(Adjacent {
                    relation: e.relation.clone(),
                    neighbor: e.subject.clone(),
                    outgoing: false,
                });
            }
        }
        for l in adjacency.values_mut() {
            l.sort();
        }
        GraphSnapshot {
            version,
            nodes,
            adjacency,
            edges,
            relations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::model::Provenance;

    fn tiny() -> GraphSnapshot {
        let mut g = GraphSnapshot::empty(Arc::new(RelationRegistry::default()));
        for (id, kind) in [
            ("Wrap", NodeKind::Recipe),
            ("Tofu", NodeKind::Ingredient),
            ("Soy", NodeKind::Ingredient),
            ("Lettuce", NodeKind::Ingredient),
            ("Salad", NodeKind::Recipe),
            ("Lonely", NodeKind::Ingredient),
        ] {
            g.insert_node(EntityNode::new(id, id, kind));
        }
        for (s, r, o) in [
            ("Wrap", "contains", "Tofu"),
            ("Wrap", "contains", "Lettuce"),
            ("Tofu", "derivesFrom", "Soy"),
            ("Salad", "contains", "Lettuce"),
        ] {
            g.insert_edge(RelationEdge::new(s, r, o, Provenance::Curated));
        }
        g
    }

    #[test]
    fn neighbors_sorted_and_filtered() {
        let g = tiny();
        let n = g.neighbors("Wrap", Some("contains"), Direction::Out).unwrap();
        let ids: Vec<&str> = n.iter().map(|(_, id)| id.as_str()).collect();
        assert_eq!(ids, ["Lettuce", "Tofu"]);
        let inc = g.neighbors("Lettuce", None, Direction::In).unwrap();
        assert_eq!(inc.len(), 2);
        assert!(g.neighbors("Lonely", None, Direction::Both).unwrap().is_empty());
        assert!(matches!(
            g.neighbors("Nope", None, Direction::Both),
            Err(KgError::UnknownNode(_))
        ));
    }

    #[test]
    fn closure_follows_chosen_relations() {
        let g = tiny();
        let c = g.closure("Wrap", &["contains", "derivesFrom"]);
        let ids: Vec<&str> = c.iter().map(NodeId::as_str).collect();
        assert_eq!(ids, ["Lettuce", "Soy", "Tofu", "Wrap"]);
        let c = g.closure("Wrap", &["contains"]);
        assert!(!c.contains("Soy"));
    }

    #[test]
    fn subgraph_budget_boundaries() {
        let g = tiny();
        let seeds = [NodeId::new("Wrap"), NodeId::new("Salad")];
        let sg = g.extract_subgraph(&seeds, 3, 2).unwrap();
        assert_eq!(sg.nodes, seeds.to_vec());
        let sg = g.extract_subgraph(&seeds[..1], 1, 100).unwrap();
        let ids: BTreeSet<&str> = sg.nodes.iter().map(NodeId::as_str).collect();
        assert_eq!(ids, BTreeSet::from(["Wrap", "Tofu", "Lettuce"]));
        assert!(g.extract_subgraph(&[], 1, 1).is_err());
        assert!(g.extract_subgraph(&seeds, 0, 1).is_err());
    }

    #[test]
    fn blocked_nodes_are_not_admitted() {
        let g = tiny();
        let blocked = HashSet::from([NodeId::new("Tofu")]);
        let sg = g
            .extract_subgraph_filtered(&[NodeId::new("Wrap")], 3, 100, &blocked)
            .unwrap();
        assert!(!sg.nodes.iter().any(|n| n.as_str() == "Tofu" || n.as_str() == "Soy"));
        assert!(sg.nodes.iter().any(|n| n.as_str() == "Salad"));
    }
}
