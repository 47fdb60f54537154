//! Subgraph views handed to clients, with diff markers and DOT export.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::kg::{GraphSnapshot, NodeId, NodeKind, Provenance, Quantity, Subgraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffMarker {
    Kept,
    Added,
    RemovedFading,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewNode {
    pub id: NodeId,
    pub label: String,
    pub kind: NodeKind,
    /// Hops from the nearest seed; `None` for nodes kept only as fading.
    pub depth: Option<u32>,
    pub numeric_attrs: BTreeMap<String, Quantity>,
    pub categorical_attrs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ViewEdge {
    pub subject: NodeId,
    pub relation: String,
    pub object: NodeId,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphView {
    pub nodes: Vec<ViewNode>,
    pub edges: Vec<ViewEdge>,
    pub detail_level: u32,
    /// Only present on a view recomputed after a profile change.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff: Option<BTreeMap<NodeId, DiffMarker>>,
    pub highlights: Vec<NodeId>,
}

impl SubgraphView {
    pub fn from_subgraph(graph: &GraphSnapshot, sub: &Subgraph, detail_level: u32, highlights: Vec<NodeId>) -> Self {
        let nodes = sub
            .nodes
            .iter()
            .zip(&sub.depths)
            .filter_map(|(id, d)| graph.node(id.as_str()).map(|n| view_node(n, Some(*d))))
            .collect();
        let edges = sub
            .edges
            .iter()
            .map(|k| ViewEdge {
                subject: k.subject.clone(),
                relation: k.relation.to_string(),
                object: k.object.clone(),
                provenance: graph.edge(k).map(|e| e.provenance).unwrap_or_default(),
            })
            .collect();
        let present: HashSet<&NodeId> = sub.nodes.iter().collect();
        let highlights = highlights.into_iter().filter(|h| present.contains(h)).collect();
        SubgraphView {
            nodes,
            edges,
            detail_level,
            diff: None,
            highlights,
        }
    }

    pub fn node_ids(&self) -> BTreeSet<NodeId> {
        self.nodes.iter().map(|n| n.id.clone()).collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.iter().any(|n| n.id.as_str() == id)
    }

    pub fn marker(&self, id: &str) -> Option<DiffMarker> {
        self.diff.as_ref().and_then(|d| d.get(id).copied())
    }

    /// Marks this view against `prev`. Nodes that vanished are appended as
    /// fading, keeping only their old edges to nodes that stayed.
    pub fn mark_against(&mut self, prev: &SubgraphView) {
        let now = self.node_ids();
        let before = prev.node_ids();
        let mut diff = BTreeMap::new();
        for id in &now {
            let m = if before.contains(id) { DiffMarker::Kept } else { DiffMarker::Added };
            diff.insert(id.clone(), m);
        }
        let removed: BTreeSet<&NodeId> = before.difference(&now).collect();
        for n in prev.nodes.iter().filter(|n| removed.contains(&n.id)) {
            let mut n = n.clone();
            n.depth = None;
            diff.insert(n.id.clone(), DiffMarker::RemovedFading);
            self.nodes.push(n);
        }
        let kept = |id: &NodeId| diff.get(id) == Some(&DiffMarker::Kept);
        let fading = |id: &NodeId| removed.contains(id);
        for e in &prev.edges {
            let ok = (fading(&e.subject) && (kept(&e.object) || fading(&e.object)))
                || (fading(&e.object) && kept(&e.subject));
            if ok && !self.edges.contains(e) {
                self.edges.push(e.clone());
            }
        }
        self.edges.sort();
        self.diff = Some(diff);
    }

    /// Graphviz rendering; fading nodes are dashed, highlights bold.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph subgraph {\n  rankdir=LR;\n  node [fontname=\"Helvetica\"];\n");
        for n in &self.nodes {
            let shape = match n.kind {
                NodeKind::Recipe => "box",
                NodeKind::Ingredient => "ellipse",
                _ => "diamond",
            };
            let mut style = Vec::new();
            if self.highlights.contains(&n.id) {
                style.push("bold");
            }
            if self.marker(n.id.as_str()) == Some(DiffMarker::RemovedFading) {
                style.push("dashed");
            }
            let _ = write!(s, "  \"{}\" [label=\"{}\", shape={shape}", esc(n.id.as_str()), esc(&n.label));
            if !style.is_empty() {
                let _ = write!(s, ", style=\"{}\"", style.join(","));
            }
            s.push_str("];\n");
        }
        for e in &self.edges {
            let _ = writeln!(
                s,
                "  \"{}\" -> \"{}\" [label=\"{}\"];",
                esc(e.subject.as_str()),
                esc(e.object.as_str()),
                esc(&e.relation)
            );
        }
        s.push_str("}\n");
        s
    }
}

fn esc(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn view_node(n: &crate::kg::EntityNode, depth: Option<u32>) -> ViewNode {
    ViewNode {
        id: n.id.clone(),
        label: n.label.clone(),
        kind: n.kind,
        depth,
        numeric_attrs: n.numeric_attrs.clone(),
        categorical_attrs: n.categorical_attrs.clone(),
    }
}
