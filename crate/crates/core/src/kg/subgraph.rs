use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::model::{NodeId, TripleKey};

/// Raw result of a breadth-limited extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subgraph {
    /// Nodes in admission order (seeds first).
    pub nodes: Vec<NodeId>,
    /// BFS depth of each entry in `nodes`.
    pub depths: Vec<u32>,
    /// Edges with both endpoints in `nodes`, sorted.
    pub edges: Vec<TripleKey>,
}

impl Subgraph {
    pub fn node_set(&self) -> BTreeSet<NodeId> {
        self.nodes.iter().cloned().collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.iter().any(|n| n.as_str() == id)
    }
}
