//! Versioned, single-writer graph store.
//!
//! Readers take an `Arc<GraphSnapshot>` and keep it as long as they like;
//! writers build the next version from a clone and publish it atomically.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::error::{KgError, Result};
use super::model::{EntityNode, NodeId, Provenance, RelationEdge};
use super::snapshot::GraphSnapshot;

pub const DEFAULT_RETENTION: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditOp {
    UpsertEdge,
    AddNode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditTriple {
    pub subject: NodeId,
    pub relation: String,
    pub object: NodeId,
    pub provenance: Provenance,
}

/// One line of the append-only audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub version: u64,
    pub op: AuditOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triple: Option<AuditTriple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<EntityNode>,
    pub timestamp: DateTime<Utc>,
}

struct Inner {
    base: Arc<GraphSnapshot>,
    retained: VecDeque<Arc<GraphSnapshot>>,
    audit: Vec<AuditRecord>,
    retention: usize,
}

pub struct KgStore {
    inner: RwLock<Inner>,
    sink: Mutex<Option<Box<dyn Write + Send>>>,
}

impl std::fmt::Debug for KgStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KgStore")
            .field("version", &self.current().version())
            .finish()
    }
}

impl KgStore {
    pub fn new(snapshot: GraphSnapshot) -> Self {
        Self::with_retention(snapshot, DEFAULT_RETENTION)
    }

    pub fn with_retention(snapshot: GraphSnapshot, retention: usize) -> Self {
        let base = Arc::new(snapshot);
        KgStore {
            inner: RwLock::new(Inner {
                base: base.clone(),
                retained: VecDeque::from([base]),
                audit: Vec::new(),
                retention: retention.max(1),
            }),
            sink: Mutex::new(None),
        }
    }

    /// Mirrors every audit record, as one JSON line, to `sink`.
    pub fn with_audit_sink(self, sink: Box<dyn Write + Send>) -> Self {
        *self.sink.lock() = Some(sink);
        self
    }

    pub fn current(&self) -> Arc<GraphSnapshot> {
        self.inner
            .read()
            .retained
            .back()
            .cloned()
            .expect("store always retains the current snapshot")
    }

    pub fn version(&self) -> u64 {
        self.current().version()
    }

    pub fn audit_log(&self) -> Vec<AuditRecord> {
        self.inner.read().audit.clone()
    }

    /// The snapshot at `version`; versions no longer retained in memory are
    /// rebuilt by replaying the audit log over the base snapshot.
    pub fn snapshot(&self, version: u64) -> Result<Arc<GraphSnapshot>> {
        let inner = self.inner.read();
        if let Some(s) = inner.retained.iter().find(|s| s.version() == version) {
            return Ok(s.clone());
        }
        let latest = inner.retained.back().map(|s| s.version()).unwrap_or(0);
        if version < inner.base.version() || version > latest {
            return Err(KgError::VersionUnavailable(version));
        }
        let mut g = (*inner.base).clone();
        for rec in inner.audit.iter().take_while(|r| r.version <= version) {
            apply_record(&mut g, rec);
        }
        g.version = version;
        Ok(Arc::new(g))
    }

    pub fn upsert_edge(&self, edge: RelationEdge) -> Result<Arc<GraphSnapshot>> {
        self.upsert_batch(Vec::new(), vec![edge], None)
    }

    /// Fails with `VersionConflict` when another write landed after
    /// `base_version`; the caller re-reads and retries.
    pub fn upsert_edge_at(&self, base_version: u64, edge: RelationEdge) -> Result<Arc<GraphSnapshot>> {
        self.upsert_batch(Vec::new(), vec![edge], Some(base_version))
    }

    /// Adds `nodes` (new ids only) and `edges` as a single new version. A batch
    /// that changes nothing leaves the version unchanged.
    pub fn upsert_batch(
        &self,
        nodes: Vec<EntityNode>,
        edges: Vec<RelationEdge>,
        base_version: Option<u64>,
    ) -> Result<Arc<GraphSnapshot>> {
        let mut inner = self.inner.write();
        let current = inner.retained.back().cloned().expect("current snapshot");
        if let Some(expected) = base_version {
            if expected != current.version() {
                return Err(KgError::VersionConflict {
                    expected,
                    actual: current.version(),
                });
            }
        }
        let new_nodes: Vec<EntityNode> = nodes
            .into_iter()
            .filter(|n| !current.contains_node(n.id.as_str()))
            .collect();
        let mut new_edges: Vec<RelationEdge> = Vec::new();
        for mut e in edges {
            let Some(rel) = current.relations().get(&e.relation) else {
                return Err(KgError::UnknownRelation(e.relation.to_string()));
            };
            e.relation = rel;
            for end in [&e.subject, &e.object] {
                let exists = current.contains_node(end.as_str())
                    || new_nodes.iter().any(|n| &n.id == end);
                if !exists {
                    return Err(KgError::DanglingReference {
                        edge: e.key(),
                        missing: end.clone(),
                    });
                }
            }
            if !current.has_edge(&e.key()) && !new_edges.iter().any(|x| x.key() == e.key()) {
                new_edges.push(e);
            }
        }
        if new_nodes.is_empty() && new_edges.is_empty() {
            return Ok(current);
        }

        let version = current.version() + 1;
        let now = Utc::now();
        let mut next = (*current).clone();
        next.version = version;
        let mut records = Vec::with_capacity(new_nodes.len() + new_edges.len());
        for n in new_nodes {
            records.push(AuditRecord {
                version,
                op: AuditOp::AddNode,
                triple: None,
                node: Some(n.clone()),
                timestamp: now,
            });
            next.insert_node(n);
        }
        for mut e in new_edges {
            e.version = version;
            records.push(AuditRecord {
                version,
                op: AuditOp::UpsertEdge,
                triple: Some(AuditTriple {
                    subject: e.subject.clone(),
                    relation: e.relation.to_string(),
                    object: e.object.clone(),
                    provenance: e.provenance,
                }),
                node: None,
                timestamp: now,
            });
            next.insert_edge(e);
        }

        if let Some(sink) = self.sink.lock().as_mut() {
            for r in &records {
                let line = serde_json::to_string(r).expect("audit record serializes");
                writeln!(sink, "{line}")?;
            }
            sink.flush()?;
        }
        inner.audit.extend(records);
        let next = Arc::new(next);
        inner.retained.push_back(next.clone());
        while inner.retained.len() > inner.retention {
            inner.retained.pop_front();
        }
        Ok(next)
    }
}

fn apply_record(g: &mut GraphSnapshot, rec: &AuditRecord) {
    match rec.op {
        AuditOp::AddNode => {
            if let Some(n) = &rec.node {
                g.insert_node(n.clone());
            }
        }
        AuditOp::UpsertEdge => {
            if let Some(t) = &rec.triple {
                let rel = g
                    .relations
                    .get(&t.relation)
                    .unwrap_or_else(|| Arc::from(t.relation.as_str()));
                g.insert_edge(RelationEdge {
                    subject: t.subject.clone(),
                    relation: rel,
                    object: t.object.clone(),
                    provenance: t.provenance,
                    version: rec.version,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::model::{NodeKind, TripleKey};
    use crate::kg::registry::RelationRegistry;

    fn store() -> KgStore {
        let mut g = GraphSnapshot::empty(Arc::new(RelationRegistry::default()));
        g.insert_node(EntityNode::new("Lemon", "Lemon", NodeKind::Ingredient));
        g.insert_node(EntityNode::new("Fish", "Fish", NodeKind::Ingredient));
        KgStore::with_retention(g, 2)
    }

    #[test]
    fn lemon_neutralizes_fish_in_next_version_only() {
        let s = store();
        let before = s.current();
        let key = TripleKey::new("Lemon", "neutralizeOdor", "Fish");
        let after = s
            .upsert_edge(RelationEdge::new("Lemon", "neutralizeOdor", "Fish", Provenance::Inferred))
            .unwrap();
        assert_eq!(after.version(), before.version() + 1);
        assert!(after.has_edge(&key));
        assert!(!before.has_edge(&key));
        assert_eq!(after.edge(&key).unwrap().version, after.version());
        assert_eq!(s.audit_log().len(), 1);
    }

    #[test]
    fn identical_upsert_is_noop() {
        let s = store();
        let e = RelationEdge::new("Lemon", "neutralizeOdor", "Fish", Provenance::Inferred);
        let v1 = s.upsert_edge(e.clone()).unwrap().version();
        let v2 = s.upsert_edge(e).unwrap().version();
        assert_eq!(v1, v2);
        assert_eq!(s.audit_log().len(), 1);
    }

    #[test]
    fn dangling_and_unknown_relation_rejected() {
        let s = store();
        assert!(matches!(
            s.upsert_edge(RelationEdge::new("Lemon", "contains", "Ghost", Provenance::User)),
            Err(KgError::DanglingReference { .. })
        ));
        assert!(matches!(
            s.upsert_edge(RelationEdge::new("Lemon", "likes", "Fish", Provenance::User)),
            Err(KgError::UnknownRelation(_))
        ));
    }

    #[test]
    fn stale_base_version_conflicts() {
        let s = store();
        let base = s.version();
        s.upsert_edge_at(base, RelationEdge::new("Lemon", "neutralizeOdor", "Fish", Provenance::User))
            .unwrap();
        let err = s
            .upsert_edge_at(base, RelationEdge::new("Fish", "substitutableBy", "Lemon", Provenance::User))
            .unwrap_err();
        assert!(matches!(err, KgError::VersionConflict { expected, actual } if expected == base && actual == base + 1));
    }

    #[test]
    fn evicted_versions_rebuild_from_audit() {
        let s = store();
        s.upsert_batch(
            vec![EntityNode::new("Ginger", "Ginger", NodeKind::Ingredient)],
            vec![RelationEdge::new("Ginger", "neutralizeOdor", "Fish", Provenance::Curated)],
            None,
        )
        .unwrap();
        s.upsert_edge(RelationEdge::new("Lemon", "neutralizeOdor", "Fish", Provenance::Inferred))
            .unwrap();
        s.upsert_edge(RelationEdge::new("Lemon", "substitutableBy", "Ginger", Provenance::User))
            .unwrap();
        // retention 2 keeps versions 3 and 4; 2 must be rebuilt
        let v2 = s.snapshot(2).unwrap();
        assert_eq!(v2.version(), 2);
        assert!(v2.contains_node("Ginger"));
        assert_eq!(v2.triple_count(), 1);
        assert_eq!(s.snapshot(4).unwrap().triple_count(), 3);
        assert!(s.snapshot(9).is_err());
    }

    #[test]
    fn audit_sink_gets_json_lines() {
        #[derive(Clone, Default)]
        struct Buf(Arc<Mutex<Vec<u8>>>);
        impl Write for Buf {
            fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
                self.0.lock().extend_from_slice(b);
                Ok(b.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let buf = Buf::default();
        let s = store().with_audit_sink(Box::new(buf.clone()));
        s.upsert_edge(RelationEdge::new("Lemon", "neutralizeOdor", "Fish", Provenance::Inferred))
            .unwrap();
        let text = String::from_utf8(buf.0.lock().clone()).unwrap();
        let rec: AuditRecord = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(rec.version, 2);
        assert_eq!(rec.op, AuditOp::UpsertEdge);
        assert_eq!(rec.triple.unwrap().relation, "neutralizeOdor");
    }
}
