//! Recipe knowledge graph: typed nodes, labeled triples, versioned snapshots,
//! adjacency traversal and breadth-limited subgraph extraction.

mod error;
pub mod ingest;
mod model;
pub mod registry;
mod snapshot;
mod store;
mod subgraph;

pub use error::{KgError, Result};
pub use ingest::{export_attrs, export_triples, format_number, load_triples, IngestMode, IngestReport, RejectedRow};
pub use model::{
    Adjacent, Direction, EntityNode, NodeId, NodeKind, Provenance, Quantity, Relation, RelationEdge, TripleKey, Unit,
};
pub use registry::{RelationRegistry, RelationSpec};
pub use snapshot::GraphSnapshot;
pub use store::{AuditOp, AuditRecord, AuditTriple, KgStore, DEFAULT_RETENTION};
pub use subgraph::Subgraph;
