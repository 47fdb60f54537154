use thiserror::Error;

use super::model::{NodeId, TripleKey};

#[derive(Debug, Error)]
pub enum KgError {
    #[error("{file}:{line}: malformed row: {reason}")]
    MalformedRow {
        file: String,
        line: u64,
        reason: String,
    },

    #[error("dangling reference in {edge}: node `{missing}` does not exist")]
    DanglingReference { edge: TripleKey, missing: NodeId },

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),

    #[error("version conflict: expected base version {expected}, current is {actual}")]
    VersionConflict { expected: u64, actual: u64 },

    #[error("version {0} is not available")]
    VersionUnavailable(u64),

    #[error("invalid subgraph request: {0}")]
    InvalidRequest(String),

    #[error("recipe `{0}` has no outgoing `contains` edge")]
    RecipeWithoutIngredients(NodeId),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = KgError> = std::result::Result<T, E>;
