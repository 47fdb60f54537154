//! Wire errors: `{code, message, details}` with a fitting status.

use axum::extract::rejection::QueryRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::{json, Value};

use genie_core::engine::EngineError;
use genie_core::session::SessionError;

#[derive(Debug, Clone, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
    pub details: Value,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code,
                message: message.into(),
                details: Value::Null,
            },
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.body.details = details;
        self
    }

    pub fn unknown_session(token: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session `{token}`"))
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "malformed_query", r.body_text())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        use SessionError as E;
        let message = e.to_string();
        let (status, code, details) = match e {
            E::Turn { source, .. } => return ApiError::from(*source),
            E::EmptyMessage => (StatusCode::UNPROCESSABLE_ENTITY, "empty_message", Value::Null),
            E::UnknownNode(n) => (StatusCode::NOT_FOUND, "unknown_node", json!({"node_id": n})),
            E::DuplicateStage { node, kind } => {
                (StatusCode::CONFLICT, "duplicate_stage", json!({"node_id": node, "kind": kind}))
            }
            E::NoStagedActions => (StatusCode::CONFLICT, "no_staged_actions", Value::Null),
            E::UnknownAction(id) => (StatusCode::NOT_FOUND, "unknown_action", json!({"action_id": id})),
            E::AlreadyUndone(id) => (StatusCode::CONFLICT, "already_undone", json!({"action_id": id})),
            E::NotUndoable(id) => (StatusCode::CONFLICT, "not_undoable", json!({"action_id": id})),
            E::UnknownConflict(id) => (StatusCode::NOT_FOUND, "unknown_conflict", json!({"conflict_id": id})),
            E::ConflictAlreadyResolved(id) => {
                (StatusCode::CONFLICT, "conflict_already_resolved", json!({"conflict_id": id}))
            }
            E::InvalidChoice { subject, choice } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_choice",
                json!({"subject": subject, "choice": choice}),
            ),
            E::UnresolvedConflicts(c) => (StatusCode::CONFLICT, "unresolved_conflicts", json!({"conflicts": c})),
            E::UnknownProposal(s) => (StatusCode::NOT_FOUND, "unknown_proposal", json!({"signature": s})),
            E::UnknownClarification(t) => (StatusCode::NOT_FOUND, "unknown_clarification", json!({"term": t})),
            E::NoRecommendationYet => (StatusCode::CONFLICT, "no_recommendation_yet", Value::Null),
            E::StaleVersion { expected, current } => (
                StatusCode::CONFLICT,
                "stale_version",
                json!({"expected": expected, "current": current}),
            ),
            E::Llm(_) => (StatusCode::BAD_GATEWAY, "provider_error", Value::Null),
            E::ReplayDiverged { action_id, .. } => {
                (StatusCode::INTERNAL_SERVER_ERROR, "replay_diverged", json!({"action_id": action_id}))
            }
            E::MalformedLog { line, .. } => (StatusCode::INTERNAL_SERVER_ERROR, "malformed_log", json!({"line": line})),
            E::Kg(_) | E::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", Value::Null),
        };
        ApiError::new(status, code, message).with_details(details)
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Session(s) => s.into(),
            EngineError::Llm(l) => ApiError::new(StatusCode::BAD_GATEWAY, "provider_error", l.to_string()),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
        }
    }
}
