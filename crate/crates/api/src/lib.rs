//! JSON-over-HTTP front for the engine: session lifecycle, chat turns, staged
//! graph interactions, apply/undo, graph views and long-polled updates.
//!
//! Every response body carries `query_version`; errors are
//! `{code, message, details}`.

pub mod error;
pub mod state;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use genie_core::kg::NodeId;
use genie_core::matcher::{Recommendation, SubgraphView};
use genie_core::session::{LogEntry, Polarity, PreferenceProfile, Session, SessionError, TurnResponse, Update};

pub use error::{ApiError, ErrorBody};
pub use state::{AppState, Slot};

type ApiResult<T> = Result<T, ApiError>;

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
}

/// Runs a session operation off the async workers; provider calls block.
async fn run<T: Send + 'static>(
    slot: Arc<Slot>,
    f: impl FnOnce(&mut Session) -> Result<T, SessionError> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(move || slot.with(f))
        .await
        .map_err(internal)?
        .map_err(ApiError::from)
}

/// A JSON body that turns every rejection into a 400 with our error shape.
fn body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::malformed(e.to_string()))
}

/// Like [`body`], but an empty body means all defaults.
fn optional_body<T: DeserializeOwned + Default>(bytes: &Bytes) -> ApiResult<T> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        Ok(T::default())
    } else {
        body(bytes)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionToken {
    pub token: String,
    pub created_at: chrono::DateTime<chrono::Utc>,
    pub snapshot_version: u64,
    pub query_version: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatRequest {
    message: String,
}

#[derive(Debug, Serialize)]
struct ChatResponse {
    #[serde(flatten)]
    turn: TurnResponse,
    subgraph: Option<SubgraphView>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InteractionRequest {
    kind: Polarity,
    node_id: NodeId,
}

#[derive(Debug, Serialize)]
struct InteractionResponse {
    entry: LogEntry,
    staged: Vec<LogEntry>,
    query_version: u64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ApplyRequest {
    query_version: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UndoRequest {
    action_id: u64,
    #[serde(default)]
    query_version: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResolveRequest {
    conflict_id: String,
    keep: String,
    #[serde(default)]
    query_version: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfirmRequest {
    signature: String,
    accept: bool,
    #[serde(default)]
    query_version: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClarifyRequest {
    term: String,
    choice: String,
    #[serde(default)]
    query_version: Option<u64>,
}

#[derive(Debug, Serialize)]
struct UpdateResponse {
    #[serde(flatten)]
    update: Update,
    subgraph_with_diff: Option<SubgraphView>,
}

impl From<Update> for UpdateResponse {
    fn from(update: Update) -> Self {
        let subgraph_with_diff = update.recommendation.as_ref().map(|r| r.subgraph.clone());
        UpdateResponse {
            update,
            subgraph_with_diff,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
struct GraphQuery {
    detail: Option<u32>,
}

#[derive(Debug, Serialize)]
struct GraphResponse {
    #[serde(flatten)]
    view: SubgraphView,
    clamped: bool,
    query_version: u64,
}

#[derive(Debug, Serialize)]
struct ListResponse<T> {
    #[serde(flatten)]
    items: T,
    query_version: u64,
}

#[derive(Debug, Serialize)]
struct Queries {
    queries: Vec<String>,
}

#[derive(Debug, Serialize)]
struct History {
    entries: Vec<LogEntry>,
}

#[derive(Debug, Serialize)]
struct ProfileBody {
    profile: PreferenceProfile,
}

#[derive(Debug, Default, Deserialize)]
struct UpdatesQuery {
    since: Option<u64>,
    timeout_ms: Option<u64>,
}

#[derive(Debug, Serialize)]
struct UpdatesResponse {
    changed: bool,
    recommendation: Option<Recommendation>,
    query_version: u64,
}

async fn health(State(st): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "status": "ok",
        "provider": st.engine.gateway().provider_name(),
        "snapshot_version": st.engine.snapshot().version(),
        "sessions": st.session_count(),
    }))
}

async fn create_session(State(st): State<Arc<AppState>>) -> ApiResult<(StatusCode, Json<SessionToken>)> {
    let slot = st.create()?;
    let snapshot_version = slot.session.lock().snapshot_version();
    Ok((
        StatusCode::CREATED,
        Json(SessionToken {
            token: slot.token.clone(),
            created_at: slot.created_at,
            snapshot_version,
            query_version: 0,
        }),
    ))
}

async fn chat(State(st): State<Arc<AppState>>, Path(t): Path<String>, bytes: Bytes) -> ApiResult<Json<ChatResponse>> {
    let slot = st.get(&t)?;
    let req: ChatRequest = body(&bytes)?;
    let turn = run(slot, move |s| s.route_turn(&req.message)).await?;
    let subgraph = turn.recommendation.as_ref().map(|r| r.subgraph.clone());
    Ok(Json(ChatResponse { turn, subgraph }))
}

async fn interactions(
    State(st): State<Arc<AppState>>,
    Path(t): Path<String>,
    bytes: Bytes,
) -> ApiResult<(StatusCode, Json<InteractionResponse>)> {
    let slot = st.get(&t)?;
    let req: InteractionRequest = body(&bytes)?;
    let resp = run(slot, move |s| {
        let entry = s.stage(req.kind, req.node_id.as_str())?;
        Ok(InteractionResponse {
            entry,
            staged: s.staged(),
            query_version: s.query_version(),
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(resp)))
}

async fn apply(State(st): State<Arc<AppState>>, Path(t): Path<String>, bytes: Bytes) -> ApiResult<Json<UpdateResponse>> {
    let slot = st.get(&t)?;
    let req: ApplyRequest = optional_body(&bytes)?;
    let upd = run(slot, move |s| s.apply(req.query_version)).await?;
    Ok(Json(upd.into()))
}

async fn undo(State(st): State<Arc<AppState>>, Path(t): Path<String>, bytes: Bytes) -> ApiResult<Json<UpdateResponse>> {
    let slot = st.get(&t)?;
    let req: UndoRequest = body(&bytes)?;
    let upd = run(slot, move |s| s.undo(req.action_id, req.query_version)).await?;
    Ok(Json(upd.into()))
}

async fn resolve_conflict(
    State(st): State<Arc<AppState>>,
    Path(t): Path<String>,
    bytes: Bytes,
) -> ApiResult<Json<UpdateResponse>> {
    let slot = st.get(&t)?;
    let req: ResolveRequest = body(&bytes)?;
    let upd = run(slot, move |s| s.resolve_conflict(&req.conflict_id, &req.keep, req.query_version)).await?;
    Ok(Json(upd.into()))
}

async fn confirm_learned(
    State(st): State<Arc<AppState>>,
    Path(t): Path<String>,
    bytes: Bytes,
) -> ApiResult<Json<UpdateResponse>> {
    let slot = st.get(&t)?;
    let req: ConfirmRequest = body(&bytes)?;
    let upd = run(slot, move |s| s.confirm_learned(&req.signature, req.accept, req.query_version)).await?;
    Ok(Json(upd.into()))
}

async fn clarification(
    State(st): State<Arc<AppState>>,
    Path(t): Path<String>,
    bytes: Bytes,
) -> ApiResult<Json<UpdateResponse>> {
    let slot = st.get(&t)?;
    let req: ClarifyRequest = body(&bytes)?;
    let upd = run(slot, move |s| s.answer_clarification(&req.term, &req.choice, req.query_version)).await?;
    Ok(Json(upd.into()))
}

async fn refresh(State(st): State<Arc<AppState>>, Path(t): Path<String>) -> ApiResult<Json<UpdateResponse>> {
    let slot = st.get(&t)?;
    let ctx = st.engine.context();
    let upd = run(slot, move |s| s.repin(ctx)).await?;
    Ok(Json(upd.into()))
}

async fn graph(
    State(st): State<Arc<AppState>>,
    Path(t): Path<String>,
    q: Result<Query<GraphQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<Response> {
    let slot = st.get(&t)?;
    let Query(q) = q?;
    let resp = run(slot, move |s| {
        let detail = q.detail.unwrap_or(s.context().matcher.default_detail);
        let (view, clamped) = s.view(detail)?;
        Ok(GraphResponse {
            view,
            clamped,
            query_version: s.query_version(),
        })
    })
    .await?;
    let mut out = Json(&resp).into_response();
    if resp.clamped {
        let text = format!("299 genie \"detail clamped to {}\"", resp.view.detail_level);
        out.headers_mut()
            .insert(header::WARNING, HeaderValue::from_str(&text).map_err(internal)?);
    }
    Ok(out)
}

async fn suggested_queries(
    State(st): State<Arc<AppState>>,
    Path(t): Path<String>,
) -> ApiResult<Json<ListResponse<Queries>>> {
    let slot = st.get(&t)?;
    let resp = run(slot, |s| {
        Ok(ListResponse {
            items: Queries {
                queries: s.suggested_queries()?,
            },
            query_version: s.query_version(),
        })
    })
    .await?;
    Ok(Json(resp))
}

async fn history(State(st): State<Arc<AppState>>, Path(t): Path<String>) -> ApiResult<Json<ListResponse<History>>> {
    let slot = st.get(&t)?;
    let s = slot.session.lock();
    Ok(Json(ListResponse {
        items: History { entries: s.history() },
        query_version: s.query_version(),
    }))
}

async fn profile(State(st): State<Arc<AppState>>, Path(t): Path<String>) -> ApiResult<Json<ListResponse<ProfileBody>>> {
    let slot = st.get(&t)?;
    let s = slot.session.lock();
    Ok(Json(ListResponse {
        items: ProfileBody {
            profile: s.profile().clone(),
        },
        query_version: s.query_version(),
    }))
}

/// Waits until the session moves past `since` or the poll window closes.
async fn updates(
    State(st): State<Arc<AppState>>,
    Path(t): Path<String>,
    q: Result<Query<UpdatesQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<Json<UpdatesResponse>> {
    let slot = st.get(&t)?;
    let Query(q) = q?;
    let mut rx = slot.version.subscribe();
    let since = q.since.unwrap_or(*rx.borrow());
    let wait = q
        .timeout_ms
        .map(Duration::from_millis)
        .unwrap_or(st.long_poll)
        .min(st.long_poll);
    let changed = tokio::time::timeout(wait, rx.wait_for(|v| *v > since)).await.is_ok();
    let s = slot.session.lock();
    Ok(Json(UpdatesResponse {
        changed,
        recommendation: s.recommendation().cloned(),
        query_version: s.query_version(),
    }))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "unknown_route", "no such route")
}

async fn content_language(mut resp: Response) -> Response {
    resp.headers_mut()
        .insert(header::CONTENT_LANGUAGE, HeaderValue::from_static("en"));
    resp
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{t}/chat", post(chat))
        .route("/sessions/{t}/interactions", post(interactions))
        .route("/sessions/{t}/apply", post(apply))
        .route("/sessions/{t}/undo", post(undo))
        .route("/sessions/{t}/resolve-conflict", post(resolve_conflict))
        .route("/sessions/{t}/confirm-learned", post(confirm_learned))
        .route("/sessions/{t}/clarification", post(clarification))
        .route("/sessions/{t}/refresh", post(refresh))
        .route("/sessions/{t}/graph", get(graph))
        .route("/sessions/{t}/suggested-queries", get(suggested_queries))
        .route("/sessions/{t}/history", get(history))
        .route("/sessions/{t}/profile", get(profile))
        .route("/sessions/{t}/updates", get(updates))
        .fallback(not_found)
        .layer(axum::middleware::map_response(content_language))
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
