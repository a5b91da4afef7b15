use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::RwLock;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    cell_details, episode_transcript, matrix, MatrixError, MatrixRequest, Order, Page, ZoomView,
};
use crate::corpus::CorpusError;
use crate::levels::LevelError;
use crate::provenance::{ProvenanceError, SessionState};
use crate::retrieval::Label;
use crate::session::{Session, SessionError};
use crate::thematic::{parse_query, print_query};

/// Reads run concurrently; commits and labels take the write lock.
pub type SharedSession = Arc<RwLock<Session>>;

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<MatrixError> for ApiError {
    fn from(e: MatrixError) -> Self {
        let status = match &e {
            MatrixError::BadRequest(_) => StatusCode::BAD_REQUEST,
            MatrixError::Corpus(_) => StatusCode::NOT_FOUND,
            MatrixError::Session(s) => return ApiError::from_session(s, e.to_string()),
        };
        ApiError(status, e.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let msg = e.to_string();
        ApiError::from_session(&e, msg)
    }
}

impl ApiError {
    fn from_session(e: &SessionError, msg: String) -> Self {
        let status = match e {
            SessionError::UnknownEpisode(_)
            | SessionError::Provenance(ProvenanceError::UnknownNode(_)) => StatusCode::NOT_FOUND,
            SessionError::Provenance(ProvenanceError::DigestMismatch { .. }) => StatusCode::CONFLICT,
            SessionError::Level(LevelError::Corpus(CorpusError::UnknownParticipant(_))) => {
                StatusCode::BAD_REQUEST
            }
            SessionError::Level(_) | SessionError::Threshold(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, msg)
    }

    fn bad(msg: impl Into<String>) -> Self {
        ApiError(StatusCode::BAD_REQUEST, msg.into())
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// All matrix endpoints over one shared session.
pub fn router(session: SharedSession) -> Router {
    Router::new()
        .route("/corpus/summary", get(corpus_summary))
        .route("/matrix", get(matrix_get).post(matrix_post))
        .route("/cell/{row}/{col}", get(cell))
        .route("/episode/{id}", get(episode))
        .route("/episode/{id}/label", post(label))
        .route("/filters", post(filters))
        .route("/ambiguous", get(ambiguous))
        .route("/provenance/graph", get(provenance_graph))
        .route("/provenance/navigate", post(navigate))
        .route("/provenance/star", post(star))
        .route("/provenance/note", post(note))
        .route("/report", get(report))
        .route("/query/parse", post(query_parse))
        .with_state(session)
}

/// Serves the router until the process is stopped.
pub async fn serve(session: SharedSession, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(session)).await
}

/// Rejects malformed JSON bodies with the same error shape as everything else.
fn body<T: serde::de::DeserializeOwned>(value: Value) -> ApiResult<T> {
    serde_path_to_error::deserialize(value).map_err(|e| ApiError::bad(e.to_string()))
}

async fn corpus_summary(State(s): State<SharedSession>) -> Json<Value> {
    let s = s.read();
    let ctx = s.context();
    let corpus = ctx.corpus();
    let ladder: Vec<Value> = ZoomView::ALL
        .iter()
        .map(|v| json!({ "view": v, "minCellSize": v.min_cell_size(), "bins": v.bins() }))
        .collect();
    Json(json!({
        "identityHash": s.corpus_hash(),
        "participants": corpus.participants(),
        "messageCount": corpus.message_count(),
        "timeExtent": corpus.time_extent(),
        "categories": ctx.categories().iter().collect::<Vec<_>>(),
        "levels": ctx.registry().descriptors(),
        "viewLadder": ladder,
        "currentNode": s.graph().current(),
    }))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct MatrixQuery {
    node: Option<u64>,
    view: Option<String>,
    cell_size: Option<u32>,
    row_order: Option<String>,
    col_order: Option<String>,
}

async fn matrix_get(
    State(s): State<SharedSession>,
    Query(q): Query<MatrixQuery>,
) -> ApiResult<Json<super::MatrixResponse>> {
    let order = |o: Option<String>| o.map_or(Ok(Order::default()), |o| o.parse::<Order>());
    let request = MatrixRequest {
        view: q.view.map(|v| v.parse()).transpose()?,
        cell_size: q.cell_size,
        row_order: order(q.row_order)?,
        col_order: order(q.col_order)?,
        node: q.node,
    };
    Ok(Json(matrix(&s.read(), &request)?))
}

async fn matrix_post(
    State(s): State<SharedSession>,
    Json(v): Json<Value>,
) -> ApiResult<Json<super::MatrixResponse>> {
    let request: MatrixRequest = body(v)?;
    Ok(Json(matrix(&s.read(), &request)?))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct CellQuery {
    node: Option<u64>,
    view: Option<String>,
    cell_size: Option<u32>,
    #[serde(default)]
    offset: usize,
    limit: Option<usize>,
}

async fn cell(
    State(s): State<SharedSession>,
    Path((row, col)): Path<(String, String)>,
    Query(q): Query<CellQuery>,
) -> ApiResult<Json<super::CellDetails>> {
    let zoom = MatrixRequest {
        view: q.view.map(|v| v.parse()).transpose()?,
        cell_size: q.cell_size,
        ..Default::default()
    }
    .resolved_view()?;
    let page = Page { offset: q.offset, limit: q.limit };
    Ok(Json(cell_details(&s.read(), q.node, &row, &col, zoom, page)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeQuery {
    node: Option<u64>,
}

async fn episode(
    State(s): State<SharedSession>,
    Path(id): Path<String>,
    Query(q): Query<NodeQuery>,
) -> ApiResult<Json<super::Transcript>> {
    Ok(Json(episode_transcript(&s.read(), q.node, &id)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelBody {
    label: Label,
}

async fn label(
    State(s): State<SharedSession>,
    Path(id): Path<String>,
    Json(v): Json<Value>,
) -> ApiResult<Json<Value>> {
    let LabelBody { label } = body(v)?;
    let outcome = s.write().label_episode(&id, label)?;
    Ok(Json(json!(outcome)))
}

/// Commits a new state and answers with the node it landed on.
async fn filters(State(s): State<SharedSession>, Json(v): Json<Value>) -> ApiResult<Json<Value>> {
    let state: SessionState = body(v)?;
    let mut s = s.write();
    let id = s.commit(state)?;
    Ok(Json(json!(s.graph().node(id).map_err(SessionError::from)?)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AmbiguousQuery {
    k: Option<usize>,
}

async fn ambiguous(
    State(s): State<SharedSession>,
    Query(q): Query<AmbiguousQuery>,
) -> Json<Value> {
    let ranked: Vec<Value> = s
        .read()
        .ambiguous(q.k.unwrap_or(10))
        .into_iter()
        .map(|(id, score)| json!({ "episodeId": id, "p": score.p, "uncertainty": score.uncertainty }))
        .collect();
    Json(json!(ranked))
}

async fn provenance_graph(State(s): State<SharedSession>) -> Json<Value> {
    let s = s.read();
    Json(json!({
        "current": s.graph().current(),
        "leaves": s.graph().leaves(),
        "nodes": s.graph().nodes(),
    }))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct NavigateBody {
    node_id: u64,
}

async fn navigate(State(s): State<SharedSession>, Json(v): Json<Value>) -> ApiResult<Json<Value>> {
    let NavigateBody { node_id } = body(v)?;
    let mut s = s.write();
    s.navigate(node_id)?;
    Ok(Json(json!(s.graph().current_node())))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct StarBody {
    node_id: u64,
    #[serde(default = "yes")]
    starred: bool,
}

fn yes() -> bool {
    true
}

async fn star(State(s): State<SharedSession>, Json(v): Json<Value>) -> ApiResult<Json<Value>> {
    let StarBody { node_id, starred } = body(v)?;
    let mut s = s.write();
    s.set_starred(node_id, starred)?;
    Ok(Json(json!(s.graph().node(node_id).map_err(SessionError::from)?)))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct NoteBody {
    node_id: u64,
    note: Option<String>,
}

async fn note(State(s): State<SharedSession>, Json(v): Json<Value>) -> ApiResult<Json<Value>> {
    let NoteBody { node_id, note } = body(v)?;
    let mut s = s.write();
    s.set_note(node_id, note)?;
    Ok(Json(json!(s.graph().node(node_id).map_err(SessionError::from)?)))
}

async fn report(State(s): State<SharedSession>) -> impl IntoResponse {
    (
        [(header::CONTENT_TYPE, "text/markdown; charset=utf-8")],
        s.read().report().render(),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParseBody {
    query: String,
}

/// Validation for the query builder: always 200 for well-formed bodies, with
/// `valid` telling whether the query parsed.
async fn query_parse(State(s): State<SharedSession>, Json(v): Json<Value>) -> ApiResult<Json<Value>> {
    let ParseBody { query } = body(v)?;
    let s = s.read();
    Ok(Json(match parse_query(&query, s.context().categories()) {
        Ok(ast) => json!({ "valid": true, "canonical": print_query(&ast), "ast": ast }),
        Err(e) => json!({
            "valid": false,
            "error": e.kind.to_string(),
            "position": e.position,
        }),
    }))
}
