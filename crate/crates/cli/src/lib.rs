//! HTTP review service. Handlers only translate between HTTP and the review
//! queue; every mutation goes through `ReviewQueue::record_decision`.

use std::path::Path;
use std::sync::{Arc, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use stylebal::dataset::Dataset;
use stylebal::qc::{review_summary, DecisionOutcome, ReviewItem, ReviewQueue, ReviewState};
use stylebal::Error;

pub struct AppState {
    pub queue: RwLock<ReviewQueue>,
    pub dataset: Dataset,
}

pub type SharedState = Arc<AppState>;

pub fn router(queue: ReviewQueue, dataset: Dataset) -> Router {
    let state = Arc::new(AppState {
        queue: RwLock::new(queue),
        dataset,
    });
    Router::new()
        .route("/api/queue", get(list_queue))
        .route("/api/item/{id}", get(get_item))
        .route("/api/image/{id}", get(get_image))
        .route("/api/decision", post(post_decision))
        .route("/api/progress", get(progress))
        .with_state(state)
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownItem(_) => StatusCode::NOT_FOUND,
            Error::Conflict { .. } => StatusCode::CONFLICT,
            Error::IllegalTransition { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            Error::InvalidArgument(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Serialize, Deserialize)]
pub struct ItemView {
    #[serde(flatten)]
    pub item: ReviewItem,
    pub state: ReviewState,
}

#[derive(Debug, Deserialize)]
struct QueueQuery {
    state: Option<String>,
}

fn parse_state(s: &str) -> ApiResult<ReviewState> {
    s.parse().map_err(|e: Error| ApiError(StatusCode::BAD_REQUEST, e.to_string()))
}

async fn list_queue(State(st): State<SharedState>, Query(q): Query<QueueQuery>) -> ApiResult<Json<Vec<ItemView>>> {
    let filter = q.state.as_deref().map(parse_state).transpose()?;
    let queue = st.queue.read().expect("queue lock");
    let items = queue
        .items()
        .iter()
        .filter_map(|item| {
            let state = queue.state(&item.item_id)?;
            filter.is_none_or(|f| f == state).then(|| ItemView {
                item: item.clone(),
                state,
            })
        })
        .collect();
    Ok(Json(items))
}

async fn get_item(State(st): State<SharedState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<ItemView>> {
    let queue = st.queue.read().expect("queue lock");
    let item = queue.get(&id).ok_or_else(|| Error::UnknownItem(id.clone()))?;
    Ok(Json(ItemView {
        item: item.clone(),
        state: queue.state(&id).unwrap_or(ReviewState::Pending),
    }))
}

#[derive(Debug, Deserialize)]
struct ImageQuery {
    which: Option<String>,
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        _ => "application/octet-stream",
    }
}

async fn get_image(
    State(st): State<SharedState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ImageQuery>,
) -> ApiResult<Response> {
    let path = {
        let queue = st.queue.read().expect("queue lock");
        let item = queue.get(&id).ok_or_else(|| Error::UnknownItem(id.clone()))?;
        match q.which.as_deref().unwrap_or("generated") {
            "generated" => item.generated_image_path.clone(),
            "source" => item.source_image_path.clone(),
            other => {
                return Err(ApiError(
                    StatusCode::BAD_REQUEST,
                    format!("`which` must be source or generated, not `{other}`"),
                ))
            }
        }
    };
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|e| ApiError(StatusCode::NOT_FOUND, format!("{}: {e}", path.display())))?;
    Ok(([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub item_id: String,
    pub prior_state: Option<ReviewState>,
    pub new_state: ReviewState,
    pub reviewer: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionResponse {
    pub item_id: String,
    pub state: ReviewState,
    /// False when the item was already in the requested state.
    pub applied: bool,
}

async fn post_decision(
    State(st): State<SharedState>,
    Json(req): Json<DecisionRequest>,
) -> ApiResult<Json<DecisionResponse>> {
    if req.reviewer.trim().is_empty() {
        return Err(ApiError(StatusCode::BAD_REQUEST, "reviewer is required".into()));
    }
    let mut queue = st.queue.write().expect("queue lock");
    let outcome = queue.record_decision(&req.item_id, req.new_state, &req.reviewer, req.prior_state)?;
    Ok(Json(DecisionResponse {
        state: queue.state(&req.item_id).unwrap_or(req.new_state),
        item_id: req.item_id,
        applied: matches!(outcome, DecisionOutcome::Applied(_)),
    }))
}

async fn progress(State(st): State<SharedState>) -> ApiResult<Json<stylebal::qc::ReviewSummary>> {
    let queue = st.queue.read().expect("queue lock");
    Ok(Json(review_summary(&queue, &st.dataset)?))
}
