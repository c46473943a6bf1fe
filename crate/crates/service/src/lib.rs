//! HTTP API for the mapping engine. All routes live under `/v1`, speak JSON,
//! and report failures as `{"code": ..., "message": ...}`.
//!
//! The engine is synchronous, so every handler that touches providers or
//! disk runs on the blocking pool. Matching requests additionally take a
//! permit from a semaphore sized to the engine's worker budget.

use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::Semaphore;
use tower_http::cors::CorsLayer;

use skumap_core::model::{MappingResult, MatchLabel};
use skumap_core::pipeline::{Engine, MappingMode, PipelineError, StatsSnapshot};
use skumap_core::provider::CallScope;
use skumap_core::review::{ReviewDecision, ReviewError, ReviewItem, ReviewStatus};
use skumap_core::traces::{HitSummary, TraceError, DEFAULT_K};

/// Machine-readable error codes. The set is closed: clients may match on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    BadMode,
    BadStatus,
    BadDecision,
    MissingLabel,
    EmptyQuery,
    BadK,
    NotFound,
    AlreadyDecided,
    ProviderUnavailable,
    ProviderError,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 12] = [
        ErrorCode::BadRequest,
        ErrorCode::BadMode,
        ErrorCode::BadStatus,
        ErrorCode::BadDecision,
        ErrorCode::MissingLabel,
        ErrorCode::EmptyQuery,
        ErrorCode::BadK,
        ErrorCode::NotFound,
        ErrorCode::AlreadyDecided,
        ErrorCode::ProviderUnavailable,
        ErrorCode::ProviderError,
        ErrorCode::Internal,
    ];

    pub fn http_status(self) -> StatusCode {
        match self {
            ErrorCode::BadRequest
            | ErrorCode::BadMode
            | ErrorCode::BadStatus
            | ErrorCode::BadDecision
            | ErrorCode::MissingLabel
            | ErrorCode::EmptyQuery
            | ErrorCode::BadK => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::AlreadyDecided => StatusCode::CONFLICT,
            ErrorCode::ProviderUnavailable | ErrorCode::ProviderError => StatusCode::BAD_GATEWAY,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn http_status(&self) -> StatusCode {
        self.code.http_status()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.code == ErrorCode::Internal {
            tracing::error!(message = %self.message, "internal error");
        }
        (self.http_status(), Json(self)).into_response()
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let code = match &e {
            ReviewError::NotFound(_) => ErrorCode::NotFound,
            ReviewError::AlreadyDecided(_) => ErrorCode::AlreadyDecided,
            ReviewError::MissingLabel => ErrorCode::MissingLabel,
            ReviewError::Persistence(_) | ReviewError::Rejected(_) => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<TraceError> for ApiError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::ZeroK => ApiError::new(ErrorCode::BadK, "k must be at least 1"),
            TraceError::Provider(p) if p.is_unavailable() => {
                ApiError::new(ErrorCode::ProviderUnavailable, p.to_string())
            }
            TraceError::Provider(p) => ApiError::new(ErrorCode::ProviderError, p.to_string()),
            other => ApiError::new(ErrorCode::Internal, other.to_string()),
        }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        if e.is_provider_unavailable() {
            return ApiError::new(ErrorCode::ProviderUnavailable, e.to_string());
        }
        match e {
            PipelineError::Review(r) => r.into(),
            PipelineError::Trace(t) => t.into(),
            PipelineError::Agent(a) => ApiError::new(ErrorCode::ProviderError, a.to_string()),
            PipelineError::Rule(r) => ApiError::new(ErrorCode::BadRequest, r.to_string()),
            PipelineError::MissingExemplars => ApiError::new(ErrorCode::BadMode, e.to_string()),
            other => ApiError::new(ErrorCode::Internal, other.to_string()),
        }
    }
}

#[derive(Clone)]
struct AppState {
    engine: Arc<Engine>,
    match_permits: Arc<Semaphore>,
}

/// Run blocking engine work off the async runtime.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, format!("worker failed: {e}")))?
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(ErrorCode::BadRequest, format!("invalid body: {e}")))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatchBody {
    base: String,
    compared: String,
    #[serde(default)]
    mode: Option<String>,
}

async fn post_match(State(st): State<AppState>, body: Bytes) -> Result<Json<MappingResult>, ApiError> {
    let req: MatchBody = parse_body(&body)?;
    let mode: MappingMode = match req.mode.as_deref() {
        None => MappingMode::Q2k,
        Some(m) => m
            .parse()
            .map_err(|_| ApiError::new(ErrorCode::BadMode, format!("unknown mode {m:?}")))?,
    };
    let pair = st
        .engine
        .new_pair(&req.base, &req.compared)
        .map_err(|e| ApiError::new(ErrorCode::BadRequest, e.to_string()))?;
    let _permit = st
        .match_permits
        .clone()
        .acquire_owned()
        .await
        .map_err(|_| ApiError::new(ErrorCode::Internal, "service is shutting down"))?;
    let engine = st.engine.clone();
    let out = blocking(move || engine.map_pair(&pair, mode).map_err(ApiError::from)).await?;
    Ok(Json(out.result))
}

#[derive(Debug, Deserialize)]
struct QueueQuery {
    status: Option<String>,
}

async fn get_queue(
    State(st): State<AppState>,
    Query(q): Query<QueueQuery>,
) -> Result<Json<Vec<ReviewItem>>, ApiError> {
    let status = q
        .status
        .map(|s| s.parse::<ReviewStatus>())
        .transpose()
        .map_err(|e| ApiError::new(ErrorCode::BadStatus, e))?;
    Ok(Json(st.engine.queue().list(status)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionBody {
    decision: String,
    #[serde(default)]
    corrected_label: Option<MatchLabel>,
    #[serde(default)]
    note: Option<String>,
}

impl DecisionBody {
    fn into_decision(self) -> Result<ReviewDecision, ApiError> {
        match self.decision.as_str() {
            "approve" => Ok(ReviewDecision::Approve { note: self.note }),
            "override" => match self.corrected_label {
                Some(corrected_label) => Ok(ReviewDecision::Override {
                    corrected_label,
                    note: self.note,
                }),
                None => Err(ReviewError::MissingLabel.into()),
            },
            other => Err(ApiError::new(
                ErrorCode::BadDecision,
                format!("decision must be approve or override, got {other:?}"),
            )),
        }
    }
}

async fn post_review(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<ReviewItem>, ApiError> {
    let id: u64 = id
        .parse()
        .map_err(|_| ApiError::new(ErrorCode::NotFound, format!("review item {id:?} not found")))?;
    let decision = parse_body::<DecisionBody>(&body)?.into_decision()?;
    let engine = st.engine.clone();
    let item = blocking(move || engine.apply_review(id, decision).map_err(ApiError::from)).await?;
    Ok(Json(item))
}

#[derive(Debug, Deserialize)]
struct SearchQuery {
    q: Option<String>,
    k: Option<String>,
}

async fn get_traces(
    State(st): State<AppState>,
    Query(q): Query<SearchQuery>,
) -> Result<Json<Vec<HitSummary>>, ApiError> {
    let text = q.q.unwrap_or_default();
    if text.trim().is_empty() {
        return Err(ApiError::new(ErrorCode::EmptyQuery, "q must not be empty"));
    }
    let k = match q.k {
        None => DEFAULT_K,
        Some(k) => k
            .parse::<usize>()
            .map_err(|_| ApiError::new(ErrorCode::BadK, format!("k must be a positive integer, got {k:?}")))?,
    };
    if k == 0 {
        return Err(ApiError::new(ErrorCode::BadK, "k must be at least 1"));
    }
    let engine = st.engine.clone();
    let hits = blocking(move || {
        let hits = engine
            .store()
            .retrieve_topk(engine.providers(), &CallScope::detached(), &text, k)?;
        Ok(hits.iter().enumerate().map(|(i, h)| h.summary(i + 1)).collect())
    })
    .await?;
    Ok(Json(hits))
}

async fn get_stats(State(st): State<AppState>) -> Json<StatsSnapshot> {
    Json(st.engine.stats())
}

async fn fallback() -> ApiError {
    ApiError::new(ErrorCode::NotFound, "no such route")
}

/// The `/v1` router. `workers` bounds concurrent matching requests.
pub fn router(engine: Arc<Engine>, workers: usize) -> Router {
    let state = AppState {
        engine,
        match_permits: Arc::new(Semaphore::new(workers.max(1))),
    };
    Router::new()
        .route("/v1/match", post(post_match))
        .route("/v1/review/queue", get(get_queue))
        .route("/v1/review/{id}", post(post_review))
        .route("/v1/traces/search", get(get_traces))
        .route("/v1/stats", get(get_stats))
        .fallback(fallback)
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serve until `shutdown` resolves, then finish in-flight requests.
pub async fn serve<S>(listener: TcpListener, engine: Arc<Engine>, workers: usize, shutdown: S) -> std::io::Result<()>
where
    S: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(engine, workers))
        .with_graceful_shutdown(shutdown)
        .await
}
