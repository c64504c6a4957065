//! JSON API over a [`SessionStore`].
//!
//! | method | path | body |
//! |---|---|---|
//! | POST | `/sessions` | `{"levels": [..], "reward": r, "seed"?: n}` |
//! | GET | `/sessions/{id}` | |
//! | POST | `/sessions/{id}/reports` | `{"level": a, "value": q}` |
//! | POST | `/sessions/{id}/reveal` | |
//! | POST | `/sessions/{id}/settle` | `{"theta": t, "entered_by"?: name}` |
//! | GET | `/sessions/{id}/fitted-cdf` | |
//!
//! Errors come back as `{"error": code, "message": text}`.

use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use elicit_core::session::{CrossingWarning, Entropy, SessionError, SessionStore, SessionView};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use uuid::Uuid;

#[derive(Clone)]
pub struct AppState {
    store: Arc<SessionStore>,
    facilitator_token: Option<Arc<str>>,
}

impl AppState {
    pub fn new(store: Arc<SessionStore>) -> Self {
        Self { store, facilitator_token: None }
    }

    /// Requires `Authorization: Bearer <token>` on settlement.
    pub fn with_facilitator_token(mut self, token: impl Into<Arc<str>>) -> Self {
        self.facilitator_token = Some(token.into());
        self
    }

    pub fn store(&self) -> &Arc<SessionStore> {
        &self.store
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateRequest {
    pub levels: Vec<f64>,
    pub reward: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
pub struct ReportRequest {
    pub level: f64,
    pub value: f64,
}

#[derive(Debug, Deserialize)]
pub struct SettleRequest {
    pub theta: f64,
    #[serde(default)]
    pub entered_by: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportResponse {
    pub session: SessionView,
    /// Every crossing among the current reports.
    pub warnings: Vec<CrossingWarning>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FittedCdf {
    pub knots: Vec<(f64, f64)>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug)]
pub enum ApiError {
    Session(SessionError),
    BadRequest(String),
    Unauthorized,
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError::Session(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::BadRequest(e.body_text())
    }
}

impl ApiError {
    fn status_and_code(&self) -> (StatusCode, &'static str) {
        match self {
            ApiError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ApiError::Unauthorized => (StatusCode::UNAUTHORIZED, "unauthorized"),
            ApiError::Session(e) => match e {
                SessionError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
                SessionError::WrongState { .. } => (StatusCode::CONFLICT, "wrong_state"),
                SessionError::MissingReports(_) => (StatusCode::CONFLICT, "missing_reports"),
                SessionError::CommitmentMismatch => (StatusCode::CONFLICT, "commitment_mismatch"),
                SessionError::InvalidLevels(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_levels"),
                SessionError::InvalidReward(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_reward"),
                SessionError::UnknownLevel(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_level"),
                SessionError::OutOfRange { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "out_of_range"),
                SessionError::CrossingReports(_) => (StatusCode::UNPROCESSABLE_ENTITY, "crossing_reports"),
                SessionError::Replay(_) | SessionError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = self.status_and_code();
        let message = match &self {
            ApiError::Session(e) => e.to_string(),
            ApiError::BadRequest(m) => m.clone(),
            ApiError::Unauthorized => "a valid facilitator token is required".into(),
        };
        (status, Json(ErrorBody { error: code.into(), message })).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn session_id(raw: &str) -> ApiResult<Uuid> {
    Uuid::parse_str(raw).map_err(|_| ApiError::BadRequest(format!("{raw:?} is not a session id")))
}

async fn create(
    State(app): State<AppState>,
    body: Result<Json<CreateRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let Json(req) = body?;
    let entropy = req.seed.map_or(Entropy::Os, Entropy::Seed);
    let view = app.store.create(&req.levels, req.reward, entropy)?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn fetch(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    Ok(Json(app.store.get(session_id(&id)?)?))
}

async fn report(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ReportRequest>, JsonRejection>,
) -> ApiResult<Json<ReportResponse>> {
    let id = session_id(&id)?;
    let Json(req) = body?;
    let (session, warnings) = app.store.submit_report(id, req.level, req.value)?;
    Ok(Json(ReportResponse { session, warnings }))
}

async fn reveal(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    Ok(Json(app.store.reveal(session_id(&id)?)?))
}

fn authorized(app: &AppState, headers: &HeaderMap) -> bool {
    let Some(expected) = &app.facilitator_token else {
        return true;
    };
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| t == &**expected)
}

async fn settle(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<SettleRequest>, JsonRejection>,
) -> ApiResult<Json<SessionView>> {
    if !authorized(&app, &headers) {
        return Err(ApiError::Unauthorized);
    }
    let id = session_id(&id)?;
    let Json(req) = body?;
    let entered_by = req.entered_by.as_deref().unwrap_or("facilitator");
    Ok(Json(app.store.settle(id, req.theta, entered_by)?))
}

async fn fitted_cdf(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<FittedCdf>> {
    let fit = app.store.fitted_cdf(session_id(&id)?)?;
    Ok(Json(FittedCdf { knots: fit.knots().to_vec() }))
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(fetch))
        .route("/sessions/{id}/reports", post(report))
        .route("/sessions/{id}/reveal", post(reveal))
        .route("/sessions/{id}/settle", post(settle))
        .route("/sessions/{id}/fitted-cdf", get(fitted_cdf))
        .with_state(app)
}

/// Serves until `shutdown` resolves, then flushes the event log.
pub async fn serve<S>(listener: TcpListener, app: AppState, shutdown: S) -> std::io::Result<()>
where
    S: Future<Output = ()> + Send + 'static,
{
    let store = app.store.clone();
    axum::serve(listener, router(app)).with_graceful_shutdown(shutdown).await?;
    store.flush().map_err(|e| std::io::Error::other(e.to_string()))
}
