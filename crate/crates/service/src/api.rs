//! JSON API under `/v1`.
//!
//! Every read is served from one store snapshot, so a batch that is still
//! being written is invisible until it completes. Store writes and metric
//! computation are blocking work and run on the blocking pool.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;
use triage_core::exec::Execution;
use triage_core::metrics::BootstrapConfig;
use triage_core::store::{FeedbackAck, StoreError};
use triage_core::{
    ClinicianFeedback, CollapsePolicy, Decision, FeedbackCategory, MetricsReport, TriageStore,
    Window,
};

use crate::config::BootstrapDefaults;

/// Upper bound on `replicates` accepted from a query string.
pub const MAX_REPLICATES: usize = 100_000;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<TriageStore>,
    pub bootstrap: BootstrapDefaults,
    pub exec: Execution,
}

impl AppState {
    pub fn new(store: Arc<TriageStore>) -> Self {
        Self {
            store,
            bootstrap: BootstrapDefaults::default(),
            exec: Execution::default(),
        }
    }
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/v1/worklist", get(worklist))
        .route("/v1/feedback", post(feedback))
        .route("/v1/metrics", get(metrics))
        .route("/v1/cases/{id}", get(case))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case_id: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: error.into(),
                case_id: None,
            },
        }
    }

    fn bad_request(error: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, error)
    }

    fn unknown_case(case_id: String) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            body: ErrorBody {
                error: format!("unknown case_id `{case_id}`"),
                case_id: Some(case_id),
            },
        }
    }

    fn internal(error: impl std::fmt::Display) -> Self {
        tracing::error!("{error}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, error.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(err: StoreError) -> Self {
        match err {
            StoreError::UnknownCase(id) => Self::unknown_case(id),
            StoreError::InvalidFeedback(e) => Self::bad_request(e.to_string()),
            other => Self::internal(other),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(ApiError::internal)?
}

#[derive(Debug, Deserialize)]
pub struct WorklistQuery {
    pub date: Option<String>,
}

async fn worklist(
    State(state): State<AppState>,
    q: Result<Query<WorklistQuery>, QueryRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Query(q) = q.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let raw = q
        .date
        .ok_or_else(|| ApiError::bad_request("missing `date` (YYYY-MM-DD)"))?;
    let date = NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d")
        .map_err(|_| ApiError::bad_request(format!("invalid date `{raw}`")))?;
    Ok(Json(state.store.snapshot().worklist(date)))
}

/// Body of `POST /v1/feedback`. `recorded_at` defaults to the time of
/// receipt; `category` overrides the keyword coding of `reason`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub case_id: String,
    pub decision: Decision,
    pub reviewer_id: String,
    #[serde(default)]
    pub reason: Option<String>,
    #[serde(default)]
    pub recorded_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub category: Option<String>,
}

impl FeedbackRequest {
    pub fn into_feedback(self, now: DateTime<Utc>) -> Result<ClinicianFeedback, String> {
        let mut fb = ClinicianFeedback::new(
            self.case_id,
            self.decision,
            self.reviewer_id,
            self.recorded_at.unwrap_or(now),
        );
        if let Some(reason) = self.reason {
            fb = fb.with_reason(reason);
        }
        if let Some(c) = self.category.filter(|c| !c.trim().is_empty()) {
            let cat: FeedbackCategory = c
                .parse()
                .map_err(|_| format!("unknown feedback category `{c}`"))?;
            fb = fb.with_category(cat);
        }
        Ok(fb)
    }
}

async fn feedback(
    State(state): State<AppState>,
    body: Result<Json<FeedbackRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let fb = req
        .into_feedback(Utc::now())
        .map_err(ApiError::bad_request)?;
    let ack: FeedbackAck = blocking(move || Ok(state.store.record_feedback(fb)?)).await?;
    Ok((StatusCode::CREATED, Json(ack)))
}

#[derive(Debug, Default, Deserialize)]
pub struct MetricsQuery {
    pub window: Option<String>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    /// Count Maybe as a positive prediction (the default).
    pub maybe_positive: Option<bool>,
}

impl MetricsQuery {
    pub fn resolve(
        &self,
        defaults: BootstrapDefaults,
        exec: Execution,
    ) -> Result<(Window, BootstrapConfig), String> {
        let window: Window = self.window.as_deref().unwrap_or("all").parse()?;
        let replicates = self.replicates.unwrap_or(defaults.replicates);
        if !(1..=MAX_REPLICATES).contains(&replicates) {
            return Err(format!("replicates must be in 1..={MAX_REPLICATES}"));
        }
        Ok((
            window,
            BootstrapConfig {
                replicates,
                seed: self.seed.unwrap_or(defaults.seed),
                policy: CollapsePolicy {
                    maybe_positive: self.maybe_positive.unwrap_or(true),
                },
                exec,
            },
        ))
    }
}

async fn metrics(
    State(state): State<AppState>,
    q: Result<Query<MetricsQuery>, QueryRejection>,
) -> Result<Json<MetricsReport>, ApiError> {
    let Query(q) = q.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let (window, cfg) = q
        .resolve(state.bootstrap, state.exec)
        .map_err(ApiError::bad_request)?;
    let snapshot = state.store.snapshot();
    let report = blocking(move || Ok(snapshot.metrics_report(window, &cfg))).await?;
    Ok(Json(report))
}

async fn case(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    state
        .store
        .snapshot()
        .case(&id)
        .map(Json)
        .ok_or_else(|| ApiError::unknown_case(id))
}
