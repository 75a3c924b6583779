//! HTTP service over a run directory's review queue and metrics.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/cases?status=&offset=&limit=` | case summaries in enqueue order |
//! | GET | `/cases/{id}` | one case with raw backend responses and audit trail |
//! | POST | `/cases/{id}/decision` | `{"decision", "reviewer", "reason"?}` |
//! | POST | `/cases/{id}/reprocess` | optional `{"reviewer"}` |
//! | GET | `/metrics` | metrics rows of the run |
//! | GET | `/schema/reject-reasons` | selectable rejection reasons |
//!
//! Every body is JSON with a `schema_version` field; errors are
//! `{"code", "message"}`. There is no authentication; the server binds to
//! loopback unless told otherwise.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::entity_model::{CaseId, RejectReason, ResolutionLabel};
use crate::legal_form::LegalFormVerdict;
use crate::pipeline::{
    AuditEntry, CaseStatus, PipelineError, QueueEntry, ReviewDesk, ReviewError, METRICS_FILE, SCHEMA_VERSION,
};

pub const DEFAULT_LIMIT: usize = 100;
pub const MAX_LIMIT: usize = 1000;
/// Reviewer recorded when a reprocess request names none.
pub const ANONYMOUS_REVIEWER: &str = "anonymous";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub schema_version: u32,
    pub case_id: CaseId,
    pub declared_name: String,
    pub official_name: Option<String>,
    pub previous_names: Vec<String>,
    pub scores: BTreeMap<String, f64>,
    pub verdicts: BTreeMap<String, ResolutionLabel>,
    pub status: CaseStatus,
    pub enqueued_at: DateTime<Utc>,
    pub resolution: Option<ResolutionLabel>,
    pub reject_reasons: Vec<RejectReason>,
    pub assigned_code: Option<String>,
    pub legal_form: Option<LegalFormVerdict>,
    /// Detail view only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_responses: Option<BTreeMap<String, String>>,
    /// Detail view only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<Vec<AuditEntry>>,
}

impl CaseSummary {
    pub fn from_entry(e: &QueueEntry, detail: bool) -> Self {
        let c = &e.case;
        Self {
            schema_version: SCHEMA_VERSION,
            case_id: c.case_id.clone(),
            declared_name: c.record.company_name.clone(),
            official_name: c.reference.official_name.clone(),
            previous_names: c.reference.previous_names.clone(),
            scores: c.scores.clone(),
            verdicts: c.verdicts.clone(),
            status: e.status,
            enqueued_at: e.enqueued_at,
            resolution: c.resolution,
            reject_reasons: c.reject_reasons.clone(),
            assigned_code: c.assigned_code.clone(),
            legal_form: e.legal_form.clone(),
            raw_responses: detail.then(|| e.raw_responses.clone()),
            audit: detail.then(|| e.audit.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseList {
    pub schema_version: u32,
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub cases: Vec<CaseSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRequest {
    pub decision: ResolutionLabel,
    pub reviewer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<RejectReason>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReprocessRequest {
    pub reviewer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasonKind {
    pub kind: String,
    pub needs_text: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasonSchema {
    pub schema_version: u32,
    pub reasons: Vec<ReasonKind>,
}

pub fn reject_reason_schema() -> ReasonSchema {
    ReasonSchema {
        schema_version: SCHEMA_VERSION,
        reasons: RejectReason::KINDS
            .iter()
            .map(|k| ReasonKind {
                kind: k.to_string(),
                needs_text: *k == "Other",
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
            },
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let message = e.to_string();
        match e {
            ReviewError::NotFound(_) => Self::new(StatusCode::NOT_FOUND, "not_found", message),
            ReviewError::Conflict(_) => Self::new(StatusCode::CONFLICT, "conflict", message),
            ReviewError::Validation(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message),
            ReviewError::Storage(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

struct AppState {
    desk: Mutex<ReviewDesk>,
    run_dir: PathBuf,
}

type Shared = Arc<AppState>;

impl AppState {
    fn desk(&self) -> std::sync::MutexGuard<'_, ReviewDesk> {
        // a panic in another handler leaves the desk usable: state is on disk
        self.desk.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Builds the router over an opened desk.
pub fn router(desk: ReviewDesk, run_dir: impl Into<PathBuf>) -> Router {
    let state = Arc::new(AppState {
        desk: Mutex::new(desk),
        run_dir: run_dir.into(),
    });
    Router::new()
        .route("/cases", get(list_cases))
        .route("/cases/{id}", get(get_case))
        .route("/cases/{id}/decision", post(decide))
        .route("/cases/{id}/reprocess", post(reprocess))
        .route("/metrics", get(metrics))
        .route("/schema/reject-reasons", get(reasons))
        .with_state(state)
}

fn parse_param<T: std::str::FromStr>(params: &HashMap<String, String>, key: &str) -> Result<Option<T>, ApiError> {
    params
        .get(key)
        .map(|v| {
            v.parse()
                .map_err(|_| ApiError::bad_request(format!("invalid {key}: {v:?}")))
        })
        .transpose()
}

async fn list_cases(State(s): State<Shared>, Query(params): Query<HashMap<String, String>>) -> ApiResult<CaseList> {
    if let Some(k) = params.keys().find(|k| !matches!(k.as_str(), "status" | "offset" | "limit")) {
        return Err(ApiError::bad_request(format!("unknown query parameter {k:?}")));
    }
    let status = match params.get("status") {
        Some(v) => Some(v.parse::<CaseStatus>().map_err(ApiError::bad_request)?),
        None => None,
    };
    let offset = parse_param::<usize>(&params, "offset")?.unwrap_or(0);
    let limit = parse_param::<usize>(&params, "limit")?.unwrap_or(DEFAULT_LIMIT);
    if limit == 0 || limit > MAX_LIMIT {
        return Err(ApiError::bad_request(format!("limit must be between 1 and {MAX_LIMIT}")));
    }
    let mut desk = s.desk();
    let all = desk.queue()?.list(status);
    Ok(Json(CaseList {
        schema_version: SCHEMA_VERSION,
        total: all.len(),
        offset,
        limit,
        cases: all
            .into_iter()
            .skip(offset)
            .take(limit)
            .map(|e| CaseSummary::from_entry(e, false))
            .collect(),
    }))
}

async fn get_case(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<CaseSummary> {
    let id = CaseId(id);
    let mut desk = s.desk();
    let entry = desk.queue()?.get(&id).ok_or(ReviewError::NotFound(id))?;
    Ok(Json(CaseSummary::from_entry(entry, true)))
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

async fn decide(State(s): State<Shared>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<CaseSummary> {
    let req: DecisionRequest = parse_body(&body)?;
    let entry = s
        .desk()
        .apply_review_decision(&CaseId(id), req.decision, &req.reviewer, req.reason)?;
    Ok(Json(CaseSummary::from_entry(&entry, true)))
}

async fn reprocess(State(s): State<Shared>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<CaseSummary> {
    let reviewer = if body.iter().all(u8::is_ascii_whitespace) {
        ANONYMOUS_REVIEWER.to_string()
    } else {
        parse_body::<ReprocessRequest>(&body)?.reviewer
    };
    let entry = s.desk().reprocess_case(&CaseId(id), &reviewer)?;
    Ok(Json(CaseSummary::from_entry(&entry, true)))
}

async fn metrics(State(s): State<Shared>) -> Result<Response, ApiError> {
    let path = s.run_dir.join(METRICS_FILE);
    match std::fs::read(&path) {
        Ok(bytes) => Ok(([(axum::http::header::CONTENT_TYPE, "application/json")], bytes).into_response()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "not_found",
            "no evaluated run in this directory",
        )),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string())),
    }
}

async fn reasons() -> Json<ReasonSchema> {
    Json(reject_reason_schema())
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Run(#[from] PipelineError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Serves `run_dir` until interrupted.
pub async fn serve(run_dir: &Path, addr: SocketAddr, desk: ReviewDesk) -> Result<(), ServeError> {
    let app = router(desk, run_dir);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
