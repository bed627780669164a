//! HTTP/1.1 JSON API over the store.

use std::collections::HashMap;
use std::future::Future;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::Serialize;
use tokio::net::TcpListener;

use crate::record::IngestRecord;
use crate::store::{Store, StoreError, TimeRange};

/// Largest accepted request body. A 1×7 record is a few hundred bytes.
pub const MAX_BODY_BYTES: usize = 16 * 1024;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    /// Required bearer token; `None` disables authentication.
    pub token: Option<Arc<str>>,
}

impl AppState {
    pub fn new(store: Arc<Store>, token: Option<String>) -> Self {
        Self {
            store,
            token: token.map(Arc::from),
        }
    }
}

/// JSON error body `{error, field?}` with its status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub error: String,
    pub field: Option<String>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        Self {
            status,
            error: error.into(),
            field: None,
        }
    }

    fn field(status: StatusCode, error: impl Into<String>, field: &str) -> Self {
        Self {
            status,
            error: error.into(),
            field: Some(field.to_owned()).filter(|f| !f.is_empty()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: &self.error,
            field: self.field.as_deref(),
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Validation(v) => {
                ApiError::field(StatusCode::BAD_REQUEST, v.message, &v.field)
            }
            StoreError::Cohort(c) => ApiError::new(StatusCode::BAD_REQUEST, c.to_string()),
            other => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, other.to_string()),
        }
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn authorize(state: &AppState, headers: &HeaderMap) -> Result<(), ApiError> {
    let Some(expected) = &state.token else {
        return Ok(());
    };
    let presented = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    match presented {
        Some(t) if constant_time_eq(t.as_bytes(), expected.as_bytes()) => Ok(()),
        _ => Err(ApiError::new(
            StatusCode::UNAUTHORIZED,
            "missing or invalid bearer token",
        )),
    }
}

#[derive(Serialize)]
struct IngestResponse {
    record_id: String,
}

async fn ingest(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Body,
) -> Result<Response, ApiError> {
    authorize(&state, &headers)?;
    let bytes = to_bytes(body, MAX_BODY_BYTES).await.map_err(|_| {
        ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("body exceeds {MAX_BODY_BYTES} bytes"),
        )
    })?;
    let record = IngestRecord::from_json(&bytes)
        .map_err(|v| ApiError::field(StatusCode::BAD_REQUEST, v.message, &v.field))?;
    let store = Arc::clone(&state.store);
    let ack = tokio::task::spawn_blocking(move || store.ingest(&record))
        .await
        .map_err(|e| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, e.to_string()))??;
    let status = if ack.created {
        StatusCode::CREATED
    } else {
        StatusCode::OK
    };
    Ok((
        status,
        Json(IngestResponse {
            record_id: ack.record_id,
        }),
    )
        .into_response())
}

fn query_time(
    query: &HashMap<String, String>,
    field: &str,
) -> Result<Option<DateTime<Utc>>, ApiError> {
    query
        .get(field)
        .filter(|v| !v.is_empty())
        .map(|v| {
            DateTime::parse_from_rfc3339(v)
                .map(|t| t.with_timezone(&Utc))
                .map_err(|e| {
                    ApiError::field(
                        StatusCode::BAD_REQUEST,
                        format!("not an ISO-8601 timestamp: {e}"),
                        field,
                    )
                })
        })
        .transpose()
}

async fn fetch(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(subject_id): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Json<Vec<IngestRecord>>, ApiError> {
    authorize(&state, &headers)?;
    let range = TimeRange {
        from: query_time(&query, "from")?,
        to: query_time(&query, "to")?,
    };
    Ok(Json(state.store.fetch(&subject_id, range)))
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    records: usize,
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok",
        records: state.store.len(),
    })
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "no such route")
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/features", post(ingest))
        .route("/v1/subjects/{id}/features", get(fetch))
        .route("/v1/health", get(health))
        .fallback(not_found)
        .with_state(state)
}

/// Serves until `shutdown` resolves. Every acknowledged record is already
/// synced, so shutdown has nothing left to flush.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
