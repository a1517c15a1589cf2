//! The job API.

use std::sync::Arc;

use adsplice_core::meta::write_metadata;
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use crate::error::ApiError;
use crate::jobs::{Created, Job, JobEntry, JobRequest, JobStatus, JobStore};
use crate::specs::ServerSpecs;
use crate::worker;

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

#[derive(Clone)]
pub struct RestState {
    pub store: Arc<JobStore>,
    pub ws_url: String,
}

pub fn router(state: RestState) -> Router {
    Router::new()
        .route("/jobs", post(create_job).get(list_jobs))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/metadata", get(get_metadata))
        .route("/jobs/{id}/start-stream", post(start_stream))
        .route("/server/info", get(server_info))
        .with_state(state)
}

fn lookup(store: &JobStore, id: &str) -> Result<Arc<JobEntry>, ApiError> {
    store.get(id).ok_or_else(|| ApiError::unknown_job(id))
}

async fn create_job(State(s): State<RestState>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let mut request = JobRequest::parse(&body)?;
    if let Some(v) = headers.get(IDEMPOTENCY_HEADER) {
        let key = v
            .to_str()
            .map_err(|_| ApiError::schema("Idempotency-Key must be visible ASCII"))?
            .to_owned();
        match &request.idempotency_key {
            Some(k) if *k != key => return Err(ApiError::schema("Idempotency-Key header and body disagree")),
            _ => request.idempotency_key = Some(key),
        }
    }
    if let Some(id) = request.idempotency_key.as_deref().and_then(|k| s.store.job_for_key(k)) {
        return Err(ApiError::duplicate(id));
    }
    let store = s.store.clone();
    let resolved = tokio::task::spawn_blocking(move || {
        let sources = request.resolve(store.data_root())?;
        let created = store.create(request).map_err(|e| ApiError::internal(e.to_string()))?;
        Ok::<_, ApiError>((created, sources))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    match resolved {
        (Created::Duplicate(id), _) => Err(ApiError::duplicate(id)),
        (Created::New(entry), sources) => {
            let view = entry.view();
            worker::spawn(entry, sources);
            Ok((StatusCode::CREATED, Json(view)).into_response())
        }
    }
}

async fn list_jobs(State(s): State<RestState>) -> Json<Vec<Job>> {
    Json(s.store.all().iter().map(|e| e.view()).collect())
}

async fn get_job(State(s): State<RestState>, Path(id): Path<String>) -> Result<Json<Job>, ApiError> {
    Ok(Json(lookup(&s.store, &id)?.view()))
}

async fn get_metadata(State(s): State<RestState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let entry = lookup(&s.store, &id)?;
    let status = entry.status();
    if !status.has_output() {
        return Err(ApiError::not_ready(format!("job {id} is {status:?}")));
    }
    let body = write_metadata(&entry.metadata());
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

async fn start_stream(State(s): State<RestState>, Path(id): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let entry = lookup(&s.store, &id)?;
    let url = entry.update(|r| match r.job.status {
        JobStatus::Ready => {
            r.job.status = JobStatus::Streaming;
            Ok(r.job.ws_url.get_or_insert_with(|| s.ws_url.clone()).clone())
        }
        JobStatus::Streaming => Ok(r.job.ws_url.get_or_insert_with(|| s.ws_url.clone()).clone()),
        other => Err(ApiError::not_ready(format!("job {id} is {other:?}"))),
    })?;
    Ok(Json(json!({ "ws_url": url })))
}

async fn server_info(State(s): State<RestState>) -> Json<ServerSpecs> {
    Json(s.store.specs().clone())
}
