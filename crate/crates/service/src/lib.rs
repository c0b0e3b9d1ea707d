//! HTTP job service: submit generation jobs, poll them, download artifacts.
//!
//! | Method | Path                 | Result                                  |
//! |--------|----------------------|-----------------------------------------|
//! | POST   | `/jobs`              | 202 `{job_id}`; 400 with field; 429     |
//! | GET    | `/jobs/{id}`         | status record                           |
//! | GET    | `/jobs/{id}/grid`    | grid JSON (409 until done)              |
//! | GET    | `/jobs/{id}/geojson` | GeoJSON FeatureCollection               |
//! | GET    | `/jobs/{id}/analysis`| power flow, short circuit and metrics   |
//! | GET    | `/healthz`           | liveness                                |

pub mod store;
pub mod worker;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use sha2::{Digest, Sha256};
use std::path::PathBuf;
use std::sync::Arc;
use store::{JobState, JobStore};
use syngrid_core::pipeline::GenerationParams;
use tokio::sync::mpsc;
use tower_http::cors::CorsLayer;
use worker::MapSource;

pub const ENV_BIND: &str = "SYNGRID_BIND";
pub const ENV_JOB_DIR: &str = "SYNGRID_JOB_DIR";
pub const ENV_OVERPASS_URL: &str = "SYNGRID_OVERPASS_URL";
pub const ENV_WORKERS: &str = "SYNGRID_WORKERS";
pub const ENV_QUEUE: &str = "SYNGRID_QUEUE";

#[derive(Debug, Clone)]
pub struct Config {
    pub bind: String,
    pub job_dir: PathBuf,
    pub overpass_url: String,
    pub cache_dir: Option<PathBuf>,
    pub workers: usize,
    /// Jobs waiting beyond this are rejected with 429.
    pub queue_capacity: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            bind: "127.0.0.1:8080".into(),
            job_dir: PathBuf::from("jobs"),
            overpass_url: syngrid_core::geodata::overpass::DEFAULT_ENDPOINT.into(),
            cache_dir: None,
            workers: 2,
            queue_capacity: 16,
        }
    }
}

impl Config {
    pub fn from_env() -> Result<Config, String> {
        let mut c = Config::default();
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        if let Some(v) = var(ENV_BIND) {
            c.bind = v;
        }
        if let Some(v) = var(ENV_JOB_DIR) {
            c.job_dir = v.into();
        }
        if let Some(v) = var(ENV_OVERPASS_URL) {
            c.overpass_url = v;
        }
        if let Some(v) = var(syngrid_core::geodata::overpass::CACHE_DIR_ENV) {
            c.cache_dir = Some(v.into());
        }
        if let Some(v) = var(ENV_WORKERS) {
            c.workers = v.parse().map_err(|_| format!("{ENV_WORKERS}: not a count: {v}"))?;
        }
        if let Some(v) = var(ENV_QUEUE) {
            c.queue_capacity = v.parse().map_err(|_| format!("{ENV_QUEUE}: not a count: {v}"))?;
        }
        if c.queue_capacity == 0 {
            return Err(format!("{ENV_QUEUE} must be at least 1"));
        }
        Ok(c)
    }
}

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<JobStore>,
    queue: mpsc::Sender<String>,
    // keeps the channel open even with zero workers
    _pending: worker::JobQueue,
}

/// Open the store, reconcile it, start the workers and build the router.
pub fn start(config: &Config) -> Result<Router, store::StoreError> {
    let store = Arc::new(JobStore::open(&config.job_dir)?);
    let pending = store.reconcile()?;
    let (tx, rx) = mpsc::channel(config.queue_capacity);
    let maps = MapSource {
        overpass_url: config.overpass_url.clone(),
        cache_dir: config.cache_dir.clone(),
    };
    let pending_rx: worker::JobQueue = Arc::new(tokio::sync::Mutex::new(rx));
    worker::spawn_workers(config.workers, Arc::clone(&store), &pending_rx, maps);
    if !pending.is_empty() {
        log::info!("re-enqueueing {} queued job(s)", pending.len());
        let tx = tx.clone();
        tokio::spawn(async move {
            for id in pending {
                if tx.send(id).await.is_err() {
                    break;
                }
            }
        });
    }
    Ok(router(AppState {
        store,
        queue: tx,
        _pending: pending_rx,
    }))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/jobs", post(submit))
        .route("/jobs/{id}", get(job_status))
        .route("/jobs/{id}/grid", get(grid))
        .route("/jobs/{id}/geojson", get(geojson))
        .route("/jobs/{id}/analysis", get(analysis))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

fn problem(code: StatusCode, message: impl Into<String>, field: Option<String>) -> Response {
    let mut body = json!({ "error": message.into() });
    if let Some(f) = field {
        body["field"] = json!(f);
    }
    (code, Json(body)).into_response()
}

fn storage_failure(e: store::StoreError) -> Response {
    log::error!("{e}");
    problem(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None)
}

/// Split the optional inline map off the body and parse the rest as
/// parameters, reporting the path of the first offending field.
fn parse_submission(body: &[u8]) -> Result<(GenerationParams, Option<String>), Response> {
    let mut value: serde_json::Value =
        serde_json::from_slice(body).map_err(|e| problem(StatusCode::BAD_REQUEST, e.to_string(), None))?;
    let osm = match value.as_object_mut().and_then(|o| o.remove("osm_xml")) {
        None | Some(serde_json::Value::Null) => None,
        Some(serde_json::Value::String(s)) => Some(s),
        Some(_) => {
            return Err(problem(
                StatusCode::BAD_REQUEST,
                "osm_xml must be a string",
                Some("osm_xml".into()),
            ))
        }
    };
    let params: GenerationParams = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let field = (path != ".").then_some(path);
        problem(StatusCode::BAD_REQUEST, e.into_inner().to_string(), field)
    })?;
    if let Some(fe) = params.field_errors().into_iter().next() {
        return Err(problem(StatusCode::BAD_REQUEST, fe.to_string(), Some(fe.field)));
    }
    Ok((params, osm))
}

async fn submit(State(st): State<AppState>, body: Bytes) -> Response {
    let (params, osm) = match parse_submission(&body) {
        Ok(p) => p,
        Err(r) => return r,
    };
    let permit = match st.queue.try_reserve() {
        Ok(p) => p,
        Err(mpsc::error::TrySendError::Full(())) => {
            return problem(StatusCode::TOO_MANY_REQUESTS, "job queue is full", None)
        }
        Err(mpsc::error::TrySendError::Closed(())) => {
            return problem(StatusCode::SERVICE_UNAVAILABLE, "job queue is closed", None)
        }
    };
    let store = Arc::clone(&st.store);
    let created = tokio::task::spawn_blocking(move || store.create(&params, osm.as_deref())).await;
    match created {
        Ok(Ok(id)) => {
            permit.send(id.clone());
            (StatusCode::ACCEPTED, Json(json!({ "job_id": id }))).into_response()
        }
        Ok(Err(e)) => storage_failure(e),
        Err(e) => problem(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None),
    }
}

fn missing(id: &str, st: &AppState) -> Response {
    if st.store.dir(id).is_some_and(|d| !d.exists()) {
        log::warn!("job {id}: directory missing from the store");
    }
    problem(StatusCode::NOT_FOUND, format!("unknown job {id}"), None)
}

async fn job_status(State(st): State<AppState>, Path(id): Path<String>) -> Response {
    match st.store.status(&id) {
        Ok(Some(s)) => Json(s).into_response(),
        Ok(None) => missing(&id, &st),
        Err(e) => storage_failure(e),
    }
}

/// Serve a done job's artifact with an ETag derived from its content.
fn artifact(st: &AppState, id: &str, name: &str, media: &'static str) -> Response {
    let status = match st.store.status(id) {
        Ok(Some(s)) => s,
        Ok(None) => return missing(id, st),
        Err(e) => return storage_failure(e),
    };
    match status.status {
        JobState::Done => {}
        JobState::Failed => {
            let err = status.error.unwrap_or(store::JobError {
                stage: None,
                message: "job failed".into(),
            });
            let mut body = json!({ "error": err.message, "status": "failed" });
            if let Some(stage) = err.stage {
                body["stage"] = json!(stage);
            }
            return (StatusCode::CONFLICT, Json(body)).into_response();
        }
        other => {
            return problem(
                StatusCode::CONFLICT,
                format!("job is {}", serde_json::to_value(other).unwrap().as_str().unwrap()),
                None,
            )
        }
    }
    match st.store.read_artifact(id, name) {
        Ok(Some(bytes)) => {
            let tag: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
            let mut resp = bytes.into_response();
            let h = resp.headers_mut();
            h.insert(header::CONTENT_TYPE, HeaderValue::from_static(media));
            h.insert(header::ETAG, HeaderValue::from_str(&format!("\"{tag}\"")).unwrap());
            resp
        }
        Ok(None) => {
            log::warn!("job {id}: artifact {name} missing from the store");
            problem(StatusCode::NOT_FOUND, format!("artifact {name} missing for job {id}"), None)
        }
        Err(e) => storage_failure(e),
    }
}

async fn grid(State(st): State<AppState>, Path(id): Path<String>) -> Response {
    artifact(&st, &id, "grid.json", "application/json")
}

async fn geojson(State(st): State<AppState>, Path(id): Path<String>) -> Response {
    artifact(&st, &id, "grid.geojson", "application/geo+json")
}

async fn analysis(State(st): State<AppState>, Path(id): Path<String>) -> Response {
    artifact(&st, &id, "analysis.json", "application/json")
}
