//! HTTP API for browsing stored runs and launching solve, boxcount and fdim
//! jobs.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/api/health` | liveness |
//! | GET | `/api/runs` | run summaries, newest first |
//! | GET | `/api/runs/{id}` | manifest and results |
//! | GET | `/api/runs/{id}/trajectories` | windowed 2-D projection |
//! | GET | `/api/jobs` | all jobs |
//! | POST | `/api/jobs` | submit a job (202) |
//! | GET | `/api/jobs/{id}` | poll a job |
//! | DELETE | `/api/jobs/{id}` | cancel a job (409 once finished) |
//!
//! Errors are `{"error": "..."}` with status 400, 404, 409 or 500.

pub mod jobs;
pub mod projection;
pub mod schema;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chaoscope_core::boundary::Class;
use chaoscope_core::integrate::Status;
use chaoscope_core::store::{RunManifest, RunResults, RunSummary, Store, StoreError};
use chaoscope_core::workflow::JobRequest;
use serde::{Deserialize, Serialize};
use tower_http::cors::{Any, CorsLayer};

use crate::jobs::{CancelOutcome, JobTable, JobView};
use crate::projection::{decimate, segments, Window};

pub const DEFAULT_ADDR: &str = "127.0.0.1:8787";

#[derive(Debug, Clone)]
pub struct AppState {
    pub store: Store,
    pub jobs: Arc<JobTable>,
}

impl AppState {
    pub fn new(store: Store, workers: usize) -> AppState {
        AppState { jobs: Arc::new(JobTable::new(store.clone(), workers)), store }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("invalid CORS origin '{0}'")]
    Origin(String),
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

#[derive(Debug, Serialize, Deserialize, schemars::JsonSchema)]
pub struct ErrorBody {
    pub error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> ApiError {
        let status = match e {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Router with CORS for `origin`, or for any origin when `None`.
pub fn router(state: AppState, origin: Option<HeaderValue>) -> Router {
    let cors = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    let cors = match origin {
        Some(o) => cors.allow_origin(o),
        None => cors.allow_origin(Any),
    };
    Router::new()
        .route("/api/health", get(health))
        .route("/api/runs", get(list_runs))
        .route("/api/runs/{id}", get(get_run))
        .route("/api/runs/{id}/trajectories", get(get_trajectories))
        .route("/api/jobs", get(list_jobs).post(submit_job))
        .route("/api/jobs/{id}", get(get_job).delete(cancel_job))
        .layer(cors)
        .with_state(state)
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub addr: String,
    pub store: Store,
    pub workers: usize,
    pub cors_origin: Option<String>,
}

/// Binds and serves until Ctrl-C. `on_bound` receives the actual address.
pub async fn serve(cfg: ServeConfig, on_bound: impl FnOnce(SocketAddr)) -> Result<(), ServiceError> {
    let origin = cfg
        .cors_origin
        .map(|o| HeaderValue::from_str(&o).map_err(|_| ServiceError::Origin(o)))
        .transpose()?;
    let listener = tokio::net::TcpListener::bind(&cfg.addr)
        .await
        .map_err(|source| ServiceError::Bind { addr: cfg.addr.clone(), source })?;
    let local = listener.local_addr().map_err(ServiceError::Serve)?;
    on_bound(local);
    let app = router(AppState::new(cfg.store, cfg.workers), origin);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ServiceError::Serve)
}

#[derive(Debug, Serialize, Deserialize, schemars::JsonSchema)]
pub struct Health {
    pub status: String,
    pub version: String,
}

async fn health() -> Json<Health> {
    Json(Health { status: "ok".into(), version: env!("CARGO_PKG_VERSION").into() })
}

async fn list_runs(State(s): State<AppState>) -> ApiResult<Vec<RunSummary>> {
    Ok(Json(s.store.list_runs()?))
}

#[derive(Debug, Serialize, Deserialize, schemars::JsonSchema)]
pub struct RunDetail {
    pub manifest: RunManifest,
    pub results: RunResults,
}

async fn get_run(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<RunDetail> {
    let run = s.store.load_run(&id)?;
    let results = run.results()?;
    Ok(Json(RunDetail { manifest: run.manifest, results }))
}

#[derive(Debug, Default, Deserialize)]
pub struct ProjectionQuery {
    /// Two comma-separated variables; `t` is allowed.
    pub vars: Option<String>,
    /// `a_lo,a_hi,b_lo,b_hi` in the order of `vars`.
    pub window: Option<String>,
    pub decimate: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize, schemars::JsonSchema)]
pub struct Orbit {
    pub ic_index: usize,
    pub status: Status,
    pub class: Option<Class>,
    /// Stored samples inside the window, before decimation.
    pub n_in_window: usize,
    pub segments: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Serialize, Deserialize, schemars::JsonSchema)]
pub struct Projection {
    pub run_id: String,
    pub vars: [String; 2],
    pub window: Option<Window>,
    pub decimate: Option<usize>,
    pub orbits: Vec<Orbit>,
}

async fn get_trajectories(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ProjectionQuery>,
) -> ApiResult<Projection> {
    let store = s.store.clone();
    tokio::task::spawn_blocking(move || project(&store, &id, q))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map(Json)
}

fn project(store: &Store, id: &str, q: ProjectionQuery) -> Result<Projection, ApiError> {
    let run = store.load_run(id)?;
    let state_vars: Vec<String> = run.manifest.region.ranges.iter().map(|r| r.var.clone()).collect();
    let vars: Vec<String> = match &q.vars {
        Some(v) => v.split(',').map(|s| s.trim().to_string()).collect(),
        None if state_vars.len() >= 2 => state_vars[..2].to_vec(),
        None => vec!["t".into(), state_vars[0].clone()],
    };
    if vars.len() != 2 || vars[0] == vars[1] {
        return Err(bad_request(format!("vars must name two distinct variables, got {:?}", q.vars.unwrap_or_default())));
    }
    // column 0 is t, state variables follow
    let col = |v: &str| -> Result<usize, ApiError> {
        if v == "t" {
            return Ok(0);
        }
        state_vars.iter().position(|s| s == v).map(|i| i + 1).ok_or_else(|| bad_request(format!("unknown variable '{v}'")))
    };
    let (ca, cb) = (col(&vars[0])?, col(&vars[1])?);
    let window = q.window.as_deref().map(str::parse::<Window>).transpose().map_err(bad_request)?;
    if q.decimate == Some(0) {
        return Err(bad_request("decimate must be at least 1"));
    }

    let mut orbits = Vec::with_capacity(run.trajectory_count());
    for (n, entry) in run.manifest.trajectories.iter().enumerate() {
        let traj = run.trajectory(n)?;
        let pts: Vec<[f64; 2]> = traj
            .times
            .iter()
            .zip(&traj.states)
            .map(|(t, x)| {
                let get = |c: usize| if c == 0 { *t } else { x[c - 1] };
                [get(ca), get(cb)]
            })
            .collect();
        let segs = segments(&pts, window.as_ref());
        let n_in_window = segs.iter().map(Vec::len).sum();
        let segs = match q.decimate {
            Some(k) => decimate(segs, k),
            None => segs,
        };
        orbits.push(Orbit { ic_index: entry.ic_index, status: entry.status.clone(), class: entry.class.clone(), n_in_window, segments: segs });
    }
    Ok(Projection { run_id: run.manifest.run_id, vars: [vars[0].clone(), vars[1].clone()], window, decimate: q.decimate, orbits })
}

async fn list_jobs(State(s): State<AppState>) -> Json<Vec<JobView>> {
    Json(s.jobs.list())
}

async fn submit_job(State(s): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<JobView>), ApiError> {
    let request: JobRequest = serde_json::from_slice(&body).map_err(|e| bad_request(format!("invalid job payload: {e}")))?;
    match s.jobs.submit(request) {
        Ok(view) => Ok((StatusCode::ACCEPTED, Json(view))),
        Err(e) if e.is_validation() => Err(bad_request(e.to_string())),
        Err(e) => Err(ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
    }
}

fn unknown_job(id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("job {id} not found"))
}

async fn get_job(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<JobView> {
    s.jobs.get(&id).map(Json).ok_or_else(|| unknown_job(&id))
}

async fn cancel_job(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<JobView> {
    match s.jobs.cancel(&id) {
        CancelOutcome::NotFound => Err(unknown_job(&id)),
        CancelOutcome::Conflict(v) => {
            let state = serde_json::to_value(v.state).unwrap_or_default();
            Err(ApiError(StatusCode::CONFLICT, format!("job {id} is already {}", state.as_str().unwrap_or("finished"))))
        }
        CancelOutcome::Accepted(v) => Ok(Json(v)),
    }
}
