//! HTTP/JSON front end for the bilayer simulator. Long computations run as
//! jobs: create one, poll its status, then fetch the result.

mod jobs;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tokio::net::TcpListener;

use bilayer_core::api::{
    ApiError, ErrorKind, JobCreated, JobOutput, JobStatus, RunRequest, ScenarioList, SweepRequest,
    VerifyRequest,
};
use bilayer_core::config::{parse_config_str, serialize_config};
use bilayer_core::scenarios::Scenario;
use bilayer_core::simulation::{effective_parameters, EffectiveParameters, RawMaterial, ScenarioConfig};
use bilayer_core::Error;

pub use jobs::{Job, Registry};

#[derive(Clone, Default)]
pub struct AppState {
    pub jobs: Arc<Registry>,
}

/// JSON error body with a status code derived from its kind.
pub struct HttpError(pub ApiError);

impl From<ApiError> for HttpError {
    fn from(e: ApiError) -> Self {
        HttpError(e)
    }
}

impl From<Error> for HttpError {
    fn from(e: Error) -> Self {
        HttpError(ApiError::from(&e))
    }
}

impl IntoResponse for HttpError {
    fn into_response(self) -> Response {
        let status = match self.0.kind {
            ErrorKind::Config => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ErrorKind::Conflict | ErrorKind::Cancelled => StatusCode::CONFLICT,
            ErrorKind::Solver | ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(self.0)).into_response()
    }
}

type ApiResult<T> = Result<T, HttpError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/scenarios", get(list_scenarios))
        .route("/scenarios/{name}", get(get_scenario))
        .route("/scenarios/{name}/document", get(get_scenario_document))
        .route("/config/parse", post(parse_document))
        .route("/config/render", post(render_document))
        .route("/effective-parameters", post(effective))
        .route("/jobs", get(list_jobs))
        .route("/jobs/run", post(start_run))
        .route("/jobs/sweep-epsilon", post(start_sweep))
        .route("/jobs/verify", post(start_verify))
        .route("/jobs/{id}", get(job_status).delete(delete_job))
        .route("/jobs/{id}/result", get(job_result))
        .route("/jobs/{id}/diagnostics", get(job_diagnostics))
        .route("/jobs/{id}/cancel", post(cancel_job))
        .with_state(state)
}

/// Binds `addr` and serves until the task is dropped.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Starts a service on an ephemeral local port inside the current runtime.
pub async fn spawn_local() -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(("127.0.0.1", 0)).await?;
    let addr = listener.local_addr()?;
    let handle = tokio::spawn(serve(listener, AppState::default()));
    Ok((addr, handle))
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn list_scenarios() -> Json<ScenarioList> {
    Json(ScenarioList {
        scenarios: Scenario::ALL.iter().map(|s| s.as_str().to_string()).collect(),
    })
}

#[derive(Deserialize)]
struct ScenarioQuery {
    #[serde(default)]
    paper_scale: bool,
}

fn builtin(name: &str, q: &ScenarioQuery) -> ApiResult<ScenarioConfig> {
    let s: Scenario = name.parse()?;
    Ok(if q.paper_scale {
        s.paper_config()
    } else {
        s.config()
    })
}

async fn get_scenario(
    Path(name): Path<String>,
    Query(q): Query<ScenarioQuery>,
) -> ApiResult<Json<ScenarioConfig>> {
    Ok(Json(builtin(&name, &q)?))
}

async fn get_scenario_document(
    Path(name): Path<String>,
    Query(q): Query<ScenarioQuery>,
) -> ApiResult<Response> {
    Ok(text(serialize_config(&builtin(&name, &q)?)))
}

fn text(body: String) -> Response {
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], body).into_response()
}

async fn parse_document(body: String) -> ApiResult<Json<ScenarioConfig>> {
    parse_config_str(&body)
        .map(Json)
        .map_err(|errors| HttpError::from(Error::Config(errors)))
}

async fn render_document(Json(config): Json<ScenarioConfig>) -> ApiResult<Response> {
    config.validate()?;
    Ok(text(serialize_config(&config)))
}

async fn effective(Json(raw): Json<RawMaterial>) -> ApiResult<Json<EffectiveParameters>> {
    Ok(Json(effective_parameters(&raw)?))
}

async fn list_jobs(State(state): State<AppState>) -> Json<Vec<JobStatus>> {
    Json(state.jobs.list())
}

fn created(job: &Job, warnings: Vec<String>) -> (StatusCode, Json<JobCreated>) {
    (
        StatusCode::ACCEPTED,
        Json(JobCreated {
            id: job.id,
            kind: job.kind,
            warnings,
        }),
    )
}

fn warnings(config: &ScenarioConfig) -> Vec<String> {
    config.tau_epsilon_warning().into_iter().collect()
}

async fn start_run(
    State(state): State<AppState>,
    Json(req): Json<RunRequest>,
) -> ApiResult<impl IntoResponse> {
    let config = req.spec.resolve()?;
    let w = warnings(&config);
    let job = state.jobs.start_run(config, req.out_dir, req.heat_only);
    log::info!("job {} started: run", job.id);
    Ok(created(&job, w))
}

async fn start_sweep(
    State(state): State<AppState>,
    Json(req): Json<SweepRequest>,
) -> ApiResult<impl IntoResponse> {
    let config = req.spec.resolve()?;
    if req.options.j_min > req.options.j_max {
        return Err(ApiError::new(
            ErrorKind::Config,
            format!("empty j range {}..{}", req.options.j_min, req.options.j_max),
        )
        .into());
    }
    let job = state.jobs.start_sweep(config, req.options);
    log::info!("job {} started: sweep", job.id);
    Ok(created(&job, Vec::new()))
}

async fn start_verify(State(state): State<AppState>, Json(req): Json<VerifyRequest>) -> impl IntoResponse {
    let job = state.jobs.start_verify(req);
    log::info!("job {} started: verify", job.id);
    created(&job, Vec::new())
}

fn find(state: &AppState, id: u64) -> ApiResult<Arc<Job>> {
    state.jobs.get(id).ok_or_else(|| jobs::not_found(id).into())
}

async fn job_status(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<Json<JobStatus>> {
    Ok(Json(find(&state, id)?.status()))
}

async fn job_result(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<Json<JobOutput>> {
    Ok(Json(find(&state, id)?.output()?))
}

async fn job_diagnostics(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<Response> {
    let csv = find(&state, id)?.diagnostics()?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], csv).into_response())
}

async fn cancel_job(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<Json<JobStatus>> {
    let job = find(&state, id)?;
    job.cancel();
    Ok(Json(job.status()))
}

async fn delete_job(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<StatusCode> {
    state.jobs.remove(id)?;
    Ok(StatusCode::NO_CONTENT)
}
