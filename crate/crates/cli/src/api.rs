//! JSON API consumed by the inspector UI.
//!
//! Reads are pure projections of stored reports. `POST /api/diagnose` runs
//! the pipeline on a blocking thread, so reads keep being served while a run
//! is in progress; at most one run per input key is admitted.

use std::collections::HashSet;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

use cot_inspector_core::diagnostics::top_k;
use cot_inspector_core::model::StepIndex;
use cot_inspector_core::pipeline::{input_key, FailureKind};
use cot_inspector_core::store::{is_report_id, ReportStore, StoreError};
use cot_inspector_core::{DiagnoseOptions, DiagnosisReport, Pipeline};

const DEFAULT_TOP_K: usize = 5;

#[derive(Clone)]
pub struct AppState {
    store: Arc<ReportStore>,
    pipeline: Option<Arc<Pipeline>>,
    in_flight: Arc<Mutex<HashSet<String>>>,
}

impl AppState {
    /// Without a pipeline, `POST /api/diagnose` answers 503.
    pub fn new(store: ReportStore, pipeline: Option<Pipeline>) -> Self {
        AppState {
            store: Arc::new(store),
            pipeline: pipeline.map(Arc::new),
            in_flight: Arc::default(),
        }
    }
}

pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    let api = Router::new()
        .route("/healthz", get(healthz))
        .route("/api/reports", get(list_reports))
        .route("/api/reports/{id}", get(get_report))
        .route("/api/reports/{id}/lineage/{step}", get(lineage))
        .route("/api/reports/{id}/top", get(top))
        .route("/api/diagnose", post(diagnose))
        .with_state(state);
    let app = match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(cors)
}

pub async fn serve(addr: SocketAddr, state: AppState, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({"error": self.1}))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) | StoreError::InvalidId(_) => ApiError(StatusCode::NOT_FOUND, e.to_string()),
            _ => ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn load(state: &AppState, id: String) -> ApiResult<DiagnosisReport> {
    if !is_report_id(&id) {
        return Err(ApiError(StatusCode::NOT_FOUND, format!("report {id} not found")));
    }
    let store = Arc::clone(&state.store);
    blocking(move || Ok(store.get(&id)?)).await
}

async fn healthz() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

async fn list_reports(State(state): State<AppState>) -> ApiResult<Response> {
    let store = Arc::clone(&state.store);
    let entries = blocking(move || Ok(store.list()?)).await?;
    Ok(Json(entries).into_response())
}

/// The stored bytes, unchanged.
async fn get_report(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    if !is_report_id(&id) {
        return Err(ApiError(StatusCode::NOT_FOUND, format!("report {id} not found")));
    }
    let store = Arc::clone(&state.store);
    let raw = blocking(move || Ok(store.get_raw(&id)?)).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], raw).into_response())
}

async fn lineage(State(state): State<AppState>, Path((id, step)): Path<(String, String)>) -> ApiResult<Response> {
    let report = load(&state, id).await?;
    let unknown = || ApiError(StatusCode::NOT_FOUND, format!("step {step} not in report"));
    let node: StepIndex = step.parse().map_err(|_| unknown())?;
    let ancestors = report.graph.ancestors(node).map_err(|_| unknown())?;
    let descendants = report.graph.descendants(node).map_err(|_| unknown())?;
    Ok(Json(json!({"step": node, "ancestors": ancestors, "descendants": descendants})).into_response())
}

#[derive(Debug, Deserialize)]
struct TopQuery {
    measure: Option<String>,
    k: Option<usize>,
}

async fn top(
    State(state): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<TopQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<Response> {
    let Query(query) = query.map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.body_text()))?;
    let measure = query.measure.unwrap_or_else(|| "pagerank".to_string());
    let k = query.k.unwrap_or(DEFAULT_TOP_K);
    let report = load(&state, id).await?;
    let steps = match measure.as_str() {
        "pagerank" => top_k(&report.importance.pagerank, k),
        "r_depth" => top_k(&report.importance.r_depth, k),
        other => {
            return Err(ApiError(StatusCode::BAD_REQUEST, format!("unknown measure `{other}` (pagerank or r_depth)")));
        }
    };
    Ok(Json(json!({"measure": measure, "k": k, "steps": steps})).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiagnoseRequest {
    question: String,
    trace: String,
    #[serde(default)]
    options: DiagnoseOptions,
}

/// Removes the input key from the in-flight set however the run ends.
struct InFlight {
    set: Arc<Mutex<HashSet<String>>>,
    key: String,
}

impl Drop for InFlight {
    fn drop(&mut self) {
        self.set.lock().expect("in-flight lock").remove(&self.key);
    }
}

async fn diagnose(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let request: DiagnoseRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("malformed body: {e}")))?;
    if request.trace.trim().is_empty() {
        return Err(ApiError(StatusCode::BAD_REQUEST, "trace is empty".into()));
    }
    let pipeline = state
        .pipeline
        .clone()
        .ok_or_else(|| ApiError(StatusCode::SERVICE_UNAVAILABLE, "no pipeline configured".into()))?;
    let key = input_key(&request.question, &request.trace, &request.options);
    if !state.in_flight.lock().expect("in-flight lock").insert(key.clone()) {
        return Err(ApiError(StatusCode::CONFLICT, "an identical diagnose run is in progress".into()));
    }
    let guard = InFlight { set: Arc::clone(&state.in_flight), key };
    let store = Arc::clone(&state.store);
    let id = blocking(move || {
        let _guard = guard;
        let report = pipeline.diagnose(&request.question, &request.trace, &request.options).map_err(|err| {
            if let Err(e) = err.save_partial(store.dir()) {
                log::error!("could not save partial artifact: {e}");
            }
            let status = match err.kind {
                FailureKind::Backend => StatusCode::BAD_GATEWAY,
                FailureKind::Stage => StatusCode::UNPROCESSABLE_ENTITY,
            };
            ApiError(status, err.to_string())
        })?;
        Ok(store.put(&report)?)
    })
    .await?;
    Ok((StatusCode::ACCEPTED, Json(json!({"report_id": id}))).into_response())
}
