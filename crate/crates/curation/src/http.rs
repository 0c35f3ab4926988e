use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::service::{CurationService, ListQuery};
use crate::status::{Decision, Verdict};
use crate::CurationError;

/// Header carrying the annotator id. Takes precedence over the body field.
pub const ANNOTATOR_HEADER: &str = "x-annotator-id";

impl IntoResponse for CurationError {
    fn into_response(self) -> Response {
        let status = match &self {
            CurationError::UnknownRun(_) | CurationError::UnknownArtifact(_) => StatusCode::NOT_FOUND,
            CurationError::AmbiguousArtifact { .. } | CurationError::IncompleteCuration { .. } => StatusCode::CONFLICT,
            CurationError::BadRequest(_) => StatusCode::BAD_REQUEST,
            CurationError::Pipeline(_) | CurationError::Join(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({"error": self.code(), "message": self.to_string()}))).into_response()
    }
}

type Shared = Arc<CurationService>;

async fn blocking<T, F>(svc: Shared, f: F) -> Result<Json<T>, CurationError>
where
    T: Send + 'static,
    F: FnOnce(&CurationService) -> Result<T, CurationError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| CurationError::Join(e.to_string()))?
        .map(Json)
}

async fn list_runs(State(svc): State<Shared>) -> Result<Json<Vec<String>>, CurationError> {
    blocking(svc, |s| Ok(s.runs())).await
}

#[derive(Debug, Deserialize)]
struct RawListQuery {
    stage: Option<String>,
    status: Option<String>,
    page: Option<usize>,
    page_size: Option<usize>,
}

impl RawListQuery {
    fn parse(self) -> Result<ListQuery, CurationError> {
        let stage = match self.stage.as_deref().filter(|s| !s.is_empty()) {
            Some(s) => Some(
                convtest::generators::Stage::parse(s)
                    .ok_or_else(|| CurationError::BadRequest(format!("unknown stage {s}")))?,
            ),
            None => None,
        };
        let status = match self.status.as_deref().filter(|s| !s.is_empty()) {
            Some(s) => Some(
                crate::Status::parse(s).ok_or_else(|| CurationError::BadRequest(format!("unknown status {s}")))?,
            ),
            None => None,
        };
        Ok(ListQuery {
            stage,
            status,
            page: self.page.unwrap_or(0),
            page_size: self.page_size,
        })
    }
}

async fn list_artifacts(
    State(svc): State<Shared>,
    Path(run_id): Path<String>,
    Query(q): Query<RawListQuery>,
) -> Result<Response, CurationError> {
    let q = q.parse()?;
    Ok(blocking(svc, move |s| s.list_artifacts(&run_id, &q)).await.into_response())
}

#[derive(Debug, Default, Deserialize)]
struct RunFilter {
    run: Option<String>,
}

async fn get_artifact(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Query(f): Query<RunFilter>,
) -> Result<Response, CurationError> {
    Ok(blocking(svc, move |s| s.artifact(f.run.as_deref(), &id)).await.into_response())
}

#[derive(Debug, Deserialize)]
struct VerdictBody {
    #[serde(default)]
    annotator_id: Option<String>,
    decision: Decision,
    #[serde(default)]
    note: Option<String>,
}

async fn post_verdict(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Query(f): Query<RunFilter>,
    headers: HeaderMap,
    Json(body): Json<VerdictBody>,
) -> Result<Response, CurationError> {
    let annotator = headers
        .get(ANNOTATOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
        .or(body.annotator_id)
        .ok_or_else(|| CurationError::BadRequest(format!("missing {ANNOTATOR_HEADER} header or annotator_id")))?;
    let verdict = Verdict {
        artifact_id: id,
        annotator_id: annotator,
        decision: body.decision,
        note: body.note.filter(|n| !n.trim().is_empty()),
        timestamp: 0,
    };
    Ok(blocking(svc, move |s| s.submit_verdict(f.run.as_deref(), verdict)).await.into_response())
}

async fn get_stats(State(svc): State<Shared>, Path(run_id): Path<String>) -> Result<Response, CurationError> {
    Ok(blocking(svc, move |s| s.stats(&run_id)).await.into_response())
}

#[derive(Debug, Default, Deserialize)]
struct ExportQuery {
    #[serde(default)]
    force: bool,
}

async fn get_export(
    State(svc): State<Shared>,
    Path(run_id): Path<String>,
    Query(q): Query<ExportQuery>,
) -> Result<Response, CurationError> {
    Ok(blocking(svc, move |s| s.export(&run_id, q.force)).await.into_response())
}

/// Routes of the curation API. With `static_dir` set, other paths serve
/// files from it (the review UI bundle).
pub fn router(service: CurationService, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/runs", get(list_runs))
        .route("/api/runs/{id}/artifacts", get(list_artifacts))
        .route("/api/runs/{id}/stats", get(get_stats))
        .route("/api/runs/{id}/export", get(get_export))
        .route("/api/artifacts/{id}", get(get_artifact))
        .route("/api/artifacts/{id}/verdicts", post(post_verdict))
        .with_state(Arc::new(service));
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves the API on `addr` until the process is stopped.
pub async fn serve(addr: SocketAddr, service: CurationService, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "curation service listening");
    axum::serve(listener, router(service, static_dir)).await
}
