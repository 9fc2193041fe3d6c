//! HTTP/JSON routes.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

use catforge::pipeline::Stage;

use crate::app::{AnnotationEntry, AppState, ServiceError};
use crate::ops::BenchmarkRequest;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let message = e.to_string();
        match e {
            ServiceError::PipelineBusy(_) => ApiError::new(StatusCode::CONFLICT, "pipeline_busy", message),
            ServiceError::SessionNotFound(_) | ServiceError::BenchmarkNotFound(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "not_found", message)
            }
            ServiceError::Core(core) => match core {
                catforge::Error::AgentNotReady(_) => ApiError::new(StatusCode::CONFLICT, "agent_not_ready", message),
                catforge::Error::NotFound(_) | catforge::Error::UnknownTable(_) | catforge::Error::UnknownColumn(_) => {
                    ApiError::new(StatusCode::NOT_FOUND, "not_found", message)
                }
                e if e.is_validation() => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation_error", message),
                _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "runtime_error", message),
            },
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", e.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    let mut router = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/transcript", get(transcript))
        .route("/schema", get(schema))
        .route("/schema/annotations", get(annotations).put(put_annotations))
        .route("/pipeline/generate", post(generate))
        .route("/pipeline/train", post(train))
        .route("/pipeline/status", get(status))
        .route("/benchmark", post(start_benchmark))
        .route("/benchmark/{id}", get(benchmark));
    let ui = state
        .options()
        .ui_dir
        .clone()
        .unwrap_or_else(|| state.project().dir().join("ui"));
    if ui.is_dir() {
        router = router.nest_service("/ui", ServeDir::new(ui));
    }
    router.layer(TraceLayer::new_for_http()).with_state(state)
}

#[derive(Serialize)]
struct SessionCreated {
    session_id: String,
}

async fn create_session(State(app): State<Arc<AppState>>) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let session_id = app.create_session()?;
    Ok((StatusCode::CREATED, Json(SessionCreated { session_id })))
}

#[derive(Deserialize)]
struct Message {
    text: String,
}

async fn post_message(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<Message>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(msg) = body?;
    let response = tokio::task::spawn_blocking(move || app.message(&id, &msg.text))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "runtime_error", e.to_string()))??;
    Ok(Json(response).into_response())
}

async fn transcript(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(app.transcript(&id)?).into_response())
}

async fn schema(State(app): State<Arc<AppState>>) -> Response {
    Json(&*app.schema()).into_response()
}

async fn annotations(State(app): State<Arc<AppState>>) -> Json<Vec<AnnotationEntry>> {
    Json(app.annotations())
}

/// Accepts one entry or a list of entries.
#[derive(Deserialize)]
#[serde(untagged)]
enum AnnotationUpdate {
    One(AnnotationEntry),
    Many(Vec<AnnotationEntry>),
}

async fn put_annotations(
    State(app): State<Arc<AppState>>,
    body: Result<Json<AnnotationUpdate>, JsonRejection>,
) -> ApiResult<Json<Vec<AnnotationEntry>>> {
    let updates = match body?.0 {
        AnnotationUpdate::One(e) => vec![e],
        AnnotationUpdate::Many(v) => v,
    };
    let app2 = app.clone();
    let result = tokio::task::spawn_blocking(move || app2.set_annotations(&updates))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "runtime_error", e.to_string()))??;
    Ok(Json(result))
}

async fn start_stage(app: Arc<AppState>, stage: Stage) -> ApiResult<Response> {
    app.begin_stage(stage)?;
    let runner = app.clone();
    tokio::task::spawn_blocking(move || {
        if let Err(e) = runner.run_stage(stage) {
            tracing::warn!("pipeline stage {stage:?} failed: {e}");
        }
    });
    Ok((StatusCode::ACCEPTED, Json(app.status())).into_response())
}

async fn generate(State(app): State<Arc<AppState>>) -> ApiResult<Response> {
    start_stage(app, Stage::Generating).await
}

async fn train(State(app): State<Arc<AppState>>) -> ApiResult<Response> {
    start_stage(app, Stage::Training).await
}

async fn status(State(app): State<Arc<AppState>>) -> Response {
    Json(app.status()).into_response()
}

async fn start_benchmark(
    State(app): State<Arc<AppState>>,
    body: Result<Json<BenchmarkRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(req) = body?;
    let id = app.begin_benchmark();
    let runner = app.clone();
    let job = id.clone();
    tokio::task::spawn_blocking(move || runner.run_benchmark(&job, &req));
    Ok((StatusCode::ACCEPTED, Json(json!({"id": id, "status": "running"}))).into_response())
}

async fn benchmark(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let job = app.benchmark(&id)?;
    let mut body = serde_json::to_value(&job).expect("serializable");
    body["id"] = id.into();
    Ok(Json(body).into_response())
}

/// Serves until ctrl-c or SIGTERM.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            anyhow::anyhow!("port {} is already in use", addr.port())
        } else {
            anyhow::anyhow!("cannot bind {addr}: {e}")
        }
    })?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
