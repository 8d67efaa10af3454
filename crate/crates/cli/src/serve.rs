//! HTTP review service over a queue file and an append-only decision log.

use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use axum::body::Body;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rationale_bench::review::{AddedBox, DecisionStatus, ReviewDecision, ReviewService};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

pub const IMAGE_ROOT_ENV: &str = "RB_IMAGE_ROOT";

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<ReviewService>,
    pub image_root: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub host: String,
    pub port: u16,
    pub queue: PathBuf,
    pub decisions: PathBuf,
    pub image_root: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
}

/// Body of `POST /api/items/{id}/decision`. The id comes from the path; an id in
/// the body must agree with it.
#[derive(Debug, Deserialize)]
struct DecisionBody {
    #[serde(default)]
    id: Option<serde_json::Value>,
    #[serde(default)]
    removed: Vec<usize>,
    #[serde(default)]
    added: Vec<AddedBox>,
    status: DecisionStatus,
    version: u64,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

pub fn router(state: AppState, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/queue", get(queue))
        .route("/api/items/{id}", get(item))
        .route("/api/items/{id}/decision", post(decision))
        .route("/api/images/{image_id}", get(image))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn queue(State(state): State<AppState>) -> Response {
    Json(state.service.snapshot().summaries()).into_response()
}

async fn item(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    match state.service.snapshot().get(&id) {
        Some(item) => Json(item.clone()).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown item `{id}`")),
    }
}

async fn decision(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<DecisionBody>,
) -> Response {
    if let Some(body_id) = &body.id {
        let body_id = match body_id {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        if body_id != id {
            return error(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("body id `{body_id}` does not match path id `{id}`"),
            );
        }
    }
    if state.service.snapshot().get(&id).is_none() {
        return error(StatusCode::NOT_FOUND, format!("unknown item `{id}`"));
    }
    let decision = ReviewDecision {
        id,
        removed: body.removed,
        added: body.added,
        status: body.status,
        version: body.version,
    };
    let service = state.service.clone();
    let outcome = tokio::task::spawn_blocking(move || service.submit(&decision)).await;
    match outcome {
        Ok(Ok(Ok(item))) => Json(item).into_response(),
        Ok(Ok(Err(rejection))) => {
            let status = if rejection.is_conflict() {
                StatusCode::CONFLICT
            } else {
                StatusCode::UNPROCESSABLE_ENTITY
            };
            let body = json!({ "error": rejection.to_string(), "rejection": rejection });
            (status, Json(body)).into_response()
        }
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

fn content_type(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    }
}

async fn image(State(state): State<AppState>, UrlPath(image_id): UrlPath<String>) -> Response {
    let Some(root) = &state.image_root else {
        return error(StatusCode::NOT_FOUND, "no image root configured");
    };
    let snapshot = state.service.snapshot();
    let Some(item) = snapshot.items().iter().find(|i| i.image_id == image_id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown image `{image_id}`"));
    };
    let relative = Path::new(&item.image_path);
    if !relative
        .components()
        .all(|c| matches!(c, Component::Normal(_)))
    {
        return error(StatusCode::NOT_FOUND, "image path escapes the image root");
    }
    let path = root.join(relative);
    match tokio::fs::read(&path).await {
        Ok(bytes) => (
            [(header::CONTENT_TYPE, content_type(&path))],
            Body::from(bytes),
        )
            .into_response(),
        Err(_) => error(
            StatusCode::NOT_FOUND,
            format!("image file {} not found", item.image_path),
        ),
    }
}

/// Binds the listener; fails if the port is taken.
pub async fn bind(host: &str, port: u16) -> anyhow::Result<TcpListener> {
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .with_context(|| format!("invalid address {host}:{port}"))?;
    TcpListener::bind(addr)
        .await
        .with_context(|| format!("cannot listen on {addr}"))
}

pub async fn serve(options: ServeOptions) -> anyhow::Result<()> {
    if !options.queue.exists() {
        anyhow::bail!("queue file {} does not exist", options.queue.display());
    }
    let service = ReviewService::open(&options.queue, &options.decisions)?;
    log::info!(
        "loaded {} items, decisions logged to {}",
        service.snapshot().items().len(),
        service.log_path().display()
    );
    let state = AppState {
        service: Arc::new(service),
        image_root: options.image_root.clone(),
    };
    let listener = bind(&options.host, options.port).await?;
    eprintln!(
        "review service listening on http://{}",
        listener.local_addr()?
    );
    let app = router(state, options.static_dir.as_deref());
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
