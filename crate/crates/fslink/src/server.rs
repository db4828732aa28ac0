//! HTTP + JSON front end for [`ReviewState`]. No authentication; meant to
//! be bound to a local address.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tower_http::services::{ServeDir, ServeFile};

use crate::review::{DecisionRequest, ReviewError, ReviewState};

pub type Shared = Arc<RwLock<ReviewState>>;

const PLACEHOLDER: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>fslink review</title></head>
<body>
<h1>fslink review service</h1>
<p>No UI bundle is configured. The JSON API is available:</p>
<ul>
<li>GET /api/pairs/next</li>
<li>GET /api/pairs/{id}</li>
<li>POST /api/pairs/{id}/decision</li>
<li>GET /api/summary</li>
<li>GET /api/export</li>
</ul>
</body></html>
";

fn error(status: StatusCode, msg: impl ToString) -> Response {
    (status, Json(serde_json::json!({ "error": msg.to_string() }))).into_response()
}

impl IntoResponse for ReviewError {
    fn into_response(self) -> Response {
        let status = match &self {
            ReviewError::UnknownPair(_) => StatusCode::NOT_FOUND,
            ReviewError::BadRequest(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        error(status, self)
    }
}

async fn next_pending(State(s): State<Shared>) -> Response {
    let guard = s.read().expect("review state lock");
    match guard.next_pending() {
        Some(item) => Json(item).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn get_pair(State(s): State<Shared>, Path(id): Path<String>) -> Response {
    let guard = s.read().expect("review state lock");
    match guard.get(&id) {
        Ok(detail) => Json(detail).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn post_decision(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> Response {
    let known = s.read().expect("review state lock").get(&id).is_ok();
    if !known {
        return ReviewError::UnknownPair(id).into_response();
    }
    let req: DecisionRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed body: {e}")),
    };
    let mut guard = s.write().expect("review state lock");
    match guard.record_decision(&id, &req, chrono::Utc::now()) {
        Ok(ack) => Json(ack).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn summary(State(s): State<Shared>) -> Response {
    Json(s.read().expect("review state lock").summary()).into_response()
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    #[serde(default)]
    latest: bool,
}

async fn export(State(s): State<Shared>, Query(q): Query<ExportQuery>) -> Response {
    let body = s.read().expect("review state lock").export_csv(q.latest);
    (
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8"),
            (header::CONTENT_DISPOSITION, "attachment; filename=\"adjudications.csv\""),
        ],
        body,
    )
        .into_response()
}

async fn placeholder() -> Html<&'static str> {
    Html(PLACEHOLDER)
}

/// API routes plus static assets at `/` (the placeholder page when
/// `ui_dir` is `None`).
pub fn router(state: Shared, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/pairs/next", get(next_pending))
        .route("/api/pairs/{id}", get(get_pair))
        .route("/api/pairs/{id}/decision", post(post_decision))
        .route("/api/summary", get(summary))
        .route("/api/export", get(export))
        .with_state(state);
    match ui_dir {
        Some(dir) => {
            let index = dir.join("index.html");
            api.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(index)))
        }
        None => api.route("/", get(placeholder)),
    }
}

/// Binds, prints the bound address on stdout and serves until Ctrl-C.
pub async fn serve(state: Shared, bind: &str, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    let addr: SocketAddr = listener.local_addr()?;
    println!("listening on http://{addr}");
    use std::io::Write;
    std::io::stdout().flush()?;
    axum::serve(listener, router(state, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
