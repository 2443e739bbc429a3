use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tokio::net::TcpListener;

use crate::search::{SearchRequest, SearchService, ServiceError};

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match self {
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

async fn search(State(service): State<Arc<SearchService>>, body: Bytes) -> Result<Response, ServiceError> {
    let request = SearchRequest::from_json(&body)?;
    let response = service.handle_search(&request)?;
    Ok(Json(response.to_json()).into_response())
}

async fn health() -> Response {
    Json(json!({ "status": "ok" })).into_response()
}

async fn not_found() -> Response {
    (StatusCode::NOT_FOUND, Json(json!({ "error": "no such route" }))).into_response()
}

/// `POST /search` and `GET /health`.
pub fn router(service: Arc<SearchService>) -> Router {
    Router::new()
        .route("/search", post(search))
        .route("/health", get(health))
        .fallback(not_found)
        .with_state(service)
}

pub async fn serve(listener: TcpListener, service: Arc<SearchService>) -> std::io::Result<()> {
    axum::serve(listener, router(service)).await
}
