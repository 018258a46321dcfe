//! HTTP endpoint: `GET /v1/evidence?q=<query>&k=<n>` and `GET /v1/health`.
//!
//! The engine is immutable after startup, so requests share one `Arc` with
//! no locking.

use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;

use bege_core::engine::{Engine, EngineError};

pub fn serve(engine: Engine, addr: &str) -> anyhow::Result<()> {
    let engine = Arc::new(engine);
    let app = Router::new()
        .route("/v1/evidence", get(evidence))
        .route("/v1/health", get(health))
        .with_state(engine);

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        // Announce the bound address so callers using port 0 can find us.
        println!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app).await?;
        Ok(())
    })
}

async fn health() -> Response {
    json_response(StatusCode::OK, r#"{"status":"ok"}"#.to_string())
}

async fn evidence(
    State(engine): State<Arc<Engine>>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let Some(query) = params.get("q") else {
        return error_response(StatusCode::BAD_REQUEST, "missing query parameter \"q\"");
    };
    let k = match params.get("k") {
        None => engine.default_k(),
        Some(raw) => match raw.parse::<usize>() {
            Ok(k) if k >= 1 => k,
            _ => return error_response(StatusCode::BAD_REQUEST, "k must be a positive integer"),
        },
    };
    match engine.run_pipeline_with_k(query, k) {
        Ok(set) => json_response(StatusCode::OK, set.to_json()),
        Err(err @ (EngineError::EmptyQuery | EngineError::InvalidEntity(_))) => {
            error_response(StatusCode::BAD_REQUEST, &err.to_string())
        }
        Err(err) => error_response(StatusCode::INTERNAL_SERVER_ERROR, &err.to_string()),
    }
}

fn json_response(status: StatusCode, body: String) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        body,
    )
        .into_response()
}

fn error_response(status: StatusCode, message: &str) -> Response {
    let body = serde_json::json!({ "error": message }).to_string();
    json_response(status, body)
}
