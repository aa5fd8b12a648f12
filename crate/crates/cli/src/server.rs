//! HTTP front: a thin axum layer over [`crate::api::Catalog`].

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::State;
use axum::http::{header, HeaderValue, Method, Request, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use tower_http::services::ServeDir;

use crate::api::{ApiResponse, Catalog, Endpoint};

type Shared = Arc<Catalog>;

fn json_response(resp: ApiResponse) -> Response {
    let status = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, [(header::CONTENT_TYPE, "application/json")], resp.body).into_response()
}

async fn models(State(catalog): State<Shared>) -> Response {
    json_response(ApiResponse {
        status: 200,
        body: catalog.models_body(),
    })
}

async fn run(catalog: Shared, endpoint: Endpoint, body: Bytes) -> Response {
    // Inference is CPU-bound; keep it off the async workers.
    let result = tokio::task::spawn_blocking(move || catalog.handle(endpoint, &body)).await;
    match result {
        Ok(resp) => json_response(resp),
        Err(e) => json_response(ApiResponse {
            status: 500,
            body: crate::api::to_body(&serde_json::json!({ "error": e.to_string() })),
        }),
    }
}

async fn complete(State(c): State<Shared>, body: Bytes) -> Response {
    run(c, Endpoint::Complete, body).await
}

async fn summarize(State(c): State<Shared>, body: Bytes) -> Response {
    run(c, Endpoint::Summarize, body).await
}

async fn search(State(c): State<Shared>, body: Bytes) -> Response {
    run(c, Endpoint::Search, body).await
}

/// Permissive CORS so the demo UI can be served from any origin;
/// preflight requests are answered directly.
async fn cors(req: Request<Body>, next: Next) -> Response {
    let mut resp = if req.method() == Method::OPTIONS {
        StatusCode::NO_CONTENT.into_response()
    } else {
        next.run(req).await
    };
    let h = resp.headers_mut();
    h.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
    h.insert(header::ACCESS_CONTROL_ALLOW_METHODS, HeaderValue::from_static("GET, POST, OPTIONS"));
    h.insert(header::ACCESS_CONTROL_ALLOW_HEADERS, HeaderValue::from_static("content-type"));
    resp
}

async fn not_found() -> Response {
    json_response(ApiResponse {
        status: 404,
        body: crate::api::to_body(&serde_json::json!({ "error": "no such route" })),
    })
}

pub fn router(catalog: Catalog, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/models", get(models))
        .route("/api/complete", post(complete))
        .route("/api/summarize", post(summarize))
        .route("/api/search", post(search))
        .with_state(Arc::new(catalog));
    let app = match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(not_found),
    };
    app.layer(middleware::from_fn(cors))
}

/// Binds and serves until the process is stopped. Port 0 picks a free port;
/// the bound address is logged and printed on stdout.
pub async fn serve(catalog: Catalog, host: &str, port: u16, ui_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    let addr: SocketAddr = listener.local_addr()?;
    log::info!("serving {} model(s) on http://{addr}", catalog.ids().len());
    println!("listening on http://{addr}");
    axum::serve(listener, router(catalog, ui_dir)).await?;
    Ok(())
}
