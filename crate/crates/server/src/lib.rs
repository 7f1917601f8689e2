//! HTTP API over the workbench core.
//!
//! Errors come back as `{code, message, details}` with a status derived from
//! the code. Batch progress streams as server-sent events.

mod error;
mod eval;
mod projects;
mod sessions;
mod state;

use std::net::SocketAddr;
use std::path::PathBuf;

use axum::extract::{Request, State};
use axum::http::header::AUTHORIZATION;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use teachbench_core::gateway::Gateways;
use teachbench_core::store::Store;
use teachbench_core::student::SimSettings;
use tower_http::services::{ServeDir, ServeFile};

pub use error::{status_for, ApiError, ERROR_CODES};
pub use sessions::Done;
pub use state::{AppState, Progress};

/// Environment variable holding the shared bearer token.
pub const TOKEN_ENV: &str = "TEACHBENCH_API_TOKEN";

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub store_root: PathBuf,
    pub gateways: Gateways,
    pub settings: SimSettings,
    pub token: Option<String>,
    pub static_dir: Option<PathBuf>,
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

async fn not_found() -> ApiError {
    ApiError::not_found("no such route")
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let given = req
            .headers()
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(token.as_str()) {
            return ApiError::new("unauthorized", "missing or wrong bearer token").into_response();
        }
    }
    next.run(req).await
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/projects", get(projects::list).post(projects::create))
        .route("/projects/{pid}", get(projects::get).delete(projects::delete))
        .route("/projects/{pid}/diagram", get(projects::get_diagram).put(projects::put_diagram))
        .route("/projects/{pid}/layout", get(projects::get_layout).put(projects::put_layout))
        .route("/projects/{pid}/components", put(projects::put_components))
        .route("/projects/{pid}/topic", put(projects::put_topic))
        .route(
            "/projects/{pid}/profiles",
            get(projects::list_profiles).post(projects::create_profile),
        )
        .route(
            "/projects/{pid}/profiles/{prid}",
            get(projects::get_profile)
                .put(projects::put_profile)
                .delete(projects::delete_profile),
        )
        .route(
            "/projects/{pid}/profiles/{prid}/overview",
            post(projects::generate_overview).put(projects::edit_overview),
        )
        .route("/projects/{pid}/testcases", get(projects::list_test_cases))
        .route(
            "/projects/{pid}/testcases/{set}",
            put(projects::put_test_cases).delete(projects::delete_test_cases),
        )
        .route("/projects/{pid}/testcases/{set}/run", post(projects::run_test_case_set))
        .route("/projects/{pid}/records", get(projects::list_records).post(projects::add_records))
        .route("/projects/{pid}/eval/interview", post(eval::interview))
        .route("/projects/{pid}/eval/lesson", post(eval::lesson))
        .route("/sessions", get(sessions::list).post(sessions::create))
        .route("/sessions/{sid}", get(sessions::get).delete(sessions::delete))
        .route("/sessions/{sid}/batch", post(sessions::batch))
        .route("/sessions/{sid}/events", get(sessions::events))
        .route("/sessions/{sid}/regenerate", post(sessions::regenerate))
        .route("/sessions/{sid}/message", post(sessions::message))
        .route("/sessions/{sid}/rollback", post(sessions::rollback))
        .route("/sessions/{sid}/knowledge/{index}", get(sessions::knowledge))
        .route("/sample", post(eval::sample))
        .route("/eval/report", post(eval::report))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));

    let app = Router::new().route("/health", get(health)).merge(api);
    let app = match &state.static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(dir.join("index.html")))),
        None => app.fallback(not_found),
    };
    app.with_state(state)
}

/// Builds the state a config describes.
pub fn state_from_config(config: &ServerConfig) -> teachbench_core::Result<AppState> {
    let store = Store::open(&config.store_root)?;
    Ok(AppState::new(store, config.gateways.clone(), config.settings.clone())
        .with_token(config.token.clone())
        .with_static_dir(config.static_dir.clone()))
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    config: ServerConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> teachbench_core::Result<()> {
    let state = state_from_config(&config)?;
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}
