//! Review service: serves scenes, verdicts and QA items to the review UI and
//! records accept / reject / edit decisions in an append-only log.
//!
//! Derived review state is a fold over the log, rebuilt on every start.
//! Writes are serialised through one appender and synced before the
//! response goes out.

pub mod data;
pub mod decision;
pub mod export;
pub mod log;

pub use data::{ReviewData, ScenePayload};
pub use decision::{ReviewBook, ReviewDecision, Stats, Verdict};
pub use export::{export_reviewed, ExportSummary};
pub use log::{LogError, ReviewLog};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cfdrive_core::promptqa::{QAItem, ReviewState};
use decision::FoldError;
use serde::Serialize;
use serde_json::json;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};
use thiserror::Error;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

/// Header naming the reviewer when the body leaves it empty.
pub const REVIEWER_HEADER: &str = "x-reviewer";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub scenes_dir: PathBuf,
    pub out_dir: PathBuf,
    pub log_path: PathBuf,
    pub ui_dir: Option<PathBuf>,
    pub bind: SocketAddr,
    /// Allowed browser origin; any origin when unset.
    pub cors_origin: Option<String>,
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("replaying review log: {0}")]
    Replay(#[from] FoldError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum SubmitError {
    #[error(transparent)]
    Fold(#[from] FoldError),
    #[error("review log append failed: {0}")]
    Log(#[from] std::io::Error),
}

pub struct AppState {
    pub data: ReviewData,
    book: RwLock<ReviewBook>,
    log: Mutex<ReviewLog>,
}

impl AppState {
    pub fn new(data: ReviewData, log_path: &Path) -> Result<Self, ServiceError> {
        let (log, prior) = ReviewLog::open(log_path)?;
        let book = ReviewBook::replay(&prior, |id| data.items.contains_key(id))?;
        Ok(Self {
            data,
            book: RwLock::new(book),
            log: Mutex::new(log),
        })
    }

    pub fn open(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let data = ReviewData::load(&config.scenes_dir, &config.out_dir)?;
        Self::new(data, &config.log_path)
    }

    pub fn book(&self) -> ReviewBook {
        self.book.read().expect("review book lock").clone()
    }

    pub fn stats(&self) -> Stats {
        let book = self.book.read().expect("review book lock");
        Stats::collect(&book, self.data.order.iter().map(String::as_str))
    }

    /// Validates, logs durably, then applies one decision.
    pub fn submit(&self, mut d: ReviewDecision) -> Result<ReviewState, SubmitError> {
        if d.timestamp == 0 {
            d.timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |t| t.as_secs());
        }
        let known = |id: &str| self.data.items.contains_key(id);
        // the log lock serialises writers; the book is only read until the line is durable
        let mut log = self.log.lock().expect("review log lock");
        self.book.read().expect("review book lock").check(&d, known)?;
        log.append(&d)?;
        let state = d.verdict.state();
        self.book.write().expect("review book lock").apply(d, known)?;
        Ok(state)
    }
}

type Shared = Arc<AppState>;

fn error(status: StatusCode, body: serde_json::Value) -> Response {
    (status, Json(body)).into_response()
}

#[derive(Serialize)]
struct SceneSummary {
    scene_id: String,
    trajectories: usize,
    unsafe_trajectories: usize,
    #[serde(flatten)]
    stats: Stats,
}

async fn list_scenes(State(st): State<Shared>) -> Json<serde_json::Value> {
    let book = st.book();
    let scenes: Vec<SceneSummary> = st
        .data
        .scenes
        .values()
        .map(|p| SceneSummary {
            scene_id: p.scene_id.clone(),
            trajectories: p.trajectories.len(),
            unsafe_trajectories: p.trajectories.iter().filter(|t| !t.safe).count(),
            stats: Stats::collect(&book, st.data.items_of(&p.scene_id).map(|r| r.item.id.as_str())),
        })
        .collect();
    Json(json!({ "scenes": scenes }))
}

async fn get_scene(State(st): State<Shared>, UrlPath(id): UrlPath<String>) -> Response {
    match st.data.scenes.get(&id) {
        Some(p) => Json(p).into_response(),
        None => error(StatusCode::NOT_FOUND, json!({ "error": format!("unknown scene {id}") })),
    }
}

#[derive(Serialize)]
struct QaView<'a> {
    #[serde(flatten)]
    item: QAItem,
    revision: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    last_decision: Option<&'a ReviewDecision>,
}

async fn get_scene_qa(State(st): State<Shared>, UrlPath(id): UrlPath<String>) -> Response {
    if !st.data.scenes.contains_key(&id) {
        return error(StatusCode::NOT_FOUND, json!({ "error": format!("unknown scene {id}") }));
    }
    let book = st.book();
    let items: Vec<QaView<'_>> = st
        .data
        .items_of(&id)
        .map(|r| {
            let mut item = r.item.clone();
            item.review_state = book.state(&item.id);
            QaView {
                revision: book.revision(&item.id),
                last_decision: book.latest(&item.id),
                item,
            }
        })
        .collect();
    Json(json!({ "scene_id": id, "items": items })).into_response()
}

async fn get_stats(State(st): State<Shared>) -> Json<Stats> {
    Json(st.stats())
}

fn field_error(field: &str, message: impl Into<String>) -> Response {
    error(
        StatusCode::BAD_REQUEST,
        json!({ "errors": [{ "field": field, "message": message.into() }] }),
    )
}

async fn post_review(State(st): State<Shared>, headers: HeaderMap, body: Bytes) -> Response {
    let de = &mut serde_json::Deserializer::from_slice(&body);
    let mut d: ReviewDecision = match serde_path_to_error::deserialize(de) {
        Ok(d) => d,
        Err(e) => {
            let path = e.path().to_string();
            let field = if path == "." { String::new() } else { path };
            return field_error(&field, e.inner().to_string());
        }
    };
    if d.item_id.trim().is_empty() {
        return field_error("item_id", "must not be empty");
    }
    if d.revision == 0 {
        return field_error("revision", "revisions start at 1");
    }
    if let Verdict::Edit(t) = &d.verdict {
        if t.trim().is_empty() {
            return field_error("verdict.text", "edited answer must not be empty");
        }
    }
    if let Some(i) = d.gap_tags.iter().position(|t| t.trim().is_empty()) {
        return field_error(&format!("gap_tags[{i}]"), "must not be empty");
    }
    if d.reviewer.is_empty() {
        if let Some(name) = headers.get(REVIEWER_HEADER).and_then(|v| v.to_str().ok()) {
            d.reviewer = name.to_string();
        }
    }
    let item_id = d.item_id.clone();
    let revision = d.revision;
    match st.submit(d) {
        Ok(state) => Json(json!({ "item_id": item_id, "revision": revision, "review_state": state })).into_response(),
        Err(SubmitError::Fold(FoldError::UnknownItem(id))) => {
            error(StatusCode::NOT_FOUND, json!({ "error": format!("unknown item {id}") }))
        }
        Err(SubmitError::Fold(e @ FoldError::Stale { current, .. })) => error(
            StatusCode::CONFLICT,
            json!({ "error": e.to_string(), "current_revision": current }),
        ),
        Err(e @ SubmitError::Log(_)) => {
            tracing::error!(error = %e, "decision not recorded");
            error(StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": e.to_string() }))
        }
    }
}

pub fn router(state: Arc<AppState>, ui_dir: Option<&Path>, cors_origin: Option<&str>) -> Router {
    let cors = match cors_origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(origin) => CorsLayer::new().allow_origin(AllowOrigin::exact(origin)),
        None => CorsLayer::new().allow_origin(AllowOrigin::any()),
    }
    .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
    .allow_headers([axum::http::header::CONTENT_TYPE, axum::http::HeaderName::from_static(REVIEWER_HEADER)]);
    let api = Router::new()
        .route("/scenes", get(list_scenes))
        .route("/scenes/{id}", get(get_scene))
        .route("/scenes/{id}/qa", get(get_scene_qa))
        .route("/stats", get(get_stats))
        .route("/reviews", post(post_review))
        .with_state(state);
    let app = match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(cors)
}

/// Runs until ctrl-c.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = Arc::new(AppState::open(&config)?);
    let s = state.stats();
    tracing::info!(items = s.total, pending = s.pending, log = %config.log_path.display(), "review state replayed");
    let app = router(state, config.ui_dir.as_deref(), config.cors_origin.as_deref());
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "review service listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
