//! HTTP session API for live cooperative capture.
//!
//! A client creates a session, streams frames with its own face detections,
//! and asks for a verdict once the protocol reports `done`. Only the three
//! checkpoint frames are kept; every other frame is stepped and dropped.
//!
//! ```text
//! POST /api/v1/sessions                  -> 201 {id, config}
//! POST /api/v1/sessions/{id}/frames      multipart: image + annotation
//! GET  /api/v1/sessions/{id}
//! POST /api/v1/sessions/{id}/verdict     -> verdict JSON, 409 until done
//! ```

mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tokio::sync::{Mutex, RwLock};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use flowgate::classifier::LinearHead;
use flowgate::pipeline::PipelineConfig;
use flowgate::protocol::ProtocolConfig;

pub use session::{FramePart, FrameReply, SessionResource, SessionView};

pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(120);
const MAX_BODY_BYTES: usize = 32 << 20;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub protocol: ProtocolConfig,
    pub pipeline: PipelineConfig,
    pub idle_timeout: Duration,
    /// Allowed CORS origin; `None` allows any.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            protocol: ProtocolConfig::default(),
            pipeline: PipelineConfig::default(),
            idle_timeout: DEFAULT_IDLE_TIMEOUT,
            cors_origin: None,
        }
    }
}

enum Slot {
    Live(Arc<Mutex<SessionResource>>),
    Expired,
}

pub struct AppState {
    cfg: ServiceConfig,
    head: Option<Arc<LinearHead>>,
    sessions: RwLock<HashMap<String, Slot>>,
}

pub type SharedState = Arc<AppState>;

impl AppState {
    pub fn new(cfg: ServiceConfig, head: Option<LinearHead>) -> SharedState {
        Arc::new(Self {
            cfg,
            head: head.map(Arc::new),
            sessions: RwLock::new(HashMap::new()),
        })
    }

    /// Marks idle sessions expired and drops their frames.
    pub async fn sweep(&self) -> usize {
        let now = Instant::now();
        let mut expired = Vec::new();
        {
            let map = self.sessions.read().await;
            for (id, slot) in map.iter() {
                if let Slot::Live(s) = slot {
                    if let Ok(s) = s.try_lock() {
                        if now.duration_since(s.last_seen) > self.cfg.idle_timeout {
                            expired.push(id.clone());
                        }
                    }
                }
            }
        }
        let mut map = self.sessions.write().await;
        for id in &expired {
            map.insert(id.clone(), Slot::Expired);
        }
        expired.len()
    }

    pub async fn live_sessions(&self) -> usize {
        self.sessions.read().await.values().filter(|s| matches!(s, Slot::Live(_))).count()
    }

    async fn lookup(&self, id: &str) -> Result<Arc<Mutex<SessionResource>>, ApiError> {
        let slot = {
            let map = self.sessions.read().await;
            match map.get(id) {
                None => return Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id}"))),
                Some(Slot::Expired) => return Err(ApiError::gone(id)),
                Some(Slot::Live(s)) => s.clone(),
            }
        };
        let idle = Instant::now().duration_since(slot.lock().await.last_seen);
        if idle > self.cfg.idle_timeout {
            self.sessions.write().await.insert(id.to_string(), Slot::Expired);
            return Err(ApiError::gone(id));
        }
        Ok(slot)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn gone(id: &str) -> Self {
        Self::new(StatusCode::GONE, format!("session {id} expired"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

async fn create_session(State(st): State<SharedState>) -> impl IntoResponse {
    let id = uuid::Uuid::new_v4().simple().to_string();
    let res = SessionResource::new(id.clone());
    st.sessions.write().await.insert(id.clone(), Slot::Live(Arc::new(Mutex::new(res))));
    log::debug!("session {id} created");
    (StatusCode::CREATED, Json(json!({ "id": id, "config": st.cfg.protocol })))
}

async fn get_session(State(st): State<SharedState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let s = st.lookup(&id).await?;
    let mut s = s.lock().await;
    s.touch();
    Ok(Json(s.view()))
}

async fn post_frame(
    State(st): State<SharedState>,
    Path(id): Path<String>,
    mut form: Multipart,
) -> Result<Json<FrameReply>, ApiError> {
    let s = st.lookup(&id).await?;
    let mut image = None;
    let mut part = None;
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(format!("multipart: {e}")))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::bad_request(format!("multipart field {name}: {e}")))?;
        match name.as_str() {
            "image" => image = Some(bytes),
            "annotation" => {
                part = Some(
                    serde_json::from_slice::<FramePart>(&bytes)
                        .map_err(|e| ApiError::bad_request(format!("annotation: {e}")))?,
                )
            }
            other => return Err(ApiError::bad_request(format!("unexpected field `{other}`"))),
        }
    }
    let image = image.ok_or_else(|| ApiError::bad_request("missing `image` part"))?;
    let part = part.ok_or_else(|| ApiError::bad_request("missing `annotation` part"))?;
    let frame = tokio::task::spawn_blocking(move || flowgate::imaging::decode_image(&image))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError::bad_request(format!("image: {e}")))?;
    let mut s = s.lock().await;
    let reply = s
        .step(frame, part, &st.cfg.protocol)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(reply))
}

async fn post_verdict(State(st): State<SharedState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let s = st.lookup(&id).await?;
    let head = st
        .head
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no classifier head loaded"))?;
    // Frames are copied out so the session stays readable during scoring.
    let triplet = {
        let mut s = s.lock().await;
        s.touch();
        if let Some(body) = &s.verdict {
            return Ok(json_response(body.clone()));
        }
        s.triplet()
            .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, format!("session {id} is not done")))?
    };
    let cfg = st.cfg.pipeline;
    let body = tokio::task::spawn_blocking(move || {
        let (frames, annotations) = triplet;
        flowgate::pipeline::classify(
            [&frames[0], &frames[1], &frames[2]],
            [&annotations[0], &annotations[1], &annotations[2]],
            &head,
            &cfg,
        )
        .and_then(|v| v.to_json())
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(|e| {
        let status = if e.is_data_error() {
            StatusCode::UNPROCESSABLE_ENTITY
        } else {
            StatusCode::INTERNAL_SERVER_ERROR
        };
        ApiError::new(status, e.to_string())
    })?;
    let body = body + "\n";
    s.lock().await.verdict = Some(body.clone());
    Ok(json_response(body))
}

fn json_response(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

pub fn router(state: SharedState) -> Router {
    let origin = match &state.cfg.cors_origin {
        Some(o) => match HeaderValue::from_str(o) {
            Ok(v) => AllowOrigin::exact(v),
            Err(_) => AllowOrigin::any(),
        },
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new().allow_origin(origin).allow_methods(Any).allow_headers(Any);
    Router::new()
        .route("/api/v1/sessions", post(create_session))
        .route("/api/v1/sessions/{id}", get(get_session))
        .route("/api/v1/sessions/{id}/frames", post(post_frame))
        .route("/api/v1/sessions/{id}/verdict", post(post_verdict))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .layer(cors)
        .with_state(state)
}

/// Serves until the process is stopped, sweeping idle sessions periodically.
pub async fn serve(addr: SocketAddr, state: SharedState) -> std::io::Result<()> {
    let sweeper = state.clone();
    let period = (state.cfg.idle_timeout / 4).max(Duration::from_millis(100));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let n = sweeper.sweep().await;
            if n > 0 {
                log::info!("expired {n} idle sessions");
            }
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
