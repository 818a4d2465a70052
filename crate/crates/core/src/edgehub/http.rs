//! JSON HTTP API and the periodic status push.
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/health` | [`HealthReport`] |
//! | GET | `/devices` | `[DeviceSummary]` |
//! | GET | `/segments/{device_id}` | `[SegmentSummary]` |
//! | POST | `/recommend/session` | new session view |
//! | POST | `/recommend/session/{id}/message` | `{"text": ...}` in, session view out |
//! | GET | `/recommend/session/{id}` | session view |

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::{health::HealthReport, Hub, RateStats, SessionCounters};
use crate::recommend::service::{RecommendService, ServiceError};

#[derive(Clone)]
pub struct AppState {
    pub hub: Arc<Hub>,
    pub recommend: Option<Arc<RecommendService>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSummary {
    pub device_id: u16,
    pub counters: SessionCountersView,
    pub rate: Option<RateView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCountersView {
    pub received: u64,
    pub lost: u64,
    pub intact: u64,
    pub recovered: u64,
    pub unrecoverable: u64,
    pub duplicates: u64,
    pub late: u64,
    pub stored_samples: u64,
    pub gap_samples: u64,
    pub loss_pct: f64,
    pub recovered_pct: f64,
}

impl From<SessionCounters> for SessionCountersView {
    fn from(c: SessionCounters) -> Self {
        SessionCountersView {
            received: c.received,
            lost: c.lost,
            intact: c.intact,
            recovered: c.recovered,
            unrecoverable: c.unrecoverable,
            duplicates: c.duplicates,
            late: c.late,
            stored_samples: c.stored_samples,
            gap_samples: c.gap_samples,
            loss_pct: c.loss_pct(),
            recovered_pct: c.recovered_pct(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateView {
    pub mean_hz: f64,
    pub std_hz: f64,
    pub packets: usize,
}

impl From<RateStats> for RateView {
    fn from(r: RateStats) -> Self {
        RateView { mean_hz: r.mean_hz, std_hz: r.std_hz, packets: r.packets }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub start_sample_index: u64,
    pub start_time_us: u64,
    pub span: u64,
    pub stored_samples: u64,
    pub gap_samples: u64,
    pub file_name: String,
}

#[derive(Debug, Deserialize)]
pub struct MessageBody {
    pub text: String,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: msg.into() })).into_response()
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/devices", get(devices))
        .route("/segments/{device_id}", get(segments))
        .route("/recommend/session", post(create_session))
        .route("/recommend/session/{id}", get(get_session))
        .route("/recommend/session/{id}/message", post(post_message))
        .with_state(state)
}

/// Serves the API until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

async fn health(State(s): State<AppState>) -> Json<HealthReport> {
    let hub = s.hub.clone();
    Json(tokio::task::spawn_blocking(move || hub.health_report()).await.expect("health task"))
}

async fn devices(State(s): State<AppState>) -> Json<Vec<DeviceSummary>> {
    let hub = &s.hub;
    Json(
        hub.device_ids()
            .into_iter()
            .filter_map(|id| {
                Some(DeviceSummary {
                    device_id: id,
                    counters: hub.counters(id)?.into(),
                    rate: hub.estimate_rate(id)?.ok().map(RateView::from),
                })
            })
            .collect(),
    )
}

async fn segments(State(s): State<AppState>, Path(device_id): Path<u16>) -> Response {
    if !s.hub.device_ids().contains(&device_id) {
        return error(StatusCode::NOT_FOUND, format!("unknown device {device_id}"));
    }
    let list: Vec<SegmentSummary> = s
        .hub
        .segments(device_id)
        .iter()
        .map(|seg| SegmentSummary {
            start_sample_index: seg.start_sample_index,
            start_time_us: seg.start_time_us,
            span: seg.span(),
            stored_samples: seg.stored_samples(),
            gap_samples: seg.gap_samples(),
            file_name: super::segment_file_name(seg),
        })
        .collect();
    Json(list).into_response()
}

fn service(s: &AppState) -> Result<Arc<RecommendService>, Response> {
    s.recommend
        .clone()
        .ok_or_else(|| error(StatusCode::SERVICE_UNAVAILABLE, "no site description loaded"))
}

fn service_error(e: ServiceError) -> Response {
    match e {
        ServiceError::UnknownSession(_) => error(StatusCode::NOT_FOUND, e.to_string()),
        ServiceError::Dialog(_) => error(StatusCode::CONFLICT, e.to_string()),
    }
}

// dialog steps may block on the chat client
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.expect("dialog task")
}

async fn create_session(State(s): State<AppState>) -> Response {
    let svc = match service(&s) {
        Ok(v) => v,
        Err(r) => return r,
    };
    let view = blocking(move || svc.create_session()).await;
    (StatusCode::CREATED, Json(view)).into_response()
}

async fn get_session(State(s): State<AppState>, Path(id): Path<u64>) -> Response {
    let svc = match service(&s) {
        Ok(v) => v,
        Err(r) => return r,
    };
    match svc.get(id) {
        Ok(v) => Json(v).into_response(),
        Err(e) => service_error(e),
    }
}

async fn post_message(State(s): State<AppState>, Path(id): Path<u64>, Json(body): Json<MessageBody>) -> Response {
    let svc = match service(&s) {
        Ok(v) => v,
        Err(r) => return r,
    };
    match blocking(move || svc.message(id, &body.text)).await {
        Ok(v) => Json(v).into_response(),
        Err(e) => service_error(e),
    }
}

/// POSTs the health report as JSON to a remote endpoint at a fixed period.
pub struct StatusPusher {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<u64>>,
}

impl StatusPusher {
    pub fn spawn(hub: Arc<Hub>, url: String, period: Duration) -> std::io::Result<Self> {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = std::thread::Builder::new().name("vibesense-status".into()).spawn(move || {
            let client = reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(10))
                .build()
                .expect("http client");
            let mut pushed = 0u64;
            let tick = Duration::from_millis(20);
            let mut waited = period;
            while !flag.load(Ordering::Relaxed) {
                if waited >= period {
                    waited = Duration::ZERO;
                    match client.post(&url).json(&hub.health_report()).send() {
                        Ok(r) if r.status().is_success() => pushed += 1,
                        Ok(r) => tracing::warn!(status = r.status().as_u16(), "status push rejected"),
                        Err(e) => tracing::warn!(error = %e, "status push failed"),
                    }
                }
                std::thread::sleep(tick);
                waited += tick;
            }
            pushed
        })?;
        Ok(StatusPusher { stop, handle: Some(handle) })
    }

    /// Stops pushing; returns the number of accepted pushes.
    pub fn shutdown(mut self) -> u64 {
        self.stop.store(true, Ordering::Relaxed);
        self.handle.take().map_or(0, |h| h.join().unwrap_or(0))
    }
}

impl Drop for StatusPusher {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
