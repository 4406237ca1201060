//! Live Swift/Super routing over HTTP.
//!
//! Every `POST /v1/infer` body is forwarded to the Swift backend, which must
//! answer `{"prediction", "logits": [[..]], "encoder_features"?}`. The score
//! is computed here; at or above the live threshold the Swift prediction is
//! returned, otherwise the same body goes to the Super backend
//! (`{"prediction"}`).

mod metrics;

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use elang_core::{score_logits, EnergyHead, Route, ScoreKind};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;

pub use metrics::{GatewayMetrics, HistogramSpec, LatencySummary, ScoreHistogram, LATENCY_WINDOW};

use crate::format::{threshold_from_json, threshold_json};
use metrics::MetricsState;

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub swift_url: String,
    pub super_url: String,
    pub score_kind: ScoreKind,
    pub initial_threshold: f64,
    /// Required for [`ScoreKind::EnergyHead`].
    pub head: Option<EnergyHead>,
    /// Per backend call.
    pub timeout: Duration,
    pub listen: SocketAddr,
    pub histogram: HistogramSpec,
}

impl GatewayConfig {
    pub fn new(swift_url: impl Into<String>, super_url: impl Into<String>) -> Self {
        GatewayConfig {
            swift_url: swift_url.into(),
            super_url: super_url.into(),
            score_kind: ScoreKind::Energy,
            initial_threshold: 0.0,
            head: None,
            timeout: Duration::from_secs(5),
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            histogram: HistogramSpec::for_kind(ScoreKind::Energy),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, url) in [
            ("swift_url", &self.swift_url),
            ("super_url", &self.super_url),
        ] {
            let parsed = reqwest::Url::parse(url).map_err(|e| format!("{name} {url:?}: {e}"))?;
            if !matches!(parsed.scheme(), "http" | "https") {
                return Err(format!("{name} {url:?}: expected an http(s) URL"));
            }
        }
        if self.timeout.is_zero() {
            return Err("timeout must be positive".into());
        }
        if self.initial_threshold.is_nan() {
            return Err("threshold must be a number or +-inf".into());
        }
        if self.score_kind == ScoreKind::EnergyHead && self.head.is_none() {
            return Err("energy-head scoring needs a head checkpoint".into());
        }
        if !self.histogram.is_valid() {
            return Err(format!("bad histogram range {:?}", self.histogram));
        }
        Ok(())
    }
}

struct Shared {
    config: GatewayConfig,
    client: reqwest::Client,
    threshold: AtomicU64,
    /// Keys the Random score: the n-th scored request uses index n.
    scored: AtomicU64,
    metrics: Mutex<MetricsState>,
}

/// Cheap to clone; all clones share one threshold and one set of metrics.
#[derive(Clone)]
pub struct Gateway {
    shared: Arc<Shared>,
}

impl Gateway {
    pub fn new(config: GatewayConfig) -> Result<Self, String> {
        config.validate()?;
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Gateway {
            shared: Arc::new(Shared {
                threshold: AtomicU64::new(config.initial_threshold.to_bits()),
                scored: AtomicU64::new(0),
                metrics: Mutex::new(MetricsState::new(config.histogram)),
                client,
                config,
            }),
        })
    }

    pub fn threshold(&self) -> f64 {
        f64::from_bits(self.shared.threshold.load(Ordering::Acquire))
    }

    /// Replaces the live threshold. NaN is refused.
    pub fn set_threshold(&self, threshold: f64) -> Option<f64> {
        if threshold.is_nan() {
            return None;
        }
        self.shared
            .threshold
            .store(threshold.to_bits(), Ordering::Release);
        Some(threshold)
    }

    pub fn metrics(&self) -> GatewayMetrics {
        let m = self.shared.metrics.lock().expect("metrics lock");
        m.snapshot(self.threshold())
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/v1/infer", post(infer))
            .route("/v1/threshold", get(get_threshold).put(put_threshold))
            .route("/v1/metrics", get(get_metrics))
            .route("/healthz", get(|| async { "ok" }))
            .with_state(self.clone())
    }

    /// Serves on an already bound listener until the task is dropped.
    pub async fn serve_on(self, listener: TcpListener) -> std::io::Result<()> {
        axum::serve(listener, self.router()).await
    }

    pub async fn serve(self) -> std::io::Result<()> {
        let listener = TcpListener::bind(self.shared.config.listen).await?;
        tracing::info!(addr = %listener.local_addr()?, "gateway listening");
        self.serve_on(listener).await
    }
}

#[derive(Debug)]
enum InferError {
    BadRequest(String),
    Unreachable {
        route: Route,
        message: String,
    },
    BadReply {
        route: Route,
        message: String,
    },
    Backend {
        route: Route,
        status: StatusCode,
        body: Value,
    },
    Unscorable(String),
}

impl IntoResponse for InferError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            InferError::BadRequest(m) => (StatusCode::BAD_REQUEST, json!({ "error": m })),
            InferError::Unreachable { route, message } => (
                StatusCode::BAD_GATEWAY,
                json!({ "error": message, "route": route.as_str() }),
            ),
            InferError::BadReply { route, message } => (
                StatusCode::BAD_GATEWAY,
                json!({ "error": message, "route": route.as_str() }),
            ),
            InferError::Backend {
                route,
                status,
                body,
            } => (
                status,
                json!({ "error": "backend error", "route": route.as_str(), "backend": body }),
            ),
            InferError::Unscorable(m) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({ "error": m, "route": "swift" }),
            ),
        };
        (status, Json(body)).into_response()
    }
}

#[derive(Deserialize)]
struct SwiftReply {
    prediction: Value,
    logits: Vec<Vec<f64>>,
    #[serde(default)]
    encoder_features: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct SuperReply {
    prediction: Value,
}

async fn call(gw: &Gateway, route: Route, payload: &Value) -> Result<Value, InferError> {
    let url = match route {
        Route::Swift => &gw.shared.config.swift_url,
        Route::Super => &gw.shared.config.super_url,
    };
    let unreachable = |e: reqwest::Error| InferError::Unreachable {
        route,
        message: e.to_string(),
    };
    let resp = gw
        .shared
        .client
        .post(url)
        .json(payload)
        .send()
        .await
        .map_err(unreachable)?;
    let status = resp.status();
    let bytes = resp.bytes().await.map_err(unreachable)?;
    let body = serde_json::from_slice::<Value>(&bytes);
    if !status.is_success() {
        let body = body.unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
        let status = StatusCode::from_u16(status.as_u16()).unwrap_or(StatusCode::BAD_GATEWAY);
        return Err(InferError::Backend {
            route,
            status,
            body,
        });
    }
    body.map_err(|e| InferError::BadReply {
        route,
        message: format!("backend reply is not JSON: {e}"),
    })
}

async fn infer_inner(gw: &Gateway, body: &Bytes) -> Result<Value, InferError> {
    let started = Instant::now();
    let payload: Value = serde_json::from_slice(body)
        .map_err(|e| InferError::BadRequest(format!("request body is not JSON: {e}")))?;
    if !payload.is_object() {
        return Err(InferError::BadRequest(
            "request body must be an object".into(),
        ));
    }

    let reply = call(gw, Route::Swift, &payload).await?;
    let swift: SwiftReply = serde_json::from_value(reply)
        .map_err(|e| InferError::Unscorable(format!("swift reply: {e}")))?;
    let index = gw.shared.scored.fetch_add(1, Ordering::Relaxed);
    let config = &gw.shared.config;
    let score = score_logits(
        &swift.logits,
        swift.encoder_features.as_deref(),
        index as usize,
        config.score_kind,
        config.head.as_ref(),
    )
    .map_err(|e| InferError::Unscorable(e.to_string()))?;
    if !score.is_finite() {
        return Err(InferError::Unscorable("score is not finite".into()));
    }

    // read once: this request is routed by exactly one threshold value
    let threshold = gw.threshold();
    let route = Route::for_score(score, threshold);
    let prediction = match route {
        Route::Swift => swift.prediction,
        Route::Super => {
            let reply = call(gw, Route::Super, &payload).await?;
            let sup: SuperReply =
                serde_json::from_value(reply).map_err(|e| InferError::BadReply {
                    route,
                    message: format!("super reply: {e}"),
                })?;
            sup.prediction
        }
    };

    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
    gw.shared
        .metrics
        .lock()
        .expect("metrics lock")
        .record(route, score, elapsed_ms);
    tracing::debug!(
        route = route.as_str(),
        score,
        threshold,
        elapsed_ms,
        "routed"
    );
    Ok(json!({
        "prediction": prediction,
        "route": route.as_str(),
        "score": score,
        "threshold": threshold_json(threshold),
    }))
}

async fn infer(State(gw): State<Gateway>, body: Bytes) -> Response {
    match infer_inner(&gw, &body).await {
        Ok(v) => Json(v).into_response(),
        Err(e) => {
            if !matches!(e, InferError::BadRequest(_)) {
                tracing::warn!(error = ?e, "request failed");
            }
            gw.shared
                .metrics
                .lock()
                .expect("metrics lock")
                .record_failure();
            e.into_response()
        }
    }
}

async fn get_threshold(State(gw): State<Gateway>) -> Json<Value> {
    Json(json!({ "threshold": threshold_json(gw.threshold()) }))
}

async fn put_threshold(State(gw): State<Gateway>, body: Bytes) -> Response {
    let parsed = serde_json::from_slice::<Value>(&body)
        .ok()
        .and_then(|v| v.get("threshold").and_then(threshold_from_json));
    match parsed.and_then(|t| gw.set_threshold(t)) {
        Some(t) => {
            tracing::info!(threshold = t, "threshold updated");
            Json(json!({ "threshold": threshold_json(t) })).into_response()
        }
        None => (
            StatusCode::BAD_REQUEST,
            Json(json!({ "error": "expected {\"threshold\": number | \"+inf\" | \"-inf\"}" })),
        )
            .into_response(),
    }
}

async fn get_metrics(State(gw): State<Gateway>) -> Json<GatewayMetrics> {
    Json(gw.metrics())
}
