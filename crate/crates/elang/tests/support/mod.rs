#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use elang::gateway::{Gateway, GatewayConfig};
use elang_core::{Dataset, Prediction, Prediction::*, SampleRecord, TaskKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};

pub async fn spawn(router: Router) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
    addr
}

/// A port nothing listens on.
pub async fn dead_url() -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    format!("http://{addr}/infer")
}

#[derive(Clone)]
pub enum Behaviour {
    /// Swift: reply with `input.swift`. Super: reply with `input.super_pred`.
    Echo,
    /// The n-th call gets `replies[n % len]`.
    Cycle(Vec<Value>),
    Fail(u16, Value),
    Slow(Duration),
}

pub struct Mock {
    pub url: String,
    pub calls: Arc<AtomicUsize>,
}

impl Mock {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[derive(Clone)]
struct MockState {
    behaviour: Behaviour,
    calls: Arc<AtomicUsize>,
    swift: bool,
}

async fn mock_handler(
    State(s): State<MockState>,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    let n = s.calls.fetch_add(1, Ordering::SeqCst);
    match &s.behaviour {
        Behaviour::Echo if s.swift => (StatusCode::OK, Json(body["input"]["swift"].clone())),
        Behaviour::Echo => (
            StatusCode::OK,
            Json(json!({ "prediction": body["input"]["super_pred"] })),
        ),
        Behaviour::Cycle(replies) => (StatusCode::OK, Json(replies[n % replies.len()].clone())),
        Behaviour::Fail(code, reply) => (StatusCode::from_u16(*code).unwrap(), Json(reply.clone())),
        Behaviour::Slow(d) => {
            tokio::time::sleep(*d).await;
            (StatusCode::OK, Json(json!({ "prediction": "late" })))
        }
    }
}

async fn mock(behaviour: Behaviour, swift: bool) -> Mock {
    let calls = Arc::new(AtomicUsize::new(0));
    let state = MockState {
        behaviour,
        calls: calls.clone(),
        swift,
    };
    let addr = spawn(
        Router::new()
            .route("/infer", post(mock_handler))
            .with_state(state),
    )
    .await;
    Mock {
        url: format!("http://{addr}/infer"),
        calls,
    }
}

pub async fn mock_swift(behaviour: Behaviour) -> Mock {
    mock(behaviour, true).await
}

pub async fn mock_super(behaviour: Behaviour) -> Mock {
    mock(behaviour, false).await
}

pub struct Running {
    pub gateway: Gateway,
    pub base: String,
    pub http: reqwest::Client,
}

impl Running {
    pub async fn infer(&self, body: &Value) -> (u16, Value) {
        let resp = self
            .http
            .post(format!("{}/v1/infer", self.base))
            .json(body)
            .send()
            .await
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    pub async fn put_threshold(&self, body: &Value) -> (u16, Value) {
        let resp = self
            .http
            .put(format!("{}/v1/threshold", self.base))
            .json(body)
            .send()
            .await
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let resp = self
            .http
            .get(format!("{}{path}", self.base))
            .send()
            .await
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    pub async fn metrics(&self) -> elang::gateway::GatewayMetrics {
        let resp = self
            .http
            .get(format!("{}/v1/metrics", self.base))
            .send()
            .await
            .unwrap();
        resp.json().await.unwrap()
    }
}

pub async fn start(config: GatewayConfig) -> Running {
    let gateway = Gateway::new(config).unwrap();
    let addr = spawn(gateway.router()).await;
    Running {
        gateway,
        base: format!("http://{addr}"),
        http: reqwest::Client::new(),
    }
}

pub fn prediction_json(p: &Prediction) -> Value {
    match p {
        Label(l) => json!(l),
        Sequence(s) => json!(s),
    }
}

/// Request body for a record, shaped for the echo mocks.
pub fn request_for(record: &SampleRecord) -> Value {
    let mut swift = json!({
        "prediction": prediction_json(&record.swift_pred),
        "logits": record.swift_logits,
    });
    if let Some(f) = &record.encoder_features {
        swift["encoder_features"] = json!(f);
    }
    json!({
        "input": {
            "id": record.id,
            "swift": swift,
            "super_pred": prediction_json(&record.super_pred),
        }
    })
}

/// Two-class records whose energy is exactly `s`: logits `[s, -1e4]`,
/// Swift predicts 0, label 0 for the `correct` group and 1 otherwise.
pub fn gaussian_groups(
    n_correct: usize,
    mean_correct: f64,
    n_wrong: usize,
    mean_wrong: f64,
    seed: u64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n_correct + n_wrong);
    for (n, mean, label) in [(n_correct, mean_correct, 0), (n_wrong, mean_wrong, 1)] {
        let dist = Normal::new(mean, 1.0).unwrap();
        for _ in 0..n {
            let s: f64 = dist.sample(&mut rng);
            records.push(SampleRecord {
                id: format!("g{}", records.len()),
                swift_logits: vec![vec![s, -1e4]],
                encoder_features: None,
                swift_pred: Label(0),
                super_pred: Label(label),
                label: Some(Label(label)),
            });
        }
    }
    let ds = Dataset::new(records).unwrap();
    assert_eq!(ds.task_kind(), TaskKind::Classification);
    ds
}
