use std::collections::VecDeque;

use elang_core::{Route, ScoreKind};
use serde::{Deserialize, Serialize};

use crate::format::threshold_serde;

/// Latency percentiles are taken over this many most recent requests per route.
pub const LATENCY_WINDOW: usize = 1024;

/// Fixed-width bins over `[lower, upper)`; scores outside land in the
/// underflow or overflow counters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramSpec {
    pub lower: f64,
    pub upper: f64,
    pub bins: usize,
}

impl HistogramSpec {
    /// A range that fits the usual values of each score kind.
    pub fn for_kind(kind: ScoreKind) -> Self {
        let (lower, upper, bins) = match kind {
            ScoreKind::Energy | ScoreKind::EnergyHead => (-10.0, 20.0, 60),
            ScoreKind::Softmax | ScoreKind::Random { .. } => (0.0, 1.0, 20),
            ScoreKind::Entropy => (-5.0, 0.0, 20),
        };
        HistogramSpec { lower, upper, bins }
    }

    pub fn is_valid(&self) -> bool {
        self.bins > 0 && self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper
    }
}

/// Cumulative over the gateway's lifetime, so the bins always sum to
/// `total_requests`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    pub lower: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl ScoreHistogram {
    fn new(spec: HistogramSpec) -> Self {
        ScoreHistogram {
            lower: spec.lower,
            bin_width: (spec.upper - spec.lower) / spec.bins as f64,
            counts: vec![0; spec.bins],
            underflow: 0,
            overflow: 0,
        }
    }

    fn add(&mut self, score: f64) {
        let pos = (score - self.lower) / self.bin_width;
        if pos < 0.0 {
            self.underflow += 1;
        } else if pos >= self.counts.len() as f64 {
            self.overflow += 1;
        } else {
            self.counts[pos as usize] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    /// Requests in the window.
    pub samples: usize,
    pub mean_ms: Option<f64>,
    pub p95_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayMetrics {
    pub total_requests: u64,
    pub swift_served: u64,
    pub super_served: u64,
    /// Requests answered with an error; not part of `total_requests`.
    pub failed_requests: u64,
    pub swift_ratio: f64,
    pub swift_latency_ms: LatencySummary,
    pub super_latency_ms: LatencySummary,
    #[serde(with = "threshold_serde")]
    pub current_threshold: f64,
    pub score_histogram: ScoreHistogram,
}

#[derive(Debug, Default)]
struct Window(VecDeque<f64>);

impl Window {
    fn push(&mut self, ms: f64) {
        if self.0.len() == LATENCY_WINDOW {
            self.0.pop_front();
        }
        self.0.push_back(ms);
    }

    fn summary(&self) -> LatencySummary {
        let n = self.0.len();
        if n == 0 {
            return LatencySummary {
                samples: 0,
                mean_ms: None,
                p95_ms: None,
            };
        }
        let mut sorted: Vec<f64> = self.0.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        // nearest rank
        let rank = ((0.95 * n as f64).ceil() as usize).max(1);
        LatencySummary {
            samples: n,
            mean_ms: Some(sorted.iter().sum::<f64>() / n as f64),
            p95_ms: Some(sorted[rank - 1]),
        }
    }
}

#[derive(Debug)]
pub(crate) struct MetricsState {
    swift_served: u64,
    super_served: u64,
    failed: u64,
    swift_latency: Window,
    super_latency: Window,
    histogram: ScoreHistogram,
}

impl MetricsState {
    pub(crate) fn new(spec: HistogramSpec) -> Self {
        MetricsState {
            swift_served: 0,
            super_served: 0,
            failed: 0,
            swift_latency: Window::default(),
            super_latency: Window::default(),
            histogram: ScoreHistogram::new(spec),
        }
    }

    pub(crate) fn record(&mut self, route: Route, score: f64, latency_ms: f64) {
        match route {
            Route::Swift => {
                self.swift_served += 1;
                self.swift_latency.push(latency_ms);
            }
            Route::Super => {
                self.super_served += 1;
                self.super_latency.push(latency_ms);
            }
        }
        self.histogram.add(score);
    }

    pub(crate) fn record_failure(&mut self) {
        self.failed += 1;
    }

    pub(crate) fn snapshot(&self, threshold: f64) -> GatewayMetrics {
        let total = self.swift_served + self.super_served;
        GatewayMetrics {
            total_requests: total,
            swift_served: self.swift_served,
            super_served: self.super_served,
            failed_requests: self.failed,
            swift_ratio: if total == 0 {
                0.0
            } else {
                self.swift_served as f64 / total as f64
            },
            swift_latency_ms: self.swift_latency.summary(),
            super_latency_ms: self.super_latency.summary(),
            current_threshold: threshold,
            score_histogram: self.histogram.clone(),
        }
    }
}
