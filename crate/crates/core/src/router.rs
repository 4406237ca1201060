//! Joint inference over a scored dataset: records scoring at or above the
//! threshold keep the Swift prediction, the rest take the Super prediction.
//!
//! Cost is the usage-weighted FLOPs average. Every input pays for the Swift
//! encoder and the energy head (they produce the score); Swift-routed inputs
//! add the Swift decoder, Super-routed inputs add the full Super model.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::record::{Dataset, Prediction};

/// Energy-head cost used when none is given: negligible next to either model.
pub const DEFAULT_HEAD_FLOPS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub flops_super: f64,
    pub flops_swift_encoder: f64,
    pub flops_swift_decoder: f64,
    pub flops_head: f64,
    /// Mean wall-clock latency per input, milliseconds.
    pub latency_super: Option<f64>,
    pub latency_swift: Option<f64>,
}

impl CostModel {
    pub fn new(flops_super: f64, flops_swift_encoder: f64, flops_swift_decoder: f64) -> Self {
        CostModel {
            flops_super,
            flops_swift_encoder,
            flops_swift_decoder,
            flops_head: DEFAULT_HEAD_FLOPS,
            latency_super: None,
            latency_swift: None,
        }
    }

    pub fn with_head(mut self, flops_head: f64) -> Self {
        self.flops_head = flops_head;
        self
    }

    pub fn with_latency(mut self, swift_ms: f64, super_ms: f64) -> Self {
        self.latency_swift = Some(swift_ms);
        self.latency_super = Some(super_ms);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            Some(self.flops_super),
            Some(self.flops_swift_encoder),
            Some(self.flops_swift_decoder),
            Some(self.flops_head),
            self.latency_super,
            self.latency_swift,
        ];
        if all.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidConfig(
                "cost model entries must be finite and non-negative".into(),
            ));
        }
        if self.flops_super <= self.flops_swift_encoder + self.flops_swift_decoder {
            return Err(Error::InvalidConfig(format!(
                "Super FLOPs {} must exceed Swift FLOPs {}",
                self.flops_super,
                self.flops_swift_encoder + self.flops_swift_decoder
            )));
        }
        Ok(())
    }

    /// Cost of an input served by the Swift model.
    pub fn swift_path(&self) -> f64 {
        self.flops_swift_encoder + self.flops_head + self.flops_swift_decoder
    }

    /// Cost of an input escalated to the Super model.
    pub fn super_path(&self) -> f64 {
        self.flops_swift_encoder + self.flops_head + self.flops_super
    }
}

/// Usage-weighted mean FLOPs per input:
/// `(n_swift * swift_path + n_super * super_path) / (n_swift + n_super)`.
pub fn expected_flops(n_swift: usize, n_super: usize, cost: &CostModel) -> Result<f64> {
    let n = n_swift + n_super;
    if n == 0 {
        return Err(Error::Empty("no inputs to average cost over"));
    }
    // Written as swift + share * (super - swift), which equals the weighted
    // average but is exact at both ends and monotone in `n_super`.
    let (swift, sup) = (cost.swift_path(), cost.super_path());
    Ok(match (n_swift, n_super) {
        (_, 0) => swift,
        (0, _) => sup,
        _ => (swift + (n_super as f64 / n as f64) * (sup - swift)).min(sup),
    })
}

/// Speed-up of the joint system over always running the Super model.
pub fn flops_speedup(expected: f64, cost: &CostModel) -> f64 {
    cost.flops_super / expected
}

/// Latency speed-up from measured per-model means. Escalated inputs pay the
/// Swift latency too, since the Swift pass produced their score.
pub fn latency_speedup(n_swift: usize, n_super: usize, cost: &CostModel) -> Option<f64> {
    let (swift, sup) = (cost.latency_swift?, cost.latency_super?);
    let n = (n_swift + n_super) as f64;
    let mean = (n_swift as f64 * swift + n_super as f64 * (swift + sup)) / n;
    Some(sup / mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Route {
    Swift,
    Super,
}

impl Route {
    /// The joint inference rule; ties go to the Swift model.
    #[inline]
    pub fn for_score(score: f64, threshold: f64) -> Route {
        if score >= threshold {
            Route::Swift
        } else {
            Route::Super
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Route::Swift => "swift",
            Route::Super => "super",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingDecision {
    pub record_id: String,
    pub score: f64,
    pub route: Route,
    pub emitted_pred: Prediction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingReport {
    pub threshold: f64,
    pub n_swift: usize,
    pub n_super: usize,
    pub swift_ratio: f64,
    /// Over labeled records only; `None` when nothing is labeled.
    pub accuracy: Option<f64>,
    pub expected_flops: f64,
    pub flops_speedup: f64,
    pub latency_speedup: Option<f64>,
}

impl RoutingReport {
    /// Builds the aggregate statistics from counts.
    pub fn from_counts(
        threshold: f64,
        n_swift: usize,
        n_super: usize,
        accuracy: Option<f64>,
        cost: &CostModel,
    ) -> Result<Self> {
        let expected = expected_flops(n_swift, n_super, cost)?;
        Ok(RoutingReport {
            threshold,
            n_swift,
            n_super,
            swift_ratio: n_swift as f64 / (n_swift + n_super) as f64,
            accuracy,
            expected_flops: expected,
            flops_speedup: flops_speedup(expected, cost),
            latency_speedup: latency_speedup(n_swift, n_super, cost),
        })
    }
}

/// Routes every record at `threshold`. `scores[i]` belongs to record `i`.
pub fn route_dataset(
    dataset: &Dataset,
    scores: &[f64],
    threshold: f64,
    cost: &CostModel,
) -> Result<(Vec<RoutingDecision>, RoutingReport)> {
    check_inputs(dataset, scores, threshold, cost)?;
    let mut decisions = Vec::with_capacity(dataset.len());
    let (mut n_swift, mut labeled, mut correct) = (0usize, 0usize, 0usize);
    for (record, &score) in dataset.records().iter().zip(scores) {
        let route = Route::for_score(score, threshold);
        let emitted = match route {
            Route::Swift => {
                n_swift += 1;
                &record.swift_pred
            }
            Route::Super => &record.super_pred,
        };
        if let Some(label) = &record.label {
            labeled += 1;
            correct += (label == emitted) as usize;
        }
        decisions.push(RoutingDecision {
            record_id: record.id.clone(),
            score,
            route,
            emitted_pred: emitted.clone(),
        });
    }
    let accuracy = (labeled > 0).then(|| correct as f64 / labeled as f64);
    let report =
        RoutingReport::from_counts(threshold, n_swift, dataset.len() - n_swift, accuracy, cost)?;
    Ok((decisions, report))
}

pub(crate) fn check_inputs(
    dataset: &Dataset,
    scores: &[f64],
    threshold: f64,
    cost: &CostModel,
) -> Result<()> {
    if scores.len() != dataset.len() {
        return Err(Error::LengthMismatch {
            expected: dataset.len(),
            found: scores.len(),
        });
    }
    if threshold.is_nan() {
        return Err(Error::NonFinite { what: "threshold" });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite { what: "scores" });
    }
    cost.validate()
}
