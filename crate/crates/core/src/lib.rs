//! Energy-based joint inference between a small, fast "Swift" model and a
//! large, accurate "Super" model.
//!
//! Each input is scored from the Swift model's outputs (by default the
//! negative free energy `log sum exp(logits)`). Inputs scoring at or above a
//! threshold keep the Swift prediction; the rest are escalated to the Super
//! model. This crate holds the pure parts: record types and validation,
//! scorers, the energy head, the router with its FLOPs accounting, and
//! threshold calibration. It is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;

pub mod calibration;
pub mod energy_head;
mod error;
pub mod record;
pub mod router;
pub mod scoring;
pub mod synth;

pub use calibration::{
    crossing_point_threshold, sweep, threshold_for_accuracy, threshold_for_budget,
    ScoreHistogramPair, TradeoffCurve,
};
pub use energy_head::{train_head, EnergyHead, TrainConfig, TrainReport};
pub use error::{Error, Result};
pub use record::{Dataset, Prediction, SampleRecord, TaskKind};
pub use router::{expected_flops, route_dataset, CostModel, Route, RoutingDecision, RoutingReport};
pub use scoring::{
    entropy_score, neg_free_energy, neg_free_energy_seq, score_dataset, score_logits, score_record,
    softmax_score, Score, ScoreKind,
};
pub use synth::{generate_synthetic, SynthSpec};
