//! Seeded synthetic benchmarks with a controllable link between the Swift
//! logit margin and Swift correctness.
//!
//! Each sample is "easy" with probability `easy_fraction`. Easy and hard
//! samples draw a latent confidence `z` from `N(score_separation, 1)` and
//! `N(0, 1)`, and the Swift prediction is correct with probability
//! `swift_accuracy_easy` or `swift_accuracy_hard`. The predicted class leads
//! the runner-up logit by `softplus(z)`. Super correctness is independent,
//! with probability `super_accuracy`. Encoder features, when requested, are
//! the label's prototype scaled by `1 + softplus(z)` plus unit noise.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::record::{Dataset, Prediction, SampleRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_samples: usize,
    pub swift_accuracy_easy: f64,
    pub swift_accuracy_hard: f64,
    pub super_accuracy: f64,
    pub easy_fraction: f64,
    /// Gap between the means of the easy and hard latent margin draws.
    pub score_separation: f64,
    pub seed: u64,
    pub num_classes: usize,
    /// Emit encoder features of this dimension.
    pub feature_dim: Option<usize>,
}

impl Default for SynthSpec {
    /// The reference benchmark: 10k samples, seed 7.
    fn default() -> Self {
        SynthSpec {
            n_samples: 10_000,
            swift_accuracy_easy: 0.97,
            swift_accuracy_hard: 0.55,
            super_accuracy: 0.9,
            easy_fraction: 0.6,
            score_separation: 4.0,
            seed: 7,
            num_classes: 3,
            feature_dim: None,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("swift_accuracy_easy", self.swift_accuracy_easy),
            ("swift_accuracy_hard", self.swift_accuracy_hard),
            ("super_accuracy", self.super_accuracy),
            ("easy_fraction", self.easy_fraction),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be in [0, 1], got {p}"
                )));
            }
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("n_samples must be at least 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(
                "num_classes must be at least 2".into(),
            ));
        }
        if !self.score_separation.is_finite() {
            return Err(Error::NonFinite {
                what: "score_separation",
            });
        }
        if self.feature_dim == Some(0) {
            return Err(Error::InvalidConfig("feature_dim must be positive".into()));
        }
        Ok(())
    }

    /// Expected Swift accuracy under the mixture.
    pub fn expected_swift_accuracy(&self) -> f64 {
        self.easy_fraction * self.swift_accuracy_easy
            + (1.0 - self.easy_fraction) * self.swift_accuracy_hard
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        libm::log1p(libm::exp(x))
    }
}

/// A uniformly drawn class other than `not`.
fn other_class(rng: &mut ChaCha8Rng, num_classes: usize, not: u32) -> u32 {
    let k = rng.random_range(0..num_classes as u32 - 1);
    if k >= not {
        k + 1
    } else {
        k
    }
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let c = spec.num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let prototypes: Option<Vec<Vec<f64>>> = spec.feature_dim.map(|d| {
        (0..c)
            .map(|_| (0..d).map(|_| normal(&mut rng)).collect())
            .collect()
    });

    let mut records = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        let easy = rng.random_bool(spec.easy_fraction);
        let label = rng.random_range(0..c as u32);
        let noise = normal(&mut rng);
        let z = noise + if easy { spec.score_separation } else { 0.0 };

        let swift_ok = rng.random_bool(if easy {
            spec.swift_accuracy_easy
        } else {
            spec.swift_accuracy_hard
        });
        let swift_pred = if swift_ok {
            label
        } else {
            other_class(&mut rng, c, label)
        };
        let super_pred = if rng.random_bool(spec.super_accuracy) {
            label
        } else {
            other_class(&mut rng, c, label)
        };

        let mut logits: Vec<f64> = (0..c).map(|_| 0.5 * normal(&mut rng)).collect();
        let runner_up = logits
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != swift_pred as usize)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        logits[swift_pred as usize] = runner_up + softplus(z);

        let encoder_features = prototypes.as_ref().map(|protos| {
            let scale = 1.0 + softplus(z);
            protos[label as usize]
                .iter()
                .map(|p| p * scale + normal(&mut rng))
                .collect()
        });

        records.push(SampleRecord {
            id: format!("synth-{i}"),
            swift_logits: alloc::vec![logits],
            encoder_features,
            swift_pred: Prediction::Label(swift_pred),
            super_pred: Prediction::Label(super_pred),
            label: Some(Prediction::Label(label)),
        });
    }
    Dataset::new(records)
}
