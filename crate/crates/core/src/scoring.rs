//! Routing scores computed from Swift logits.
//!
//! Every score shares one orientation: a higher value means the input is a
//! better fit for the Swift model, so a single `score >= threshold` rule
//! routes under any kind. Entropy is therefore returned negated.
//!
//! All log-sum-exp evaluations shift by the maximum logit and fold the
//! maximal term into `ln_1p`, so neither overflow nor cancellation occurs for
//! saturated distributions.

use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy_head::EnergyHead;
use crate::error::{Error, Result};
use crate::record::{Dataset, SampleRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    /// Negative free energy of the Swift logits, averaged over positions.
    Energy,
    /// Negative free energy of a linear head on the encoder features.
    EnergyHead,
    /// Maximum softmax probability.
    Softmax,
    /// Negated Shannon entropy of the softmax distribution.
    Entropy,
    /// Uniform in `[0, 1)`, keyed by `(seed, record index)`.
    Random { seed: u64 },
}

impl ScoreKind {
    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Energy => "energy",
            ScoreKind::EnergyHead => "energy-head",
            ScoreKind::Softmax => "softmax",
            ScoreKind::Entropy => "entropy",
            ScoreKind::Random { .. } => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    pub kind: ScoreKind,
}

/// Max-shifted pieces of a logit vector: `max`, the index of the (first)
/// maximum, and `tail = sum_{i != argmax} exp(logit_i - max)`.
struct Shifted {
    max: f64,
    argmax: usize,
    tail: f64,
}

fn shift(logits: &[f64]) -> Result<Shifted> {
    if logits.is_empty() {
        return Err(Error::Empty("logit vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "logits" });
    }
    let (argmax, max) = logits
        .iter()
        .copied()
        .enumerate()
        .fold(
            (0, logits[0]),
            |best, (i, v)| if v > best.1 { (i, v) } else { best },
        );
    let tail = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != argmax)
        .map(|(_, &v)| libm::exp(v - max))
        .sum();
    Ok(Shifted { max, argmax, tail })
}

/// `log sum_i exp(logit_i)`, i.e. the negative free energy `-F(x; f)`.
pub fn neg_free_energy(logits: &[f64]) -> Result<f64> {
    let s = shift(logits)?;
    Ok(s.max + libm::log1p(s.tail))
}

/// Mean of the per-position negative free energies of an `M x C` logit
/// matrix. For `M = 1` this is exactly [`neg_free_energy`] of the single row.
pub fn neg_free_energy_seq(logits: &[Vec<f64>]) -> Result<f64> {
    mean_over_rows(logits, neg_free_energy)
}

/// Maximum softmax probability, in `[1/C, 1]`.
pub fn softmax_score(logits: &[f64]) -> Result<f64> {
    let s = shift(logits)?;
    Ok(1.0 / (1.0 + s.tail))
}

/// Shannon entropy (nats) of `softmax(logits)`, in `[0, ln C]`, with
/// `0 ln 0 = 0`.
pub fn entropy(logits: &[f64]) -> Result<f64> {
    let s = shift(logits)?;
    let log_z = libm::log1p(s.tail);
    let mut h = 0.0;
    for (i, &v) in logits.iter().enumerate() {
        // -ln p_i, exact for the argmax term
        let surprisal = if i == s.argmax {
            log_z
        } else {
            (s.max - v) + log_z
        };
        let p = libm::exp(-surprisal);
        if p > 0.0 {
            h += p * surprisal;
        }
    }
    Ok(h)
}

/// `-entropy(logits)`, oriented so that confident outputs score higher.
pub fn entropy_score(logits: &[f64]) -> Result<f64> {
    entropy(logits).map(|h| -h)
}

/// Uniform draw in `[0, 1)` that depends only on `(seed, index)`.
pub fn random_score(seed: u64, index: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn mean_over_rows(logits: &[Vec<f64>], score: fn(&[f64]) -> Result<f64>) -> Result<f64> {
    match logits {
        [] => Err(Error::Empty("logit matrix has no positions")),
        [row] => score(row),
        rows => {
            let mut total = 0.0;
            for row in rows {
                total += score(row)?;
            }
            Ok(total / rows.len() as f64)
        }
    }
}

/// Scores one record. `index` is the record's position in its dataset (used
/// only by [`ScoreKind::Random`]); `head` is required for
/// [`ScoreKind::EnergyHead`].
pub fn score_record(
    record: &SampleRecord,
    index: usize,
    kind: ScoreKind,
    head: Option<&EnergyHead>,
) -> Result<Score> {
    let value = score_logits(
        &record.swift_logits,
        record.encoder_features.as_deref(),
        index,
        kind,
        head,
    )?;
    Ok(Score { value, kind })
}

/// Scores raw Swift outputs: an `M x C` logit matrix and, for
/// [`ScoreKind::EnergyHead`], the pooled encoder features.
pub fn score_logits(
    logits: &[Vec<f64>],
    features: Option<&[f64]>,
    index: usize,
    kind: ScoreKind,
    head: Option<&EnergyHead>,
) -> Result<f64> {
    match kind {
        ScoreKind::Energy => neg_free_energy_seq(logits),
        ScoreKind::EnergyHead => {
            let head = head.ok_or_else(|| {
                Error::InvalidConfig("energy-head scoring needs a trained head".into())
            })?;
            head.energy_score(features.ok_or(Error::MissingFeatures { index })?)
        }
        ScoreKind::Softmax => mean_over_rows(logits, softmax_score),
        ScoreKind::Entropy => mean_over_rows(logits, entropy_score),
        ScoreKind::Random { seed } => Ok(random_score(seed, index as u64)),
    }
}

/// Scores every record of a dataset, in record order.
pub fn score_dataset(
    dataset: &Dataset,
    kind: ScoreKind,
    head: Option<&EnergyHead>,
) -> Result<Vec<f64>> {
    if kind == ScoreKind::EnergyHead {
        if let (Some(h), Some(d)) = (head, dataset.feature_dim()) {
            if h.feature_dim() != d {
                return Err(Error::Dimension {
                    expected: h.feature_dim(),
                    found: d,
                });
            }
        }
    }
    dataset
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| score_record(r, i, kind, head).map(|s| s.value))
        .collect()
}
