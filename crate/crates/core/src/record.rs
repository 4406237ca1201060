//! Recorded model outputs: one [`SampleRecord`] per input, grouped into a
//! validated [`Dataset`].
//!
//! A record carries everything needed to score and route one input offline:
//! the Swift model's logits (one row per output position), optionally the
//! pooled encoder features the energy head consumes, the two models'
//! predictions and, when available, the gold label.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A model prediction: a class id for classifiers, a token-id sequence for
/// text-to-text models. Sequence correctness is exact match.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Prediction {
    Label(u32),
    Sequence(Vec<u32>),
}

impl Prediction {
    pub fn is_sequence(&self) -> bool {
        matches!(self, Prediction::Sequence(_))
    }
}

impl From<u32> for Prediction {
    fn from(label: u32) -> Self {
        Prediction::Label(label)
    }
}

impl From<Vec<u32>> for Prediction {
    fn from(tokens: Vec<u32>) -> Self {
        Prediction::Sequence(tokens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Classification,
    Seq2Seq,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Classification => "classification",
            TaskKind::Seq2Seq => "seq2seq",
        }
    }
}

impl core::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(TaskKind::Classification),
            "seq2seq" => Ok(TaskKind::Seq2Seq),
            other => Err(Error::InvalidConfig(format!("unknown task kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    /// `M x C` Swift logits; `M = 1` for classification.
    pub swift_logits: Vec<Vec<f64>>,
    /// Pooled last-hidden-state of the Swift encoder. Pooling is the
    /// exporter's business.
    pub encoder_features: Option<Vec<f64>>,
    pub swift_pred: Prediction,
    pub super_pred: Prediction,
    pub label: Option<Prediction>,
}

impl SampleRecord {
    pub fn num_positions(&self) -> usize {
        self.swift_logits.len()
    }

    pub fn num_classes(&self) -> usize {
        self.swift_logits.first().map_or(0, Vec::len)
    }

    pub fn is_seq2seq(&self) -> bool {
        self.swift_logits.len() > 1
            || self.swift_pred.is_sequence()
            || self.super_pred.is_sequence()
            || self.label.as_ref().is_some_and(Prediction::is_sequence)
    }

    /// `Some(true)` when the Swift prediction matches the gold label.
    pub fn swift_correct(&self) -> Option<bool> {
        self.label.as_ref().map(|l| *l == self.swift_pred)
    }

    pub fn super_correct(&self) -> Option<bool> {
        self.label.as_ref().map(|l| *l == self.super_pred)
    }

    /// Checks the per-record invariants; `index` is used in error messages.
    pub fn validate(&self, index: usize) -> Result<()> {
        let bad = |message: String| Error::InvalidRecord { index, message };
        if self.swift_logits.is_empty() {
            return Err(bad("swift_logits has no rows".into()));
        }
        let c = self.num_classes();
        if c == 0 {
            return Err(bad("swift_logits rows are empty".into()));
        }
        for (m, row) in self.swift_logits.iter().enumerate() {
            if row.len() != c {
                return Err(Error::Shape {
                    index,
                    message: format!("row {m} has {} logits, row 0 has {c}", row.len()),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Value {
                    index,
                    message: format!("non-finite logit in row {m}"),
                });
            }
        }
        if let Some(features) = &self.encoder_features {
            if features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Value {
                    index,
                    message: "non-finite encoder feature".into(),
                });
            }
        }
        if !self.is_seq2seq() {
            let classes = [
                Some(&self.swift_pred),
                Some(&self.super_pred),
                self.label.as_ref(),
            ];
            for p in classes.into_iter().flatten() {
                if let Prediction::Label(l) = p {
                    if *l as usize >= c {
                        return Err(bad(format!("class id {l} out of range for C={c}")));
                    }
                }
            }
            if let Prediction::Label(pred) = self.swift_pred {
                let row = &self.swift_logits[0];
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if row[pred as usize] != max {
                    return Err(bad(format!(
                        "swift_pred {pred} is not the argmax of swift_logits"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A non-empty, shape-homogeneous collection of records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<SampleRecord>,
    num_classes: usize,
    feature_dim: Option<usize>,
    task_kind: TaskKind,
}

impl Dataset {
    /// Validates every record and the cross-record invariants. Errors carry
    /// the zero-based index of the first offending record.
    pub fn new(records: Vec<SampleRecord>) -> Result<Self> {
        let first = records
            .first()
            .ok_or(Error::Empty("dataset has no records"))?;
        let num_classes = first.num_classes();
        let feature_dim = first.encoder_features.as_ref().map(Vec::len);
        let mut seq2seq = false;
        for (index, record) in records.iter().enumerate() {
            record.validate(index)?;
            if record.num_classes() != num_classes {
                return Err(Error::Shape {
                    index,
                    message: format!(
                        "C={} but the dataset has C={num_classes}",
                        record.num_classes()
                    ),
                });
            }
            let dim = record.encoder_features.as_ref().map(Vec::len);
            if dim != feature_dim {
                return Err(Error::Shape {
                    index,
                    message: format!(
                        "feature dimension {dim:?} but the dataset has {feature_dim:?}"
                    ),
                });
            }
            seq2seq |= record.is_seq2seq();
        }
        let task_kind = if seq2seq {
            TaskKind::Seq2Seq
        } else {
            TaskKind::Classification
        };
        Ok(Dataset {
            records,
            num_classes,
            feature_dim,
            task_kind,
        })
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<SampleRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.feature_dim
    }

    pub fn task_kind(&self) -> TaskKind {
        self.task_kind
    }

    /// Fraction of labeled records the Swift model gets right.
    pub fn swift_accuracy(&self) -> Option<f64> {
        accuracy(self.records.iter().filter_map(SampleRecord::swift_correct))
    }

    pub fn super_accuracy(&self) -> Option<f64> {
        accuracy(self.records.iter().filter_map(SampleRecord::super_correct))
    }
}

fn accuracy(hits: impl Iterator<Item = bool>) -> Option<f64> {
    let (n, correct) = hits.fold((0usize, 0usize), |(n, c), hit| (n + 1, c + hit as usize));
    (n > 0).then(|| correct as f64 / n as f64)
}
