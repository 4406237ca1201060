//! A single linear layer on frozen Swift-encoder features, trained as a plain
//! softmax classifier. Its logits feed the same negative-free-energy score as
//! the decoder logits, so routing can happen before the Swift decoder runs.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::record::{Dataset, Prediction, TaskKind};
use crate::scoring::neg_free_energy;

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyHead {
    /// `C x D`, row-major.
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl EnergyHead {
    pub fn zeros(num_classes: usize, feature_dim: usize) -> Self {
        EnergyHead {
            weights: vec![vec![0.0; feature_dim]; num_classes],
            bias: vec![0.0; num_classes],
        }
    }

    pub fn from_parts(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("head has no classes"));
        }
        if bias.len() != weights.len() {
            return Err(Error::Dimension {
                expected: weights.len(),
                found: bias.len(),
            });
        }
        let d = weights[0].len();
        if let Some(row) = weights.iter().find(|r| r.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                found: row.len(),
            });
        }
        if weights
            .iter()
            .flatten()
            .chain(&bias)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite {
                what: "head parameters",
            });
        }
        Ok(EnergyHead { weights, bias })
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// `W x + b`.
    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.feature_dim() {
            return Err(Error::Dimension {
                expected: self.feature_dim(),
                found: features.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| dot(row, features) + b)
            .collect())
    }

    /// Negative free energy of the head logits.
    pub fn energy_score(&self, features: &[f64]) -> Result<f64> {
        neg_free_energy(&self.logits(features)?)
    }

    pub fn predict(&self, features: &[f64]) -> Result<usize> {
        let logits = self.logits(features)?;
        Ok(argmax(&logits))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    /// Seeds batch shuffling only; parameters always start at zero.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 100,
            batch_size: 32,
            l2: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::InvalidConfig("l2 must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Full-data objective before the first update.
    pub initial_loss: f64,
    /// Full-data objective after each epoch.
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    pub train_accuracy: f64,
    /// Epochs rolled back because they increased the loss.
    pub step_halvings: usize,
}

/// Gradient of [`objective`] with respect to the weights and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Mean softmax cross-entropy of `head` over `(features, labels)` plus
/// `l2/2 * ||W||^2`.
pub fn objective(head: &EnergyHead, features: &[&[f64]], labels: &[usize], l2: f64) -> Result<f64> {
    Ok(objective_and_gradient(head, features, labels, l2)?.0)
}

/// The objective and its analytic gradient. The logit gradient of the
/// cross-entropy is `softmax(z) - onehot(y)`.
pub fn objective_and_gradient(
    head: &EnergyHead,
    features: &[&[f64]],
    labels: &[usize],
    l2: f64,
) -> Result<(f64, Gradient)> {
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: features.len(),
            found: labels.len(),
        });
    }
    if features.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    let c = head.num_classes();
    let mut grad = Gradient {
        weights: vec![vec![0.0; head.feature_dim()]; c],
        bias: vec![0.0; c],
    };
    let mut loss = 0.0;
    let scale = 1.0 / features.len() as f64;
    for (x, &y) in features.iter().zip(labels) {
        if y >= c {
            return Err(Error::InvalidConfig(format!(
                "label {y} out of range for C={c}"
            )));
        }
        let z = head.logits(x)?;
        let lse = neg_free_energy(&z)?;
        loss += lse - z[y];
        for (k, zk) in z.iter().enumerate() {
            let delta = (libm::exp(zk - lse) - (k == y) as u8 as f64) * scale;
            grad.bias[k] += delta;
            for (g, xi) in grad.weights[k].iter_mut().zip(x.iter()) {
                *g += delta * xi;
            }
        }
    }
    loss *= scale;
    if l2 > 0.0 {
        let mut norm = 0.0;
        for (g_row, w_row) in grad.weights.iter_mut().zip(&head.weights) {
            for (g, w) in g_row.iter_mut().zip(w_row) {
                *g += l2 * w;
                norm += w * w;
            }
        }
        loss += 0.5 * l2 * norm;
    }
    Ok((loss, grad))
}

fn apply(head: &mut EnergyHead, grad: &Gradient, lr: f64) {
    for (w_row, g_row) in head.weights.iter_mut().zip(&grad.weights) {
        for (w, g) in w_row.iter_mut().zip(g_row) {
            *w -= lr * g;
        }
    }
    for (b, g) in head.bias.iter_mut().zip(&grad.bias) {
        *b -= lr * g;
    }
}

/// Trains a head on the dataset's encoder features and gold labels by
/// mini-batch gradient descent from zero-initialized parameters.
///
/// After every epoch the full-data objective is evaluated; an epoch that
/// increases it is rolled back and the learning rate halved, so the reported
/// per-epoch losses never increase.
pub fn train_head(dataset: &Dataset, config: &TrainConfig) -> Result<(EnergyHead, TrainReport)> {
    config.validate()?;
    if dataset.task_kind() != TaskKind::Classification {
        return Err(Error::InvalidConfig(
            "energy-head training needs a classification dataset".into(),
        ));
    }
    let mut features = Vec::with_capacity(dataset.len());
    let mut labels = Vec::with_capacity(dataset.len());
    for (index, r) in dataset.records().iter().enumerate() {
        features.push(
            r.encoder_features
                .as_deref()
                .ok_or(Error::MissingFeatures { index })?,
        );
        match r.label {
            Some(Prediction::Label(l)) => labels.push(l as usize),
            _ => return Err(Error::MissingLabel { index }),
        }
    }
    train_on(&features, &labels, dataset.num_classes(), config)
}

/// [`train_head`] over raw `(features, labels)` slices.
pub fn train_on(
    features: &[&[f64]],
    labels: &[usize],
    num_classes: usize,
    config: &TrainConfig,
) -> Result<(EnergyHead, TrainReport)> {
    config.validate()?;
    let d = features.first().ok_or(Error::Empty("training set"))?.len();
    if let Some(x) = features.iter().find(|x| x.len() != d) {
        return Err(Error::Dimension {
            expected: d,
            found: x.len(),
        });
    }
    let mut head = EnergyHead::zeros(num_classes, d);
    let initial_loss = objective(&head, features, labels, config.l2)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut batch_x = Vec::with_capacity(config.batch_size);
    let mut batch_y = Vec::with_capacity(config.batch_size);
    let mut learning_rate = config.learning_rate;
    let mut step_halvings = 0;
    let mut best = (head.clone(), initial_loss);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch_x.clear();
            batch_y.clear();
            batch_x.extend(chunk.iter().map(|&i| features[i]));
            batch_y.extend(chunk.iter().map(|&i| labels[i]));
            let (_, grad) = objective_and_gradient(&head, &batch_x, &batch_y, config.l2)?;
            apply(&mut head, &grad, learning_rate);
        }
        let loss = objective(&head, features, labels, config.l2)
            .ok()
            .filter(|l| l.is_finite())
            .ok_or(Error::NonFiniteLoss { epoch })?;
        if loss > best.1 {
            // An epoch that raised the full-data loss is undone and the step halved.
            head.clone_from(&best.0);
            learning_rate *= 0.5;
            step_halvings += 1;
        } else {
            best = (head.clone(), loss);
        }
        epoch_losses.push(best.1);
    }

    let mut correct = 0usize;
    for (x, &y) in features.iter().zip(labels) {
        correct += (head.predict(x)? == y) as usize;
    }
    let report = TrainReport {
        initial_loss,
        final_loss: *epoch_losses.last().expect("epochs >= 1"),
        epoch_losses,
        train_accuracy: correct as f64 / features.len() as f64,
        step_halvings,
    };
    Ok((head, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_logits_examples() {
        let head =
            EnergyHead::from_parts(vec![vec![1.0, 2.0], vec![3.0, 4.0]], vec![0.5, -0.5]).unwrap();
        assert_eq!(head.logits(&[1.0, 1.0]).unwrap(), vec![3.5, 6.5]);
        assert_eq!(head.logits(&[0.0, 0.0]).unwrap(), vec![0.5, -0.5]);

        let eye =
            EnergyHead::from_parts(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0; 2]).unwrap();
        assert_eq!(eye.logits(&[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let head = EnergyHead::zeros(2, 3);
        assert!(matches!(
            head.logits(&[1.0, 2.0]),
            Err(Error::Dimension {
                expected: 3,
                found: 2
            })
        ));
        assert!(EnergyHead::from_parts(vec![vec![1.0], vec![1.0, 2.0]], vec![0.0; 2]).is_err());
        assert!(EnergyHead::from_parts(vec![vec![1.0]], vec![0.0; 2]).is_err());
        assert!(EnergyHead::from_parts(vec![vec![f64::NAN]], vec![0.0]).is_err());
    }

    #[test]
    fn zero_head_scores_ln_c() {
        let head = EnergyHead::zeros(5, 3);
        let s = head.energy_score(&[0.3, -1.0, 2.0]).unwrap();
        assert!((s - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn energy_score_composes() {
        let head = EnergyHead::from_parts(
            vec![vec![0.2, -1.0], vec![0.7, 0.1], vec![0.0, 3.0]],
            vec![0.1, 0.0, -2.0],
        )
        .unwrap();
        let x = [1.5, -0.25];
        assert_eq!(
            head.energy_score(&x).unwrap(),
            neg_free_energy(&head.logits(&x).unwrap()).unwrap()
        );
    }

    #[test]
    fn single_sample_is_memorized() {
        let x = [0.3, -0.8, 1.1];
        let (head, report) = train_on(&[&x], &[2], 4, &TrainConfig::default()).unwrap();
        assert_eq!(head.predict(&x).unwrap(), 2);
        assert_eq!(report.train_accuracy, 1.0);
        assert!((report.initial_loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn huge_learning_rate_reports_non_finite_loss() {
        let xs: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![1e150 * (i as f64 - 10.0), 1.0])
            .collect();
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let labels: Vec<usize> = (0..20).map(|i| (i % 2) as usize).collect();
        let cfg = TrainConfig {
            learning_rate: 1e200,
            epochs: 5,
            ..TrainConfig::default()
        };
        assert!(train_on(&refs, &labels, 2, &cfg).is_err());
    }
}
