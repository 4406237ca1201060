//! Reference evaluations used only by tests. They rely on std's math
//! routines and Neumaier-compensated sums, never on the crate under test.

#![allow(dead_code)]

/// Neumaier compensated sum of the values, summed in ascending order.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in sorted {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `(max, gaps)` where `gaps` holds `max - x_i` for every entry but one
/// maximal one.
fn gaps(logits: &[f64]) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let skip = logits.iter().position(|&v| v == max).unwrap();
    let gaps = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != skip)
        .map(|(_, &v)| max - v)
        .collect();
    (max, gaps)
}

pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let (max, gaps) = gaps(logits);
    let tail: Vec<f64> = gaps.iter().map(|d| (-d).exp()).collect();
    max + compensated_sum(&tail).ln_1p()
}

pub fn max_softmax(logits: &[f64]) -> f64 {
    let (_, gaps) = gaps(logits);
    let tail: Vec<f64> = gaps.iter().map(|d| (-d).exp()).collect();
    (-compensated_sum(&tail).ln_1p()).exp()
}

/// Entropy through the internal-energy identity `H = U - F`: after shifting
/// by the max logit, `H = ln(1 + T) + sum_i d_i e^{-d_i} / (1 + T)`, a sum of
/// non-negative terms.
pub fn entropy(logits: &[f64]) -> f64 {
    let (_, gaps) = gaps(logits);
    let tail: Vec<f64> = gaps.iter().map(|d| (-d).exp()).collect();
    let t = compensated_sum(&tail);
    let weighted: Vec<f64> = gaps.iter().zip(&tail).map(|(d, e)| d * e).collect();
    t.ln_1p() + compensated_sum(&weighted) / (1.0 + t)
}

/// Relative error with the denominator floored at the smallest normal f64.
pub fn rel_err(value: f64, reference: f64) -> f64 {
    (value - reference).abs() / reference.abs().max(f64::MIN_POSITIVE)
}
