//! Generated test suites shared by the integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 2-class, 2-D points in `[-5, 5]^2` labeled by the side of a fixed line,
/// keeping only points at distance >= 0.5 from it (class gap >= 1).
pub fn separable_2d(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let (w, b) = ([0.8, -0.6], 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut xs, mut ys) = (Vec::with_capacity(n), Vec::with_capacity(n));
    while xs.len() < n {
        let x: [f64; 2] = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let side = w[0] * x[0] + w[1] * x[1] + b;
        if side.abs() >= 0.5 {
            xs.push(x.to_vec());
            ys.push((side > 0.0) as usize);
        }
    }
    (xs, ys)
}

/// Classic perceptron; `Some(epochs)` once a full pass makes no mistake.
pub fn perceptron_separates(xs: &[Vec<f64>], ys: &[usize], max_epochs: usize) -> Option<usize> {
    let d = xs[0].len();
    let mut w = vec![0.0; d + 1];
    for epoch in 1..=max_epochs {
        let mut mistakes = 0;
        for (x, &y) in xs.iter().zip(ys) {
            let target = if y == 1 { 1.0 } else { -1.0 };
            let act: f64 = w[d] + x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            if act * target <= 0.0 {
                mistakes += 1;
                for (wi, xi) in w.iter_mut().zip(x) {
                    *wi += target * xi;
                }
                w[d] += target;
            }
        }
        if mistakes == 0 {
            return Some(epoch);
        }
    }
    None
}
