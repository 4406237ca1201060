mod support;

use elang_core::energy_head::{objective, objective_and_gradient, train_on};
use elang_core::{generate_synthetic, train_head, EnergyHead, SynthSpec, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::suites::{perceptron_separates, separable_2d};

fn as_refs(xs: &[Vec<f64>]) -> Vec<&[f64]> {
    xs.iter().map(Vec::as_slice).collect()
}

#[test]
fn separable_suite_is_learned() {
    let (xs, ys) = separable_2d(500, 1);
    assert!(
        perceptron_separates(&xs, &ys, 10_000).is_some(),
        "suite must be separable"
    );
    let (_, report) = train_on(&as_refs(&xs), &ys, 2, &TrainConfig::default()).unwrap();
    assert!(report.train_accuracy >= 0.99, "{}", report.train_accuracy);
}

#[test]
fn epoch_loss_never_increases() {
    let (xs, ys) = separable_2d(500, 2);
    let (_, report) = train_on(&as_refs(&xs), &ys, 2, &TrainConfig::default()).unwrap();
    let mut prev = report.initial_loss;
    for (epoch, &loss) in report.epoch_losses.iter().enumerate() {
        assert!(loss <= prev + 1e-9, "epoch {epoch}: {loss} > {prev}");
        prev = loss;
    }

    let ds = generate_synthetic(&SynthSpec {
        n_samples: 1000,
        feature_dim: Some(6),
        ..SynthSpec::default()
    })
    .unwrap();
    let (_, report) = train_head(&ds, &TrainConfig::default()).unwrap();
    let mut prev = report.initial_loss;
    for &loss in &report.epoch_losses {
        assert!(loss <= prev + 1e-9, "{:?}", report.epoch_losses);
        prev = loss;
    }
}

#[test]
fn shuffle_seed_barely_matters() {
    let (xs, ys) = separable_2d(500, 3);
    let refs = as_refs(&xs);
    let a = train_on(
        &refs,
        &ys,
        2,
        &TrainConfig {
            seed: 1,
            ..TrainConfig::default()
        },
    )
    .unwrap()
    .1;
    let b = train_on(
        &refs,
        &ys,
        2,
        &TrainConfig {
            seed: 99,
            ..TrainConfig::default()
        },
    )
    .unwrap()
    .1;
    assert!(
        (a.final_loss - b.final_loss).abs() < 1e-3,
        "{} vs {}",
        a.final_loss,
        b.final_loss
    );
}

#[test]
fn initial_loss_is_ln_c() {
    for c in [2usize, 3, 7] {
        let (xs, ys) = separable_2d(50, c as u64);
        let ys: Vec<usize> = ys.iter().enumerate().map(|(i, &y)| (y + i) % c).collect();
        let (_, report) = train_on(
            &as_refs(&xs),
            &ys,
            c,
            &TrainConfig {
                epochs: 1,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        assert!((report.initial_loss - (c as f64).ln()).abs() < 1e-9);
    }
}

/// Central differences with step 1e-5 against the analytic gradient.
fn max_gradient_error(rng: &mut ChaCha8Rng) -> f64 {
    let (c, d, n) = (3, 5, 8);
    let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| rng.random_range(-2.0..2.0)).collect() };
    let weights: Vec<Vec<f64>> = (0..c).map(|_| draw(d)).collect();
    let bias = draw(c);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| draw(d)).collect();
    let l2 = draw(1)[0].abs() * 0.1;
    let ys: Vec<usize> = (0..n).map(|i| (i * 7 + 1) % c).collect();
    let refs = as_refs(&xs);

    let head = EnergyHead::from_parts(weights.clone(), bias.clone()).unwrap();
    let (_, grad) = objective_and_gradient(&head, &refs, &ys, l2).unwrap();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let mut check = |analytic: f64, plus: EnergyHead, minus: EnergyHead| {
        let numeric = (objective(&plus, &refs, &ys, l2).unwrap()
            - objective(&minus, &refs, &ys, l2).unwrap())
            / (2.0 * eps);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
        worst = worst.max(err);
    };
    for k in 0..c {
        for j in 0..d {
            let (mut wp, mut wm) = (weights.clone(), weights.clone());
            wp[k][j] += eps;
            wm[k][j] -= eps;
            check(
                grad.weights[k][j],
                EnergyHead::from_parts(wp, bias.clone()).unwrap(),
                EnergyHead::from_parts(wm, bias.clone()).unwrap(),
            );
        }
        let (mut bp, mut bm) = (bias.clone(), bias.clone());
        bp[k] += eps;
        bm[k] -= eps;
        check(
            grad.bias[k],
            EnergyHead::from_parts(weights.clone(), bp).unwrap(),
            EnergyHead::from_parts(weights.clone(), bm).unwrap(),
        );
    }
    worst
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for draw in 0..100 {
        let err = max_gradient_error(&mut rng);
        assert!(err < 1e-4, "draw {draw}: {err}");
    }
}

#[test]
fn trained_head_scores_correct_samples_higher() {
    let ds = generate_synthetic(&SynthSpec {
        n_samples: 2000,
        feature_dim: Some(8),
        ..SynthSpec::default()
    })
    .unwrap();
    let (head, report) = train_head(&ds, &TrainConfig::default()).unwrap();
    assert!(
        report.train_accuracy < 1.0,
        "need some misclassified samples"
    );
    let (mut right, mut wrong) = (Vec::new(), Vec::new());
    for r in ds.records() {
        let x = r.encoder_features.as_deref().unwrap();
        let s = head.energy_score(x).unwrap();
        let label = match r.label {
            Some(elang_core::Prediction::Label(l)) => l as usize,
            _ => unreachable!(),
        };
        if head.predict(x).unwrap() == label {
            right.push(s)
        } else {
            wrong.push(s)
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(
        mean(&right) > mean(&wrong),
        "{} vs {}",
        mean(&right),
        mean(&wrong)
    );
}

#[test]
fn training_needs_features_and_labels() {
    let ds = generate_synthetic(&SynthSpec {
        n_samples: 20,
        ..SynthSpec::default()
    })
    .unwrap();
    assert!(matches!(
        train_head(&ds, &TrainConfig::default()),
        Err(elang_core::Error::MissingFeatures { index: 0 })
    ));
}
