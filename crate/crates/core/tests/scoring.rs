mod support;

use elang_core::scoring::entropy;
use elang_core::{neg_free_energy, neg_free_energy_seq, softmax_score};
use proptest::prelude::*;
use support::oracle;

/// Logit vectors with entries in `[-scale, scale]`, `scale` up to 1e4.
fn logits() -> impl Strategy<Value = Vec<f64>> {
    (1usize..=64, -3.0f64..4.0).prop_flat_map(|(c, log_scale)| {
        let s = 10f64.powf(log_scale);
        prop::collection::vec(-s..=s, c)
    })
}

/// Entries on a 2^-20 grid so that shifting by grid values is exact.
fn grid_logits() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-(1i64 << 33)..(1i64 << 33), 1..=64).prop_map(|v| {
        v.into_iter()
            .map(|k| k as f64 / (1u64 << 20) as f64)
            .collect()
    })
}

fn grid_shift() -> impl Strategy<Value = f64> {
    (-(1i64 << 33)..(1i64 << 33)).prop_map(|k| k as f64 / (1u64 << 20) as f64)
}

proptest! {
    #[test]
    fn energy_matches_oracle(x in logits()) {
        let v = neg_free_energy(&x).unwrap();
        prop_assert!(oracle::rel_err(v, oracle::log_sum_exp(&x)) <= 1e-9);
    }

    #[test]
    fn softmax_matches_oracle(x in logits()) {
        let v = softmax_score(&x).unwrap();
        prop_assert!(oracle::rel_err(v, oracle::max_softmax(&x)) <= 1e-9);
    }

    #[test]
    fn entropy_matches_oracle(x in logits()) {
        let v = entropy(&x).unwrap();
        prop_assert!(oracle::rel_err(v, oracle::entropy(&x)) <= 1e-9, "{} vs {}", v, oracle::entropy(&x));
    }

    #[test]
    fn energy_sandwich(x in logits()) {
        let v = neg_free_energy(&x).unwrap();
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= max);
        prop_assert!(v <= max + (x.len() as f64).ln() + 1e-12 * max.abs().max(1.0));
    }

    #[test]
    fn bounds(x in logits()) {
        let c = x.len() as f64;
        let p = softmax_score(&x).unwrap();
        prop_assert!(p >= 1.0 / c - 1e-15 && p <= 1.0);
        let h = entropy(&x).unwrap();
        prop_assert!(h >= 0.0 && h <= c.ln() + 1e-12);
    }

    #[test]
    fn shift_behaviour(x in grid_logits(), c in grid_shift()) {
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        prop_assert_eq!(softmax_score(&shifted).unwrap(), softmax_score(&x).unwrap());
        prop_assert_eq!(entropy(&shifted).unwrap(), entropy(&x).unwrap());
        let a = neg_free_energy(&shifted).unwrap();
        let b = neg_free_energy(&x).unwrap() + c;
        prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn seq_energy_is_row_average(rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 7), 1..=32)) {
        let v = neg_free_energy_seq(&rows).unwrap();
        let per_row: Vec<f64> = rows.iter().map(|r| oracle::log_sum_exp(r)).collect();
        let avg = oracle::compensated_sum(&per_row) / rows.len() as f64;
        prop_assert!((v - avg).abs() <= 1e-12 * avg.abs().max(1.0));
        if rows.len() == 1 {
            prop_assert_eq!(v, neg_free_energy(&rows[0]).unwrap());
        }
    }
}
