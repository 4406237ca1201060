//! Threshold selection.
//!
//! [`sweep`] evaluates the router at every threshold of a grid and yields the
//! accuracy/FLOPs trade-off curve. [`crossing_point_threshold`] picks the
//! score where the prevalence-weighted densities of Swift-correct and
//! Swift-incorrect samples meet. [`threshold_for_budget`] and
//! [`threshold_for_accuracy`] invert a curve.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::record::Dataset;
use crate::router::{check_inputs, CostModel, RoutingReport};

/// One routed report per grid threshold, sorted by threshold ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffCurve {
    pub points: Vec<RoutingReport>,
}

impl TradeoffCurve {
    /// The all-Swift end (lowest threshold).
    pub fn first(&self) -> &RoutingReport {
        &self.points[0]
    }

    /// The all-Super end (highest threshold).
    pub fn last(&self) -> &RoutingReport {
        self.points.last().expect("curves are non-empty")
    }

    /// Trapezoidal area under accuracy as a function of swift ratio, over the
    /// ratios the curve covers. `None` without labels.
    pub fn accuracy_area(&self) -> Option<f64> {
        let mut pts: Vec<(f64, f64)> = self
            .points
            .iter()
            .map(|p| p.accuracy.map(|a| (p.swift_ratio, a)))
            .collect::<Option<_>>()?;
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| a.0 == b.0);
        Some(
            pts.windows(2)
                .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
                .sum(),
        )
    }
}

/// The default grid: every distinct score plus the two sentinels. The curve
/// is piecewise constant between observed scores, so nothing is lost.
pub fn default_grid(scores: &[f64]) -> Vec<f64> {
    let mut grid = Vec::with_capacity(scores.len() + 2);
    grid.push(f64::NEG_INFINITY);
    grid.extend_from_slice(scores);
    grid.push(f64::INFINITY);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Routes the dataset at every threshold of `grid` (default: [`default_grid`]).
///
/// Runs in `O((n + g) log n)`: records are sorted by score once and each
/// threshold is resolved by binary search over prefix counts.
pub fn sweep(
    dataset: &Dataset,
    scores: &[f64],
    cost: &CostModel,
    grid: Option<&[f64]>,
) -> Result<TradeoffCurve> {
    check_inputs(dataset, scores, 0.0, cost)?;
    let mut grid = match grid {
        Some(g) => g.to_vec(),
        None => default_grid(scores),
    };
    if grid.is_empty() {
        return Err(Error::Empty("threshold grid"));
    }
    if grid.iter().any(|t| t.is_nan()) {
        return Err(Error::NonFinite {
            what: "threshold grid",
        });
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    // Records by score, highest first: a threshold routes a prefix to Swift.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let descending: Vec<f64> = order.iter().map(|&i| scores[i]).collect();

    let n = scores.len();
    // swift_hits[k] / super_hits[k]: correct predictions among the top k.
    let mut swift_hits = Vec::with_capacity(n + 1);
    let mut super_hits = Vec::with_capacity(n + 1);
    swift_hits.push(0usize);
    super_hits.push(0usize);
    let mut labeled = 0usize;
    for &i in &order {
        let r = &dataset.records()[i];
        labeled += r.label.is_some() as usize;
        swift_hits.push(swift_hits.last().unwrap() + r.swift_correct().unwrap_or(false) as usize);
        super_hits.push(super_hits.last().unwrap() + r.super_correct().unwrap_or(false) as usize);
    }
    let super_total = super_hits[n];

    let points = grid
        .into_iter()
        .map(|t| {
            let k = descending.partition_point(|&s| s >= t);
            let accuracy = (labeled > 0)
                .then(|| (swift_hits[k] + super_total - super_hits[k]) as f64 / labeled as f64);
            RoutingReport::from_counts(t, k, n - k, accuracy, cost)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TradeoffCurve { points })
}

/// Largest-cost curve point within `flops_budget`, i.e. the one that uses the
/// Super model most. Among equal-cost points the lowest threshold wins, so a
/// budget equal to the all-Swift cost yields `-inf`.
pub fn threshold_for_budget(curve: &TradeoffCurve, flops_budget: f64) -> Result<f64> {
    if flops_budget.is_nan() {
        return Err(Error::NonFinite { what: "budget" });
    }
    let best = curve
        .points
        .iter()
        .filter(|p| p.expected_flops <= flops_budget)
        .map(|p| p.expected_flops)
        .fold(None, |acc: Option<f64>, f| {
            Some(acc.map_or(f, |a| a.max(f)))
        })
        .ok_or_else(|| {
            Error::Infeasible(format!(
                "budget {flops_budget} is below the cheapest curve point {}",
                curve.first().expected_flops
            ))
        })?;
    Ok(curve
        .points
        .iter()
        .find(|p| p.expected_flops == best)
        .expect("best is attained")
        .threshold)
}

/// Cheapest curve point whose accuracy reaches `target`; lowest threshold
/// among equal-cost points.
pub fn threshold_for_accuracy(curve: &TradeoffCurve, target: f64) -> Result<f64> {
    if target.is_nan() {
        return Err(Error::NonFinite {
            what: "accuracy target",
        });
    }
    if curve.points.iter().any(|p| p.accuracy.is_none()) {
        return Err(Error::InvalidConfig(
            "accuracy targets need a labeled dataset".into(),
        ));
    }
    let reaching = || {
        curve
            .points
            .iter()
            .filter(|p| p.accuracy.unwrap() >= target)
    };
    let best = reaching()
        .map(|p| p.expected_flops)
        .fold(None, |acc: Option<f64>, f| {
            Some(acc.map_or(f, |a| a.min(f)))
        })
        .ok_or_else(|| {
            let top = curve
                .points
                .iter()
                .filter_map(|p| p.accuracy)
                .fold(f64::NEG_INFINITY, f64::max);
            Error::Infeasible(format!(
                "accuracy {target} is unreachable; the curve peaks at {top}"
            ))
        })?;
    Ok(reaching()
        .find(|p| p.expected_flops == best)
        .unwrap()
        .threshold)
}

/// Scores split by whether the Swift prediction was right.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreHistogramPair {
    /// Swift-correct samples.
    pub group_a: Vec<f64>,
    /// Swift-incorrect samples.
    pub group_b: Vec<f64>,
    /// Kernel bandwidth for both groups; Silverman's rule per group when unset.
    pub kde_bandwidth: Option<f64>,
    /// Density weights; group prevalence when unset.
    pub weights: Option<(f64, f64)>,
}

impl ScoreHistogramPair {
    pub fn new(group_a: Vec<f64>, group_b: Vec<f64>) -> Self {
        ScoreHistogramPair {
            group_a,
            group_b,
            kde_bandwidth: None,
            weights: None,
        }
    }

    /// Splits the labeled records by Swift correctness; unlabeled records are
    /// skipped.
    pub fn from_labeled(dataset: &Dataset, scores: &[f64]) -> Result<Self> {
        if scores.len() != dataset.len() {
            return Err(Error::LengthMismatch {
                expected: dataset.len(),
                found: scores.len(),
            });
        }
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (r, &s) in dataset.records().iter().zip(scores) {
            match r.swift_correct() {
                Some(true) => a.push(s),
                Some(false) => b.push(s),
                None => {}
            }
        }
        Ok(Self::new(a, b))
    }

    fn resolved_weights(&self) -> (f64, f64) {
        self.weights.unwrap_or_else(|| {
            let total = (self.group_a.len() + self.group_b.len()) as f64;
            (
                self.group_a.len() as f64 / total,
                self.group_b.len() as f64 / total,
            )
        })
    }
}

/// Gaussian kernel density estimate.
#[derive(Debug, Clone)]
pub struct Kde<'a> {
    samples: &'a [f64],
    bandwidth: f64,
}

impl<'a> Kde<'a> {
    pub fn new(samples: &'a [f64], bandwidth: f64) -> Self {
        Kde { samples, bandwidth }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / (self.samples.len() as f64 * h * libm::sqrt(2.0 * core::f64::consts::PI));
        let sum: f64 = self
            .samples
            .iter()
            .map(|&s| {
                let u = (x - s) / h;
                libm::exp(-0.5 * u * u)
            })
            .sum();
        sum * norm
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    libm::sqrt(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64)
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule of thumb: `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let sd = std_dev(samples);
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = (quantile(&sorted, 0.75) - quantile(&sorted, 0.25)) / 1.34;
    let spread = if iqr > 0.0 { sd.min(iqr) } else { sd };
    0.9 * spread * libm::pow(samples.len() as f64, -0.2)
}

const SCAN_STEPS: usize = 400;
const BISECT_STEPS: usize = 60;

/// Score at which the weighted KDEs of the two groups are equal.
///
/// Roots are searched between the group means first, then over the whole
/// sample range; the root nearest the midpoint of the means wins. Groups with
/// disjoint supports return the midpoint of the gap between them. A
/// zero-variance group, or a pair whose densities never cross, falls back to
/// the gap midpoint when one exists and to the midpoint of the means otherwise.
pub fn crossing_point_threshold(pair: &ScoreHistogramPair) -> Result<f64> {
    let (a, b) = (&pair.group_a, &pair.group_b);
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("both score groups need samples"));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "scores" });
    }
    let lo_hi = |xs: &[f64]| {
        xs.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            })
    };
    let (a_min, a_max) = lo_hi(a);
    let (b_min, b_max) = lo_hi(b);
    if a_max < b_min {
        return Ok((a_max + b_min) / 2.0);
    }
    if b_max < a_min {
        return Ok((b_max + a_min) / 2.0);
    }

    let (mean_a, mean_b) = (mean(a), mean(b));
    let midpoint = (mean_a + mean_b) / 2.0;
    let (h_a, h_b) = match pair.kde_bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => (h, h),
        Some(h) => {
            return Err(Error::InvalidConfig(format!(
                "bandwidth must be positive, got {h}"
            )))
        }
        None => (silverman_bandwidth(a), silverman_bandwidth(b)),
    };
    if !(h_a > 0.0 && h_b > 0.0) {
        return Ok(midpoint);
    }
    let (w_a, w_b) = pair.resolved_weights();
    let kde_a = Kde::new(a, h_a);
    let kde_b = Kde::new(b, h_b);
    let gap = |x: f64| w_a * kde_a.density(x) - w_b * kde_b.density(x);

    let inner = (mean_a.min(mean_b), mean_a.max(mean_b));
    let reach = 3.0 * h_a.max(h_b);
    let outer = (a_min.min(b_min) - reach, a_max.max(b_max) + reach);
    for (lo, hi) in [inner, outer] {
        if let Some(root) = nearest_root(&gap, lo, hi, midpoint) {
            return Ok(root);
        }
    }
    Ok(midpoint)
}

/// Scans `[lo, hi]` for sign changes of `f`, refines each by bisection and
/// returns the root closest to `target`.
fn nearest_root(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, target: f64) -> Option<f64> {
    if hi.is_nan() || lo.is_nan() || hi <= lo {
        return None;
    }
    let step = (hi - lo) / SCAN_STEPS as f64;
    let mut best: Option<f64> = None;
    let mut consider = |root: f64| {
        if best.is_none_or(|b| libm::fabs(root - target) < libm::fabs(b - target)) {
            best = Some(root);
        }
    };
    let mut x0 = lo;
    let mut f0 = f(x0);
    for i in 1..=SCAN_STEPS {
        let x1 = if i == SCAN_STEPS {
            hi
        } else {
            lo + step * i as f64
        };
        let f1 = f(x1);
        if f0 == 0.0 {
            consider(x0);
        } else if f0 * f1 < 0.0 {
            let (mut l, mut r, mut fl) = (x0, x1, f0);
            for _ in 0..BISECT_STEPS {
                let m = 0.5 * (l + r);
                let fm = f(m);
                if fm == 0.0 {
                    l = m;
                    r = m;
                    break;
                }
                if (fm < 0.0) == (fl < 0.0) {
                    l = m;
                    fl = fm;
                } else {
                    r = m;
                }
            }
            consider(0.5 * (l + r));
        }
        x0 = x1;
        f0 = f1;
    }
    if f0 == 0.0 {
        consider(x0);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{Prediction, SampleRecord};
    use crate::router::route_dataset;
    use alloc::vec;

    fn dataset(swift_ok: &[bool], super_ok: &[bool]) -> Dataset {
        let recs = swift_ok
            .iter()
            .zip(super_ok)
            .enumerate()
            .map(|(i, (&sw, &su))| SampleRecord {
                id: format!("r{i}"),
                swift_logits: vec![vec![1.0, 0.0]],
                encoder_features: None,
                swift_pred: Prediction::Label(0),
                super_pred: Prediction::Label(if su { 1 - sw as u32 } else { sw as u32 }),
                label: Some(Prediction::Label(1 - sw as u32)),
            })
            .collect();
        Dataset::new(recs).unwrap()
    }

    fn cost() -> CostModel {
        CostModel::new(100.0, 5.0, 5.0).with_head(0.0)
    }

    #[test]
    fn always_correct_swift_gives_flat_accuracy() {
        let ds = dataset(&[true; 6], &[false, true, false, true, false, true]);
        let scores = [0.3, 0.1, 0.9, 0.5, 0.2, 0.7];
        let curve = sweep(&ds, &scores, &cost(), None).unwrap();
        assert_eq!(curve.points.len(), 8);
        assert_eq!(curve.first().threshold, f64::NEG_INFINITY);
        assert_eq!(curve.first().accuracy, Some(1.0));
        assert_eq!(curve.first().expected_flops, 10.0);
        let min = curve
            .points
            .iter()
            .map(|p| p.expected_flops)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(min, curve.first().expected_flops);
    }

    #[test]
    fn sentinel_grid_gives_endpoints() {
        let ds = dataset(&[true, false, true], &[true, true, false]);
        let scores = [1.0, 2.0, 3.0];
        let curve = sweep(
            &ds,
            &scores,
            &cost(),
            Some(&[f64::INFINITY, f64::NEG_INFINITY]),
        )
        .unwrap();
        assert_eq!(curve.points.len(), 2);
        let (_, lo) = route_dataset(&ds, &scores, f64::NEG_INFINITY, &cost()).unwrap();
        let (_, hi) = route_dataset(&ds, &scores, f64::INFINITY, &cost()).unwrap();
        assert_eq!(curve.points, vec![lo, hi]);
    }

    #[test]
    fn empty_grid_is_an_error() {
        let ds = dataset(&[true], &[true]);
        assert!(matches!(
            sweep(&ds, &[0.0], &cost(), Some(&[])),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn budget_endpoints() {
        let ds = dataset(&[true, false, true, false], &[true, true, true, false]);
        let scores = [0.4, 0.1, 0.8, 0.3];
        let c = cost();
        let curve = sweep(&ds, &scores, &c, None).unwrap();
        assert_eq!(
            threshold_for_budget(&curve, c.super_path()).unwrap(),
            f64::INFINITY
        );
        assert_eq!(
            threshold_for_budget(&curve, c.swift_path()).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(matches!(
            threshold_for_budget(&curve, c.swift_path() - 1.0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn accuracy_targets() {
        let ds = dataset(&[true, false, true, false], &[true, true, true, false]);
        let scores = [0.4, 0.1, 0.8, 0.3];
        let curve = sweep(&ds, &scores, &cost(), None).unwrap();
        let swift_acc = ds.swift_accuracy().unwrap();
        assert_eq!(
            threshold_for_accuracy(&curve, swift_acc).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(matches!(
            threshold_for_accuracy(&curve, 1.01),
            Err(Error::Infeasible(_))
        ));
        // 0.75 needs the record scored 0.1 on the Super model only
        assert_eq!(threshold_for_accuracy(&curve, 0.75).unwrap(), 0.3);
    }

    #[test]
    fn disjoint_groups_use_gap_midpoint() {
        let pair = ScoreHistogramPair::new(vec![5.0, 5.1], vec![0.0, 0.1]);
        assert!((crossing_point_threshold(&pair).unwrap() - 2.55).abs() < 1e-12);
        let pair = ScoreHistogramPair::new(vec![0.0, 0.1], vec![5.0, 5.1]);
        assert!((crossing_point_threshold(&pair).unwrap() - 2.55).abs() < 1e-12);
    }

    #[test]
    fn crossing_needs_samples() {
        let pair = ScoreHistogramPair::new(vec![], vec![1.0]);
        assert!(matches!(
            crossing_point_threshold(&pair),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn zero_variance_overlap_falls_back_to_mean_midpoint() {
        let pair = ScoreHistogramPair::new(vec![1.0; 5], vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(crossing_point_threshold(&pair).unwrap(), (1.0 + 1.5) / 2.0);
    }

    #[test]
    fn symmetric_groups_cross_at_the_middle() {
        let a: Vec<f64> = (0..41).map(|i| 2.0 + (i as f64 - 20.0) * 0.05).collect();
        let b: Vec<f64> = a.iter().map(|x| x - 2.0).collect();
        let t = crossing_point_threshold(&ScoreHistogramPair::new(a, b)).unwrap();
        assert!((t - 1.0).abs() < 1e-9, "{t}");
    }

    #[test]
    fn silverman_on_known_sample() {
        // sd = sqrt(2.5), IQR/1.34 = 2/1.34, n = 5
        let h = silverman_bandwidth(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let expected = 0.9 * (2.0f64 / 1.34).min(2.5f64.sqrt()) * 5f64.powf(-0.2);
        assert!((h - expected).abs() < 1e-15);
    }

    #[test]
    fn area_of_flat_curve() {
        let ds = dataset(&[true; 4], &[true; 4]);
        let curve = sweep(&ds, &[1.0, 2.0, 3.0, 4.0], &cost(), None).unwrap();
        assert!((curve.accuracy_area().unwrap() - 1.0).abs() < 1e-15);
    }
}
