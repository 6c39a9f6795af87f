//! Localization accuracy metrics and empirical CDFs.

use thiserror::Error;

use crate::model::{NodeId, Position};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("metric needs at least {needed} nodes, got {got}")]
    TooFewNodes { needed: usize, got: usize },
    #[error("nodes {0} and {1} share a true position; relative distance error is undefined")]
    CoincidentTruth(NodeId, NodeId),
    #[error("communication range must be positive, got {0}")]
    BadRange(f64),
    #[error("empirical CDF of an empty sample")]
    EmptySample,
    #[error("non-finite value in sample")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub rmse: f64,
    pub ger: f64,
    pub gde: f64,
    pub n_trials: usize,
}

/// Root mean squared position error over `ids`.
pub fn rmse<S: Scalar>(
    estimates: &[Position<S>],
    truth: &[Position<S>],
    ids: &[NodeId],
) -> Result<S, MetricsError> {
    Ok(mean_squared_error(estimates, truth, ids)?.sqrt())
}

/// Mean over `ids` of the squared position error. Averaging this across
/// trials before taking the root gives the expectation form of the RMSE.
pub fn mean_squared_error<S: Scalar>(
    estimates: &[Position<S>],
    truth: &[Position<S>],
    ids: &[NodeId],
) -> Result<S, MetricsError> {
    if ids.is_empty() {
        return Err(MetricsError::TooFewNodes { needed: 1, got: 0 });
    }
    let sum: S = ids.iter().map(|i| (estimates[i.0] - truth[i.0]).norm_squared()).sum();
    Ok(sum / S::of(ids.len() as f64))
}

fn pair_count(n: usize) -> f64 {
    (n * (n - 1)) as f64 / 2.0
}

/// Global energy ratio: `1/(n(n-1)/2) * sqrt(sum ((d^_ij - d_ij)/d_ij)^2)`
/// over all pairs of `ids`.
pub fn ger<S: Scalar>(
    estimates: &[Position<S>],
    truth: &[Position<S>],
    ids: &[NodeId],
) -> Result<S, MetricsError> {
    if ids.len() < 2 {
        return Err(MetricsError::TooFewNodes { needed: 2, got: ids.len() });
    }
    let mut sum = S::zero();
    for (a, &i) in ids.iter().enumerate() {
        for &j in &ids[a + 1..] {
            let d = truth[i.0].distance(truth[j.0]);
            if d <= S::zero() {
                return Err(MetricsError::CoincidentTruth(i, j));
            }
            let rel = (estimates[i.0].distance(estimates[j.0]) - d) / d;
            sum = sum + rel * rel;
        }
    }
    Ok(sum.sqrt() / S::of(pair_count(ids.len())))
}

/// Global distance error: `(1/R) * sqrt(sum (d^_ij - d_ij)^2 / (n(n-1)/2))`.
pub fn gde<S: Scalar>(
    estimates: &[Position<S>],
    truth: &[Position<S>],
    ids: &[NodeId],
    comm_range: S,
) -> Result<S, MetricsError> {
    // Negated so NaN is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(comm_range > S::zero()) {
        return Err(MetricsError::BadRange(comm_range.to_f64_lossy()));
    }
    if ids.len() < 2 {
        return Err(MetricsError::TooFewNodes { needed: 2, got: ids.len() });
    }
    let mut sum = S::zero();
    for (a, &i) in ids.iter().enumerate() {
        for &j in &ids[a + 1..] {
            let err = estimates[i.0].distance(estimates[j.0]) - truth[i.0].distance(truth[j.0]);
            sum = sum + err * err;
        }
    }
    Ok((sum / S::of(pair_count(ids.len()))).sqrt() / comm_range)
}

/// Sorted sample with cumulative probabilities `k/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EcdfTable {
    pub values: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl EcdfTable {
    /// `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.values.partition_point(|v| *v <= x);
        k as f64 / self.values.len() as f64
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn ecdf(values: &[f64]) -> Result<EcdfTable, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptySample);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let probabilities = (1..=sorted.len()).map(|k| k as f64 / n).collect();
    Ok(EcdfTable { values: sorted, probabilities })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64) -> Position<f64> {
        Position::new(x, y)
    }

    fn ids(n: usize) -> Vec<NodeId> {
        (0..n).map(NodeId).collect()
    }

    #[test]
    fn rmse_examples() {
        let truth = vec![p(1.0, 1.0), p(2.0, 2.0)];
        assert_eq!(rmse(&truth, &truth, &ids(2)).unwrap(), 0.0);
        assert_relative_eq!(rmse(&[p(1.3, 1.4)], &truth[..1], &ids(1)).unwrap(), 0.5, epsilon = 1e-12);
        let est = vec![p(2.0, 1.0), p(2.0, 2.0)];
        assert_relative_eq!(rmse(&est, &truth, &ids(2)).unwrap(), 0.5f64.sqrt(), epsilon = 1e-12);
        assert!(rmse(&est, &truth, &[]).is_err());
    }

    #[test]
    fn ger_gde_single_pair() {
        let truth = vec![p(0.0, 0.0), p(1.0, 0.0)];
        let est = vec![p(0.0, 0.0), p(1.1, 0.0)];
        assert_relative_eq!(ger(&est, &truth, &ids(2)).unwrap(), 0.1, epsilon = 1e-12);
        assert_eq!(ger(&truth, &truth, &ids(2)).unwrap(), 0.0);

        let est = vec![p(0.0, 0.0), p(1.3, 0.0)];
        assert_relative_eq!(gde(&est, &truth, &ids(2), 3.0).unwrap(), 0.1, epsilon = 1e-12);
        assert_eq!(gde(&truth, &truth, &ids(2), 3.0).unwrap(), 0.0);
        assert!(matches!(gde(&est, &truth, &ids(2), 0.0), Err(MetricsError::BadRange(_))));
    }

    #[test]
    fn ger_three_nodes_by_hand() {
        let truth = vec![p(0.0, 0.0), p(3.0, 0.0), p(0.0, 4.0)];
        let est = vec![p(0.0, 0.0), p(3.3, 0.0), p(0.0, 3.6)];
        // d: 3, 4, 5; d^: 3.3, 3.6, sqrt(3.3^2+3.6^2)
        let d23 = (3.3f64 * 3.3 + 3.6 * 3.6).sqrt();
        let s = (0.3f64 / 3.0).powi(2) + (0.4f64 / 4.0).powi(2) + ((d23 - 5.0) / 5.0).powi(2);
        assert_relative_eq!(ger(&est, &truth, &ids(3)).unwrap(), s.sqrt() / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn ger_rejects_coincident_truth() {
        let truth = vec![p(1.0, 1.0), p(1.0, 1.0)];
        assert_eq!(
            ger(&truth, &truth, &ids(2)),
            Err(MetricsError::CoincidentTruth(NodeId(0), NodeId(1)))
        );
    }

    #[test]
    fn gde_scales_linearly_with_distance_error() {
        let truth = vec![p(0.0, 0.0), p(2.0, 0.0), p(5.0, 0.0)];
        let est1 = vec![p(0.0, 0.0), p(2.1, 0.0), p(5.2, 0.0)];
        let est2 = vec![p(0.0, 0.0), p(2.2, 0.0), p(5.4, 0.0)];
        let a = gde(&est1, &truth, &ids(3), 3.0).unwrap();
        let b = gde(&est2, &truth, &ids(3), 3.0).unwrap();
        assert_relative_eq!(b, 2.0 * a, epsilon = 1e-12);
    }

    #[test]
    fn ecdf_examples() {
        let t = ecdf(&[5.0]).unwrap();
        assert_eq!((t.values.clone(), t.probabilities.clone()), (vec![5.0], vec![1.0]));
        let t = ecdf(&[3.0, 1.0, 4.0, 2.0]).unwrap();
        assert_eq!(t.cdf(2.5), 0.5);
        assert_eq!(t, ecdf(&[1.0, 2.0, 3.0, 4.0]).unwrap());
        assert_eq!(ecdf(&[]), Err(MetricsError::EmptySample));
        assert_eq!(ecdf(&[f64::NAN]), Err(MetricsError::NonFinite));
    }

    fn brute(est: &[Position<f64>], truth: &[Position<f64>], r: f64) -> (f64, f64, f64) {
        let n = est.len();
        let mut sq = 0.0;
        for i in 0..n {
            sq += (est[i].x - truth[i].x).powi(2) + (est[i].y - truth[i].y).powi(2);
        }
        let dist = |a: Position<f64>, b: Position<f64>| ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
        let (mut g, mut d) = (0.0, 0.0);
        let mut pairs = 0.0;
        for i in 0..n {
            for j in 0..n {
                if j > i {
                    let t = dist(truth[i], truth[j]);
                    let e = dist(est[i], est[j]);
                    g += ((e - t) / t).powi(2);
                    d += (e - t).powi(2);
                    pairs += 1.0;
                }
            }
        }
        ((sq / n as f64).sqrt(), g.sqrt() / pairs, (d / pairs).sqrt() / r)
    }

    #[test]
    fn agrees_with_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let truth: Vec<_> = (0..20).map(|_| p(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0))).collect();
            let est: Vec<_> = truth
                .iter()
                .map(|t| p(t.x + rng.random_range(-1.0..1.0), t.y + rng.random_range(-1.0..1.0)))
                .collect();
            let (r0, g0, d0) = brute(&est, &truth, 3.0);
            let all = ids(20);
            assert_relative_eq!(rmse(&est, &truth, &all).unwrap(), r0, max_relative = 1e-12);
            assert_relative_eq!(ger(&est, &truth, &all).unwrap(), g0, max_relative = 1e-12);
            assert_relative_eq!(gde(&est, &truth, &all, 3.0).unwrap(), d0, max_relative = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn pairwise_metrics_ignore_rigid_motion(
            seed in any::<u64>(),
            angle in 0.0f64..std::f64::consts::TAU,
            tx in -20.0f64..20.0,
            ty in -20.0f64..20.0,
            reflect in any::<bool>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth: Vec<_> = (0..8).map(|_| p(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0))).collect();
            let est: Vec<_> = truth.iter().map(|t| p(t.x + rng.random_range(-0.5..0.5), t.y)).collect();
            let (c, s) = (angle.cos(), angle.sin());
            let moved: Vec<_> = est
                .iter()
                .map(|q| {
                    let y = if reflect { -q.y } else { q.y };
                    p(c * q.x - s * y + tx, s * q.x + c * y + ty)
                })
                .collect();
            let all = ids(8);
            let (g0, g1) = (ger(&est, &truth, &all).unwrap(), ger(&moved, &truth, &all).unwrap());
            let (d0, d1) = (gde(&est, &truth, &all, 3.0).unwrap(), gde(&moved, &truth, &all, 3.0).unwrap());
            prop_assert!((g0 - g1).abs() <= 1e-9 * (1.0 + g0));
            prop_assert!((d0 - d1).abs() <= 1e-9 * (1.0 + d0));
        }

        #[test]
        fn ecdf_is_monotone(values in prop::collection::vec(-100.0f64..100.0, 1..50)) {
            let t = ecdf(&values).unwrap();
            prop_assert!(t.probabilities.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(t.values.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(*t.probabilities.last().unwrap(), 1.0);
        }
    }
}
