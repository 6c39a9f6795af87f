//! Per-link cost functions and their gradients.
//!
//! All four estimators are functions of the residual
//! `e = |theta_i - theta_j| - r_ij`:
//!
//! | kind            | e <= 0         | 0 < e < K | e >= K       |
//! |-----------------|----------------|-----------|--------------|
//! | `HuberRelaxed`  | 0              | e^2       | 2Ke - K^2    |
//! | `HuberOriginal` | Huber(e)       | e^2       | 2Ke - K^2    |
//! | `NlsOriginal`   | e^2            | e^2       | e^2          |
//! | `NlsRelaxed`    | 0              | e^2       | e^2          |
//!
//! where `Huber(e)` is `e^2` for `|e| < K` and `2K|e| - K^2` otherwise.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{Link, Position};
use crate::ranging::RangeTable;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("huber cut-off must be positive and finite, got {0}")]
    BadCutoff(f64),
    #[error("no range for link {0} ({1} ranges for {2} links)")]
    MissingRange(usize, usize, usize),
    #[error("unknown estimator kind `{0}`")]
    UnknownKind(String),
}

/// Cut-off `K = alpha * sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuberParams<S> {
    pub alpha: S,
    pub sigma: S,
}

impl<S: Scalar> HuberParams<S> {
    pub const DEFAULT_ALPHA: f64 = 1.345;

    pub fn new(alpha: S, sigma: S) -> Self {
        Self { alpha, sigma }
    }

    pub fn cutoff(&self) -> S {
        self.alpha * self.sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    HuberRelaxed,
    HuberOriginal,
    NlsOriginal,
    NlsRelaxed,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::HuberRelaxed,
        EstimatorKind::HuberOriginal,
        EstimatorKind::NlsOriginal,
        EstimatorKind::NlsRelaxed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::HuberRelaxed => "huber_relaxed",
            EstimatorKind::HuberOriginal => "huber_original",
            EstimatorKind::NlsOriginal => "nls_original",
            EstimatorKind::NlsRelaxed => "nls_relaxed",
        }
    }

    pub fn is_huber(self) -> bool {
        matches!(self, EstimatorKind::HuberRelaxed | EstimatorKind::HuberOriginal)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = EstimatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| EstimatorError::UnknownKind(s.to_owned()))
    }
}

/// Which way a link residual is read before the loss is applied.
///
/// `EstimateMinusRange` (`e = d - r`) is the usual orientation: one-sided
/// losses ignore estimates shorter than the measured range.
/// `RangeMinusEstimate` (`e = r - d`) flips this, so one-sided losses ignore
/// estimates that are longer than the range. Symmetric losses do not care.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    #[default]
    EstimateMinusRange,
    RangeMinusEstimate,
}

/// Estimator kind plus its cut-off. NLS kinds ignore the cut-off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSpec<S> {
    kind: EstimatorKind,
    cutoff: S,
    orientation: Orientation,
}

impl<S: Scalar> EstimatorSpec<S> {
    pub fn new(kind: EstimatorKind, params: HuberParams<S>) -> Result<Self, EstimatorError> {
        let cutoff = params.cutoff();
        if kind.is_huber() && !(cutoff > S::zero() && cutoff.is_finite()) {
            return Err(EstimatorError::BadCutoff(cutoff.to_f64_lossy()));
        }
        Ok(Self { kind, cutoff, orientation: Orientation::EstimateMinusRange })
    }

    pub fn huber_relaxed(params: HuberParams<S>) -> Result<Self, EstimatorError> {
        Self::new(EstimatorKind::HuberRelaxed, params)
    }

    pub fn huber_original(params: HuberParams<S>) -> Result<Self, EstimatorError> {
        Self::new(EstimatorKind::HuberOriginal, params)
    }

    pub fn nls_original() -> Self {
        Self { kind: EstimatorKind::NlsOriginal, cutoff: S::infinity(), orientation: Orientation::EstimateMinusRange }
    }

    pub fn nls_relaxed() -> Self {
        Self { kind: EstimatorKind::NlsRelaxed, cutoff: S::infinity(), orientation: Orientation::EstimateMinusRange }
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn cutoff(&self) -> S {
        self.cutoff
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// Same cut-off and orientation, different kind.
    pub fn with_kind(&self, kind: EstimatorKind) -> Self {
        Self { kind, ..*self }
    }

    pub fn with_orientation(&self, orientation: Orientation) -> Self {
        Self { orientation, ..*self }
    }

    pub fn cost(&self, e: S) -> S {
        cost_term(self, e)
    }

    pub fn derivative(&self, e: S) -> S {
        cost_derivative(self, e)
    }
}

pub fn rho_relaxed<S: Scalar>(e: S, k: S) -> S {
    if e <= S::zero() {
        S::zero()
    } else if e < k {
        e * e
    } else {
        S::two() * k * e - k * k
    }
}

pub fn rho_original<S: Scalar>(e: S, k: S) -> S {
    let a = e.abs();
    if a < k {
        e * e
    } else {
        S::two() * k * a - k * k
    }
}

/// Loss of one link at residual `e = d - r`.
pub fn cost_term<S: Scalar>(spec: &EstimatorSpec<S>, e: S) -> S {
    match spec.orientation {
        Orientation::EstimateMinusRange => loss(spec, e),
        Orientation::RangeMinusEstimate => loss(spec, -e),
    }
}

/// `d cost_term / d e`.
pub fn cost_derivative<S: Scalar>(spec: &EstimatorSpec<S>, e: S) -> S {
    match spec.orientation {
        Orientation::EstimateMinusRange => loss_derivative(spec, e),
        Orientation::RangeMinusEstimate => -loss_derivative(spec, -e),
    }
}

fn loss<S: Scalar>(spec: &EstimatorSpec<S>, e: S) -> S {
    match spec.kind {
        EstimatorKind::HuberRelaxed => rho_relaxed(e, spec.cutoff),
        EstimatorKind::HuberOriginal => rho_original(e, spec.cutoff),
        EstimatorKind::NlsOriginal => e * e,
        EstimatorKind::NlsRelaxed => {
            if e <= S::zero() {
                S::zero()
            } else {
                e * e
            }
        }
    }
}

fn loss_derivative<S: Scalar>(spec: &EstimatorSpec<S>, e: S) -> S {
    let k = spec.cutoff;
    let two = S::two();
    match spec.kind {
        EstimatorKind::HuberRelaxed => {
            if e <= S::zero() {
                S::zero()
            } else if e < k {
                two * e
            } else {
                two * k
            }
        }
        EstimatorKind::HuberOriginal => {
            if e.abs() < k {
                two * e
            } else {
                two * k * e.signum()
            }
        }
        EstimatorKind::NlsOriginal => two * e,
        EstimatorKind::NlsRelaxed => {
            if e <= S::zero() {
                S::zero()
            } else {
                two * e
            }
        }
    }
}

/// Gradient of one link term given the displacement `theta_i - theta_j` and
/// its length. Returns `None` when the two points coincide.
#[inline]
pub fn grad_from_geometry<S: Scalar>(
    spec: &EstimatorSpec<S>,
    diff: Position<S>,
    dist: S,
    r_ij: S,
) -> Option<Position<S>> {
    if dist <= S::zero() {
        return None;
    }
    let slope = cost_derivative(spec, dist - r_ij);
    Some(diff * (slope / dist))
}

/// Partial derivative of the link cost with respect to `theta_i`. Coincident
/// points yield the zero vector.
pub fn grad_term<S: Scalar>(
    spec: &EstimatorSpec<S>,
    theta_i: Position<S>,
    theta_j: Position<S>,
    r_ij: S,
) -> Position<S> {
    let diff = theta_i - theta_j;
    grad_from_geometry(spec, diff, diff.norm(), r_ij).unwrap_or_else(Position::zero)
}

pub fn residual<S: Scalar>(theta_i: Position<S>, theta_j: Position<S>, r_ij: S) -> S {
    theta_i.distance(theta_j) - r_ij
}

/// Sum of link costs over `links`, each unordered pair once.
pub fn total_cost<S, R>(
    spec: &EstimatorSpec<S>,
    positions: &[Position<S>],
    ranges: &R,
    links: &[Link],
) -> Result<S, EstimatorError>
where
    S: Scalar,
    R: RangeTable<S> + ?Sized,
{
    if ranges.n_links() < links.len() {
        return Err(EstimatorError::MissingRange(ranges.n_links(), ranges.n_links(), links.len()));
    }
    Ok(links
        .iter()
        .enumerate()
        .map(|(k, l)| {
            cost_term(spec, residual(positions[l.i.0], positions[l.j.0], ranges.range(k)))
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NodeId;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(kind: EstimatorKind, k: f64) -> EstimatorSpec<f64> {
        EstimatorSpec::new(kind, HuberParams::new(k, 1.0)).unwrap()
    }

    #[test]
    fn relaxed_branches() {
        assert_eq!(rho_relaxed(-0.3, 1.0), 0.0);
        assert_relative_eq!(rho_relaxed(0.5, 1.0), 0.25);
        assert_relative_eq!(rho_relaxed(2.0, 1.0), 3.0);
        let k = 0.6725;
        assert_relative_eq!(rho_relaxed(k, k), k * k, epsilon = 1e-15);
        assert_relative_eq!(rho_relaxed(k - 1e-13, k), k * k, epsilon = 1e-12);
    }

    #[test]
    fn original_branches() {
        assert_relative_eq!(rho_original(-0.5, 1.0), 0.25);
        assert_relative_eq!(rho_original(-2.0, 1.0), 3.0);
        assert_eq!(rho_original(0.0, 1.0), 0.0);
    }

    #[test]
    fn cost_term_per_kind() {
        assert_eq!(EstimatorSpec::nls_original().cost(-1.0), 1.0);
        assert_eq!(EstimatorSpec::<f64>::nls_relaxed().cost(-1.0), 0.0);
        let hr = spec(EstimatorKind::HuberRelaxed, 2.0);
        let nr = EstimatorSpec::nls_relaxed();
        for e in [-1.5, -0.1, 0.0, 0.3, 1.9] {
            assert_eq!(hr.cost(e), nr.cost(e));
        }
    }

    #[test]
    fn gradient_examples() {
        let z = Position::new(0.0, 0.0);
        for k in [0.1, 1.0, 10.0] {
            let g = grad_term(&spec(EstimatorKind::HuberRelaxed, k), Position::new(1.0, 0.0), z, 1.0);
            assert_eq!(g, Position::zero());
        }
        let g = grad_term(&spec(EstimatorKind::HuberRelaxed, 5.0), Position::new(2.0, 0.0), z, 1.0);
        assert_relative_eq!(g.x, 2.0);
        assert_relative_eq!(g.y, 0.0);
        let g = grad_term(&spec(EstimatorKind::HuberRelaxed, 1.0), Position::new(2.0, 0.0), z, 0.5);
        assert_relative_eq!(g.x, 2.0);
    }

    #[test]
    fn coincident_points_give_zero_gradient() {
        let p = Position::new(1.0, 1.0);
        for kind in EstimatorKind::ALL {
            assert_eq!(grad_term(&spec(kind, 1.0), p, p, 0.5), Position::zero());
        }
    }

    #[test]
    fn rejects_bad_cutoff() {
        assert!(EstimatorSpec::huber_relaxed(HuberParams::new(0.0, 0.5)).is_err());
        assert!(EstimatorSpec::new(EstimatorKind::NlsOriginal, HuberParams::new(0.0, 0.5)).is_ok());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in EstimatorKind::ALL {
            assert_eq!(k.name().parse::<EstimatorKind>().unwrap(), k);
        }
        assert!("tukey".parse::<EstimatorKind>().is_err());
    }

    fn random_instance(seed: u64, n: usize) -> (Vec<Position<f64>>, Vec<Link>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pos: Vec<_> = (0..n)
            .map(|_| Position::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)))
            .collect();
        let mut links = Vec::new();
        let mut ranges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.6) {
                    links.push(Link::new(NodeId(i), NodeId(j)));
                    ranges.push(rng.random_range(0.0..8.0));
                }
            }
        }
        (pos, links, ranges)
    }

    #[test]
    fn total_cost_matches_term_by_term_oracle() {
        let (pos, links, ranges) = random_instance(17, 5);
        for kind in EstimatorKind::ALL {
            let s = spec(kind, 0.8);
            let mut oracle = 0.0;
            for (k, l) in links.iter().enumerate() {
                let (a, b) = (pos[l.i.0], pos[l.j.0]);
                let e = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt() - ranges[k];
                oracle += match kind {
                    EstimatorKind::NlsOriginal => e * e,
                    EstimatorKind::NlsRelaxed => if e > 0.0 { e * e } else { 0.0 },
                    EstimatorKind::HuberRelaxed if e <= 0.0 => 0.0,
                    _ if e.abs() < 0.8 => e * e,
                    _ => 1.6 * e.abs() - 0.64,
                };
            }
            assert_relative_eq!(total_cost(&s, &pos, &ranges, &links).unwrap(), oracle, max_relative = 1e-12);
        }
        assert!(matches!(
            total_cost(&spec(EstimatorKind::NlsOriginal, 1.0), &pos, &ranges[..1], &links),
            Err(EstimatorError::MissingRange(..))
        ));
    }

    #[test]
    fn total_cost_vanishes_on_exact_ranges() {
        let (pos, links, _) = random_instance(3, 6);
        let exact: Vec<f64> = links.iter().map(|l| pos[l.i.0].distance(pos[l.j.0])).collect();
        for kind in EstimatorKind::ALL {
            assert!(total_cost(&spec(kind, 1.0), &pos, &exact, &links).unwrap().abs() < 1e-20);
        }
        let single = total_cost(&spec(EstimatorKind::HuberOriginal, 1.0), &pos, &[1.0][..], &links[..1]).unwrap();
        let e = residual(pos[links[0].i.0], pos[links[0].j.0], 1.0);
        assert_eq!(single, rho_original(e, 1.0));
    }

    #[test]
    fn flipped_orientation_mirrors_the_loss() {
        let s = spec(EstimatorKind::HuberRelaxed, 1.0).with_orientation(Orientation::RangeMinusEstimate);
        assert_eq!(s.cost(0.3), 0.0);
        assert_relative_eq!(s.cost(-0.5), 0.25);
        assert_relative_eq!(s.derivative(-0.5), -1.0);
        assert_relative_eq!(s.derivative(-2.0), -2.0);
        // symmetric losses are unaffected
        let o = spec(EstimatorKind::HuberOriginal, 1.0);
        for e in [-2.0, -0.4, 0.0, 0.7, 3.0] {
            let f = o.with_orientation(Orientation::RangeMinusEstimate);
            assert_eq!(o.cost(e), f.cost(e));
            assert_eq!(o.derivative(e), f.derivative(e));
        }
    }

    #[test]
    fn with_kind_keeps_orientation() {
        let s = spec(EstimatorKind::HuberRelaxed, 1.0).with_orientation(Orientation::RangeMinusEstimate);
        assert_eq!(s.with_kind(EstimatorKind::HuberOriginal).orientation(), Orientation::RangeMinusEstimate);
    }

    proptest! {
        #[test]
        fn relaxed_is_bounded_by_square(e in -50.0f64..50.0, k in 0.01f64..10.0) {
            let r = rho_relaxed(e, k);
            prop_assert!(r <= e * e + 1e-12);
            if e <= 0.0 {
                prop_assert_eq!(r, 0.0);
            }
            if e > 0.0 && e <= k {
                prop_assert!((r - e * e).abs() <= 1e-12 * (1.0 + e * e));
            }
            if e > k + 1e-9 {
                prop_assert!(r < e * e);
            }
        }

        #[test]
        fn relaxed_is_non_decreasing(a in -20.0f64..20.0, b in -20.0f64..20.0, k in 0.01f64..5.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(rho_relaxed(lo, k) <= rho_relaxed(hi, k));
        }

        #[test]
        fn relaxed_is_linear_past_cutoff(k in 0.1f64..5.0, off in 0.001f64..10.0, h in 0.001f64..1.0) {
            let e = k + off + h;
            let second = rho_relaxed(e + h, k) - 2.0 * rho_relaxed(e, k) + rho_relaxed(e - h, k);
            prop_assert!(second.abs() < 1e-9 * (1.0 + e * k));
        }

        #[test]
        fn costs_are_convex_in_residual(a in -10.0f64..10.0, b in -10.0f64..10.0, k in 0.05f64..4.0) {
            for kind in EstimatorKind::ALL {
                let s = spec(kind, k);
                let mid = s.cost(0.5 * (a + b));
                prop_assert!(mid <= 0.5 * (s.cost(a) + s.cost(b)) + 1e-9);
            }
        }
    }
}
