//! Synchronous distributed gradient descent.
//!
//! Every round each sensor receives the current estimates of all its
//! neighbors, sums the per-link gradients and takes a fixed step. All sensors
//! read round-`n` estimates and write round-`n+1` estimates, so the result
//! does not depend on the order sensors are visited. Anchors never move.

use thiserror::Error;

use crate::estimators::{grad_from_geometry, total_cost, EstimatorError, EstimatorSpec};
use crate::model::{Network, Position};
use crate::ranging::RangeTable;
use crate::scalar::Scalar;
use crate::seeding::{purpose_seed, rng_from_seed, Purpose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("step size must be positive and finite, got {0}")]
    BadStepSize(f64),
    #[error("convergence threshold must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("max_iterations must be at least 1")]
    NoIterations,
    #[error("initial positions cover {got} nodes, network has {expected}")]
    IncompleteInit { expected: usize, got: usize },
    #[error("diverged at iteration {iteration} with step size {gamma}")]
    Diverged { iteration: usize, gamma: f64 },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy<S> {
    /// Sensors uniform over the deployment area.
    UniformRandom,
    /// All sensors at the mean anchor position.
    AnchorCentroid,
    /// Caller-supplied estimates for every node (anchors are reset to truth).
    Given(Vec<Position<S>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<S> {
    pub gamma: S,
    pub epsilon: S,
    pub max_iterations: usize,
    pub init: InitStrategy<S>,
}

impl<S: Scalar> Default for SolverConfig<S> {
    fn default() -> Self {
        Self {
            gamma: S::of(0.01),
            epsilon: S::of(1e-3),
            max_iterations: 1000,
            init: InitStrategy::UniformRandom,
        }
    }
}

impl<S: Scalar> SolverConfig<S> {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.gamma > S::zero() && self.gamma.is_finite()) {
            return Err(SolverError::BadStepSize(self.gamma.to_f64_lossy()));
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.epsilon > S::zero()) {
            return Err(SolverError::BadEpsilon(self.epsilon.to_f64_lossy()));
        }
        if self.max_iterations == 0 {
            return Err(SolverError::NoIterations);
        }
        Ok(())
    }

    pub fn with_init(&self, init: InitStrategy<S>) -> Self {
        Self { init, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState<S> {
    pub estimates: Vec<Position<S>>,
    pub iteration: usize,
    pub last_max_delta: S,
    /// Link evaluations skipped because both endpoints coincided.
    pub coincident_pairs: u64,
}

impl<S: Scalar> SolverState<S> {
    pub fn new(estimates: Vec<Position<S>>) -> Self {
        Self { estimates, iteration: 0, last_max_delta: S::infinity(), coincident_pairs: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace<S> {
    pub initial_cost: S,
    pub max_deltas: Vec<S>,
    /// Total cost after each iteration.
    pub costs: Vec<S>,
    pub messages_sent: u64,
    pub gradient_evals: u64,
    pub coincident_pairs: u64,
    pub converged: bool,
    pub iterations_used: usize,
}

impl<S: Scalar> SolverTrace<S> {
    fn new(initial_cost: S) -> Self {
        Self {
            initial_cost,
            max_deltas: Vec::new(),
            costs: Vec::new(),
            messages_sent: 0,
            gradient_evals: 0,
            coincident_pairs: 0,
            converged: false,
            iterations_used: 0,
        }
    }
}

pub fn init_positions<S: Scalar>(
    network: &Network<S>,
    strategy: &InitStrategy<S>,
    seed: u64,
) -> Result<Vec<Position<S>>, SolverError> {
    let mut estimates = match strategy {
        InitStrategy::UniformRandom => {
            let area = network.area();
            let mut rng = rng_from_seed(purpose_seed(seed, Purpose::Init));
            (0..network.n_nodes())
                .map(|_| {
                    let x = S::sample_open01(&mut rng) * area.length;
                    let y = S::sample_open01(&mut rng) * area.width;
                    Position::new(x, y)
                })
                .collect()
        }
        InitStrategy::AnchorCentroid => {
            let anchors = network.anchor_positions();
            let centroid = if anchors.is_empty() {
                Position::zero()
            } else {
                let n = S::of(anchors.len() as f64);
                let sum = anchors.iter().fold(Position::zero(), |acc, p| acc + *p);
                Position::new(sum.x / n, sum.y / n)
            };
            vec![centroid; network.n_nodes()]
        }
        InitStrategy::Given(given) => {
            if given.len() != network.n_nodes() {
                return Err(SolverError::IncompleteInit {
                    expected: network.n_nodes(),
                    got: given.len(),
                });
            }
            given.clone()
        }
    };
    for id in network.anchor_ids() {
        estimates[id.0] = network.position(id);
    }
    Ok(estimates)
}

/// One synchronous round. Sensors without neighbors stay put.
pub fn step<S, R>(
    state: &SolverState<S>,
    network: &Network<S>,
    ranges: &R,
    spec: &EstimatorSpec<S>,
    config: &SolverConfig<S>,
) -> SolverState<S>
where
    S: Scalar,
    R: RangeTable<S> + ?Sized,
{
    let mut next = state.estimates.clone();
    let mut max_delta = S::zero();
    let mut coincident = 0u64;
    for i in network.sensor_ids() {
        let theta_i = state.estimates[i.0];
        let mut grad = Position::zero();
        for nb in network.neighbor_links(i) {
            let diff = theta_i - state.estimates[nb.node.0];
            match grad_from_geometry(spec, diff, diff.norm(), ranges.range(nb.link)) {
                Some(g) => grad += g,
                None => coincident += 1,
            }
        }
        let delta = grad * config.gamma;
        next[i.0] = theta_i - delta;
        max_delta = max_delta.max(delta.norm());
    }
    SolverState {
        estimates: next,
        iteration: state.iteration + 1,
        last_max_delta: max_delta,
        coincident_pairs: state.coincident_pairs + coincident,
    }
}

/// Iterate [`step`] until the largest move is at most `epsilon` or the
/// iteration budget is spent.
pub fn run<S, R>(
    network: &Network<S>,
    ranges: &R,
    spec: &EstimatorSpec<S>,
    config: &SolverConfig<S>,
    seed: u64,
) -> Result<(Vec<Position<S>>, SolverTrace<S>), SolverError>
where
    S: Scalar,
    R: RangeTable<S> + ?Sized,
{
    config.validate()?;
    if ranges.n_links() < network.n_links() {
        return Err(EstimatorError::MissingRange(
            ranges.n_links(),
            ranges.n_links(),
            network.n_links(),
        )
        .into());
    }
    let init = init_positions(network, &config.init, seed)?;
    let mut state = SolverState::new(init);
    let links = network.links();
    let mut trace = SolverTrace::new(total_cost(spec, &state.estimates, ranges, links)?);
    let per_round = network.sensor_degree_sum() as u64;
    let limit = S::of(100.0) * network.area().diagonal();

    while state.iteration < config.max_iterations {
        state = step(&state, network, ranges, spec, config);
        trace.messages_sent += per_round;
        trace.gradient_evals += per_round;
        trace.max_deltas.push(state.last_max_delta);
        trace.costs.push(total_cost(spec, &state.estimates, ranges, links)?);
        trace.iterations_used = state.iteration;

        let escaped = network
            .sensor_ids()
            .map(|i| state.estimates[i.0])
            .any(|p| !p.is_finite() || p.x.abs() > limit || p.y.abs() > limit);
        if escaped {
            return Err(SolverError::Diverged {
                iteration: state.iteration,
                gamma: config.gamma.to_f64_lossy(),
            });
        }
        if state.last_max_delta <= config.epsilon {
            trace.converged = true;
            break;
        }
    }
    trace.coincident_pairs = state.coincident_pairs;
    Ok((state.estimates, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{EstimatorKind, HuberParams};
    use crate::model::{generate_topology, TopologyConfig};
    use crate::model::NodeId;
    use approx::assert_relative_eq;

    fn p(x: f64, y: f64) -> Position<f64> {
        Position::new(x, y)
    }

    fn relaxed(k: f64) -> EstimatorSpec<f64> {
        EstimatorSpec::huber_relaxed(HuberParams::new(k, 1.0)).unwrap()
    }

    fn exact_ranges(net: &Network<f64>) -> Vec<f64> {
        (0..net.n_links()).map(|k| net.true_distance(k)).collect()
    }

    #[test]
    fn centroid_init_of_corner_anchors() {
        let net = generate_topology(&TopologyConfig::<f64>::reference(), 0).unwrap();
        let est = init_positions(&net, &InitStrategy::AnchorCentroid, 0).unwrap();
        for id in net.sensor_ids() {
            assert_eq!(est[id.0], p(5.0, 5.0));
        }
        for id in net.anchor_ids() {
            assert_eq!(est[id.0], net.position(id));
        }
    }

    #[test]
    fn given_and_random_init() {
        let net = generate_topology(&TopologyConfig::<f64>::reference(), 1).unwrap();
        let truth = net.positions().to_vec();
        assert_eq!(init_positions(&net, &InitStrategy::Given(truth.clone()), 0).unwrap(), truth);
        assert_eq!(
            init_positions(&net, &InitStrategy::Given(truth[..3].to_vec()), 0),
            Err(SolverError::IncompleteInit { expected: truth.len(), got: 3 })
        );
        let a = init_positions(&net, &InitStrategy::UniformRandom, 5).unwrap();
        assert_eq!(a, init_positions(&net, &InitStrategy::UniformRandom, 5).unwrap());
        assert_ne!(a, init_positions(&net, &InitStrategy::UniformRandom, 6).unwrap());
    }

    #[test]
    fn isolated_sensor_does_not_move() {
        let net = Network::from_positions(1, vec![p(9.0, 9.0), p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0)], 2.0).unwrap();
        assert_eq!(net.degree(NodeId(0)), 0);
        let state = SolverState::new(vec![p(3.0, 3.0), p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0)]);
        let ranges = exact_ranges(&net);
        let next = step(&state, &net, &ranges, &relaxed(1.0), &SolverConfig::default());
        assert_eq!(next.estimates[0], p(3.0, 3.0));
        assert_eq!(next.last_max_delta, 0.0);
    }

    #[test]
    fn negative_residuals_leave_relaxed_huber_still() {
        let net = generate_topology(&TopologyConfig::<f64>::reference(), 2).unwrap();
        let ranges: Vec<f64> = exact_ranges(&net).iter().map(|d| d + 0.5).collect();
        let state = SolverState::new(net.positions().to_vec());
        let next = step(&state, &net, &ranges, &relaxed(1.0), &SolverConfig::default());
        assert_eq!(next.estimates, state.estimates);
        assert_eq!(next.last_max_delta, 0.0);
    }

    #[test]
    fn hand_computed_single_step() {
        // sensor truth (1,1); anchors (0,0) and (3,1); estimate starts at (2,2)
        let net = Network::from_positions(1, vec![p(1.0, 1.0), p(0.0, 0.0), p(3.0, 1.0)], 5.0).unwrap();
        let ranges = vec![1.0, 1.5, 2.0];
        assert_eq!(net.links().len(), 3);
        // links sorted: (0,1), (0,2), (1,2)
        let theta = p(2.0, 2.0);
        let d1 = (8.0f64).sqrt();
        let g1 = p(2.0 / d1, 2.0 / d1) * (2.0 * (d1 - 1.0));
        let d2 = (2.0f64).sqrt();
        let g2 = p(-1.0 / d2, 1.0 / d2) * (2.0 * (d2 - 1.5));
        let gamma = 0.05;
        let expected = theta - (g1 + g2) * gamma;
        let cfg = SolverConfig { gamma, ..SolverConfig::default() };
        let state = SolverState::new(vec![theta, p(0.0, 0.0), p(3.0, 1.0)]);
        // g2 has a negative residual and is zero under relaxed Huber; use NLS to keep both terms
        let next = step(&state, &net, &ranges, &EstimatorSpec::nls_original(), &cfg);
        assert_relative_eq!(next.estimates[0].x, expected.x, epsilon = 1e-14);
        assert_relative_eq!(next.estimates[0].y, expected.y, epsilon = 1e-14);
        let next = step(&state, &net, &ranges, &relaxed(100.0), &cfg);
        let expected = theta - g1 * gamma;
        assert_relative_eq!(next.estimates[0].x, expected.x, epsilon = 1e-14);
        assert_eq!(next.estimates[1..], state.estimates[1..]);
    }

    #[test]
    fn noiseless_run_converges_to_truth() {
        let positions = vec![
            p(2.0, 2.0), p(4.0, 3.0), p(6.0, 2.5), p(3.0, 5.0), p(5.0, 5.5),
            p(7.0, 4.0), p(2.5, 7.5), p(5.0, 8.0), p(7.5, 7.0), p(4.0, 1.0),
            p(0.0, 0.0), p(0.0, 10.0), p(10.0, 10.0), p(10.0, 0.0),
        ];
        let truth = positions.clone();
        let net = Network::from_positions(10, positions, 4.5).unwrap();
        assert!(net.connectivity().fewer_than_three.is_empty());
        let ranges = exact_ranges(&net);
        let mut init = truth.clone();
        for (k, q) in init.iter_mut().take(10).enumerate() {
            *q += p(0.4 * ((k % 3) as f64 - 1.0), 0.3 * ((k % 2) as f64 - 0.5));
        }
        let cfg = SolverConfig {
            epsilon: 1e-7,
            max_iterations: 20_000,
            init: InitStrategy::Given(init),
            ..SolverConfig::default()
        };
        let (est, trace) = run(&net, &ranges, &EstimatorSpec::nls_original(), &cfg, 0).unwrap();
        assert!(trace.converged);
        let mse: f64 = (0..10).map(|i| (est[i] - truth[i]).norm_squared()).sum::<f64>() / 10.0;
        assert!(mse.sqrt() < 0.05, "rmse {}", mse.sqrt());
        assert_eq!(trace.messages_sent, trace.iterations_used as u64 * net.sensor_degree_sum() as u64);
        assert_eq!(trace.gradient_evals, trace.messages_sent);
    }

    #[test]
    fn iteration_budget() {
        let net = generate_topology(&TopologyConfig::<f64>::reference(), 4).unwrap();
        let ranges = exact_ranges(&net);
        let cfg = SolverConfig { max_iterations: 0, ..SolverConfig::default() };
        assert_eq!(run(&net, &ranges, &relaxed(1.0), &cfg, 0).unwrap_err(), SolverError::NoIterations);
        let cfg = SolverConfig { max_iterations: 1, ..SolverConfig::default() };
        let (_, trace) = run(&net, &ranges, &relaxed(1.0), &cfg, 0).unwrap();
        assert_eq!(trace.iterations_used, 1);
        assert_eq!(trace.max_deltas.len(), 1);
        assert_eq!(trace.messages_sent, net.sensor_degree_sum() as u64);
    }

    #[test]
    fn huge_step_diverges() {
        let net = generate_topology(&TopologyConfig::<f64>::reference(), 4).unwrap();
        let ranges = exact_ranges(&net);
        let cfg = SolverConfig { gamma: 50.0, ..SolverConfig::default() };
        let err = run(&net, &ranges, &EstimatorSpec::nls_original(), &cfg, 1).unwrap_err();
        assert!(matches!(err, SolverError::Diverged { gamma, .. } if gamma == 50.0));
    }

    #[test]
    fn anchors_never_move() {
        let net = generate_topology(&TopologyConfig::<f64>::reference(), 8).unwrap();
        let ranges: Vec<f64> = exact_ranges(&net).iter().map(|d| d * 0.7).collect();
        let cfg = SolverConfig { max_iterations: 50, ..SolverConfig::default() };
        for kind in EstimatorKind::ALL {
            let spec = EstimatorSpec::new(kind, HuberParams::new(1.345, 0.5)).unwrap();
            let (est, _) = run(&net, &ranges, &spec, &cfg, 3).unwrap();
            for id in net.anchor_ids() {
                assert_eq!(est[id.0], net.position(id));
            }
        }
    }

    #[test]
    fn rejects_short_range_table() {
        let net = generate_topology(&TopologyConfig::<f64>::reference(), 4).unwrap();
        let ranges = vec![1.0; net.n_links() - 1];
        assert!(matches!(
            run(&net, &ranges, &relaxed(1.0), &SolverConfig::default(), 0),
            Err(SolverError::Estimator(EstimatorError::MissingRange(..)))
        ));
    }
}
