//! Bootstrap range refinement.
//!
//! Given first-pass estimates, each link's `L` range samples are turned into
//! residuals `r^l - |theta_i - theta_j|`. The residuals are resampled with
//! replacement, the mean of the draws `e*` is added back to the estimated
//! distance to form a refined range `r*`, and the descent is rerun from the
//! first-pass estimates against the refined ranges.

use rand::Rng;
use thiserror::Error;

use crate::estimators::EstimatorSpec;
use crate::model::{Network, Position};
use crate::ranging::{MeasurementSet, RangeTable};
use crate::scalar::Scalar;
use crate::seeding::{purpose_seed, stream_rng, Purpose};
use crate::solver::{self, InitStrategy, SolverConfig, SolverError, SolverTrace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BootstrapError {
    #[error("cannot resample an empty residual list")]
    EmptyResiduals,
    #[error("samples_per_link and n_resample must both be at least 1")]
    BadConfig,
    #[error("requested {requested} samples per link but only {available} were measured")]
    TooFewSamples { requested: usize, available: usize },
    #[error("measurement set has {got} links, network has {expected}")]
    LinkMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapConfig {
    pub samples_per_link: usize,
    pub n_resample: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { samples_per_link: 10, n_resample: 1000, seed: 0 }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<(), BootstrapError> {
        if self.samples_per_link == 0 || self.n_resample == 0 {
            return Err(BootstrapError::BadConfig);
        }
        Ok(())
    }
}

/// Residual samples per link, link-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSet<S> {
    samples_per_link: usize,
    values: Vec<S>,
}

impl<S: Scalar> ResidualSet<S> {
    pub fn samples_per_link(&self) -> usize {
        self.samples_per_link
    }

    pub fn n_links(&self) -> usize {
        self.values.len() / self.samples_per_link.max(1)
    }

    pub fn link(&self, link: usize) -> &[S] {
        let l = self.samples_per_link;
        &self.values[link * l..(link + 1) * l]
    }
}

/// `r*` per link, aligned with [`Network::links`].
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedRanges<S>(pub Vec<S>);

impl<S: Scalar> RangeTable<S> for RefinedRanges<S> {
    fn range(&self, link: usize) -> S {
        self.0[link]
    }
    fn n_links(&self) -> usize {
        self.0.len()
    }
}

fn estimated_distance<S: Scalar>(network: &Network<S>, estimates: &[Position<S>], link: usize) -> S {
    let l = network.links()[link];
    estimates[l.i.0].distance(estimates[l.j.0])
}

/// Residuals of the first `samples_per_link` samples of every link.
pub fn residuals<S: Scalar>(
    network: &Network<S>,
    estimates: &[Position<S>],
    ms: &MeasurementSet<S>,
    samples_per_link: usize,
) -> Result<ResidualSet<S>, BootstrapError> {
    if samples_per_link == 0 {
        return Err(BootstrapError::BadConfig);
    }
    if samples_per_link > ms.samples_per_link() {
        return Err(BootstrapError::TooFewSamples {
            requested: samples_per_link,
            available: ms.samples_per_link(),
        });
    }
    if ms.n_links() != network.n_links() {
        return Err(BootstrapError::LinkMismatch { expected: network.n_links(), got: ms.n_links() });
    }
    let mut values = Vec::with_capacity(network.n_links() * samples_per_link);
    for k in 0..network.n_links() {
        let d_hat = estimated_distance(network, estimates, k);
        values.extend(ms.link_samples(k)[..samples_per_link].iter().map(|&r| r - d_hat));
    }
    Ok(ResidualSet { samples_per_link, values })
}

/// Mean of `n_resample` uniform with-replacement draws from `residuals`.
pub fn resample_mean_with<S: Scalar, R: Rng + ?Sized>(
    residuals: &[S],
    n_resample: usize,
    rng: &mut R,
) -> Result<S, BootstrapError> {
    if residuals.is_empty() {
        return Err(BootstrapError::EmptyResiduals);
    }
    if n_resample == 0 {
        return Err(BootstrapError::BadConfig);
    }
    let sum: S = (0..n_resample).map(|_| residuals[rng.random_range(0..residuals.len())]).sum();
    Ok(sum / S::of(n_resample as f64))
}

pub fn resample_mean<S: Scalar>(residuals: &[S], n_resample: usize, seed: u64) -> Result<S, BootstrapError> {
    resample_mean_with(residuals, n_resample, &mut stream_rng(seed, 0))
}

/// `r* = |theta_i - theta_j| + e*`, one resampling stream per link.
pub fn refine_ranges<S: Scalar>(
    network: &Network<S>,
    estimates: &[Position<S>],
    rs: &ResidualSet<S>,
    cfg: &BootstrapConfig,
) -> Result<RefinedRanges<S>, BootstrapError> {
    cfg.validate()?;
    if rs.n_links() != network.n_links() {
        return Err(BootstrapError::LinkMismatch { expected: network.n_links(), got: rs.n_links() });
    }
    let seed = purpose_seed(cfg.seed, Purpose::Bootstrap);
    (0..network.n_links())
        .map(|k| {
            let e_star = resample_mean_with(rs.link(k), cfg.n_resample, &mut stream_rng(seed, k as u64))?;
            Ok(estimated_distance(network, estimates, k) + e_star)
        })
        .collect::<Result<Vec<_>, _>>()
        .map(RefinedRanges)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Outcome<S> {
    pub estimates: Vec<Position<S>>,
    pub refined: RefinedRanges<S>,
    /// Descent rerun on the refined ranges.
    pub trace: SolverTrace<S>,
    /// Range samples gathered from neighbors before resampling:
    /// `samples_per_link` per sensor-neighbor pair.
    pub exchange_messages: u64,
}

impl<S> Stage2Outcome<S> {
    pub fn total_messages(&self) -> u64 {
        self.exchange_messages + self.trace.messages_sent
    }
}

pub fn run_stage2<S: Scalar>(
    network: &Network<S>,
    ms: &MeasurementSet<S>,
    stage1_estimates: &[Position<S>],
    spec: &EstimatorSpec<S>,
    solver_cfg: &SolverConfig<S>,
    cfg: &BootstrapConfig,
) -> Result<Stage2Outcome<S>, BootstrapError> {
    cfg.validate()?;
    let rs = residuals(network, stage1_estimates, ms, cfg.samples_per_link)?;
    let refined = refine_ranges(network, stage1_estimates, &rs, cfg)?;
    let rerun_cfg = solver_cfg.with_init(InitStrategy::Given(stage1_estimates.to_vec()));
    let (estimates, trace) = solver::run(network, &refined, spec, &rerun_cfg, cfg.seed)?;
    let exchange_messages = (cfg.samples_per_link * network.sensor_degree_sum()) as u64;
    Ok(Stage2Outcome { estimates, refined, trace, exchange_messages })
}
