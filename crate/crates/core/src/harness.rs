//! Monte Carlo comparison of the five localization pipelines.
//!
//! Each trial draws one realization (topology, link conditions, range
//! samples, initial estimates) from seeds derived from the master seed and
//! the trial index, and runs every configured algorithm on that same
//! realization. Trials are independent and run on a rayon pool; results are
//! collected in trial order so the output never depends on scheduling.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bootstrap::{run_stage2, BootstrapConfig, BootstrapError};
use crate::dataio::{DataError, InitKind, ScenarioConfig};
use crate::estimators::{EstimatorError, EstimatorKind, EstimatorSpec, HuberParams};
use crate::metrics::{self, EcdfTable, MetricsError};
use crate::model::{assign_link_conditions, generate_topology, ModelError, Network, NodeId, Position};
use crate::ranging::{measure, MeasurementSet, RangingError};
use crate::seeding::{derive_seed, purpose_seed, Purpose};
use crate::solver::{self, InitStrategy, SolverConfig, SolverError, SolverTrace};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ranging(#[from] RangingError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Bootstrap(#[from] BootstrapError),
    #[error("no topology without isolated sensors after {0} attempts")]
    Disconnected(usize),
    #[error("{algorithm} diverged in {diverged} of {trials} trials at nlos ratio {nlos_ratio}, above the {cap} cap")]
    DivergenceCap { algorithm: AlgorithmId, nlos_ratio: f64, diverged: usize, trials: usize, cap: f64 },
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

impl HarnessError {
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            HarnessError::Solver(SolverError::Diverged { .. })
                | HarnessError::Bootstrap(BootstrapError::Solver(SolverError::Diverged { .. }))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AlgorithmId {
    /// Relaxed Huber descent on the first range sample.
    #[serde(rename = "stage1")]
    StageI,
    /// Stage I followed by a classical-Huber descent on the same ranges.
    #[serde(rename = "stage1_stage2")]
    StageIStageII,
    #[serde(rename = "nls_original")]
    NlsOriginal,
    #[serde(rename = "nls_relaxed")]
    NlsRelaxed,
    /// Stage I followed by bootstrap range refinement and a second descent.
    #[serde(rename = "stage1_bootstrap")]
    StageIBootstrap,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 5] = [
        AlgorithmId::StageI,
        AlgorithmId::StageIStageII,
        AlgorithmId::NlsOriginal,
        AlgorithmId::NlsRelaxed,
        AlgorithmId::StageIBootstrap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmId::StageI => "stage1",
            AlgorithmId::StageIStageII => "stage1_stage2",
            AlgorithmId::NlsOriginal => "nls_original",
            AlgorithmId::NlsRelaxed => "nls_relaxed",
            AlgorithmId::StageIBootstrap => "stage1_bootstrap",
        }
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmId {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| DataError::invalid("algorithms", format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub algorithm: AlgorithmId,
    pub nlos_ratio: f64,
    pub trial: usize,
    pub rmse: f64,
    /// Mean squared sensor error; averaged over trials before the root.
    pub mse: f64,
    pub ger: f64,
    pub gde: f64,
    pub iterations_used: usize,
    pub messages_sent: u64,
    pub converged: bool,
    pub gamma_used: f64,
}

/// One row of a convergence trace. Iterations and messages run on across
/// stages of multi-stage pipelines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub max_delta: f64,
    pub cost: f64,
    pub messages: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmRun {
    pub estimates: Vec<Position<f64>>,
    pub result: TrialResult,
    pub trace: Vec<TraceRow>,
}

/// Where a run sits in the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialContext {
    pub trial: usize,
    pub nlos_ratio: f64,
    pub seed: u64,
}

#[derive(Default)]
struct TraceBuilder {
    rows: Vec<TraceRow>,
    iterations: usize,
    messages: u64,
    converged: bool,
}

impl TraceBuilder {
    fn extend(&mut self, trace: &SolverTrace<f64>, extra_messages: u64) {
        self.messages += extra_messages;
        let per_round = if trace.iterations_used > 0 {
            trace.messages_sent / trace.iterations_used as u64
        } else {
            0
        };
        for (k, (&delta, &cost)) in trace.max_deltas.iter().zip(&trace.costs).enumerate() {
            self.rows.push(TraceRow {
                iteration: self.iterations + k + 1,
                max_delta: delta,
                cost,
                messages: self.messages + per_round * (k as u64 + 1),
            });
        }
        self.iterations += trace.iterations_used;
        self.messages += trace.messages_sent;
        self.converged = trace.converged;
    }
}

fn huber_params(cfg: &ScenarioConfig) -> HuberParams<f64> {
    HuberParams::new(cfg.huber_alpha, cfg.noise_sigma)
}

fn base_solver(cfg: &ScenarioConfig, gamma: f64) -> SolverConfig<f64> {
    SolverConfig {
        gamma,
        epsilon: cfg.epsilon,
        max_iterations: cfg.max_iterations,
        init: match cfg.init_strategy {
            InitKind::UniformRandom => InitStrategy::UniformRandom,
            InitKind::AnchorCentroid => InitStrategy::AnchorCentroid,
        },
    }
}

/// Nodes over which pairwise metrics are taken.
pub fn metric_nodes(network: &Network<f64>, include_anchors: bool) -> Vec<NodeId> {
    if include_anchors {
        (0..network.n_nodes()).map(NodeId).collect()
    } else {
        network.sensor_ids().collect()
    }
}

fn run_pipeline(
    algo: AlgorithmId,
    network: &Network<f64>,
    ms: &MeasurementSet<f64>,
    cfg: &ScenarioConfig,
    gamma: f64,
    seed: u64,
) -> Result<(Vec<Position<f64>>, TraceBuilder), HarnessError> {
    let params = huber_params(cfg);
    let solver_cfg = base_solver(cfg, gamma);
    let first = ms.first_sample_view();
    let mut tb = TraceBuilder::default();
    let spec = match algo {
        AlgorithmId::NlsOriginal => EstimatorSpec::nls_original(),
        AlgorithmId::NlsRelaxed => EstimatorSpec::nls_relaxed(),
        _ => EstimatorSpec::huber_relaxed(params)?,
    };
    let (stage1, trace) = solver::run(network, &first, &spec, &solver_cfg, seed)?;
    tb.extend(&trace, 0);
    let estimates = match algo {
        AlgorithmId::StageI | AlgorithmId::NlsOriginal | AlgorithmId::NlsRelaxed => stage1,
        AlgorithmId::StageIStageII => {
            let refine = spec.with_kind(EstimatorKind::HuberOriginal);
            let cfg2 = solver_cfg.with_init(InitStrategy::Given(stage1));
            let (est, trace) = solver::run(network, &first, &refine, &cfg2, seed)?;
            tb.extend(&trace, 0);
            est
        }
        AlgorithmId::StageIBootstrap => {
            let boot = BootstrapConfig {
                samples_per_link: cfg.samples_per_link.min(ms.samples_per_link()),
                n_resample: cfg.n_resample,
                seed: purpose_seed(seed, Purpose::Bootstrap),
            };
            let out = run_stage2(network, ms, &stage1, &spec, &solver_cfg, &boot)?;
            tb.extend(&out.trace, out.exchange_messages);
            out.estimates
        }
    };
    Ok((estimates, tb))
}

/// Run one pipeline on one realization. A diverging descent is retried with
/// the step size halved, up to `gamma_halvings` times.
pub fn run_algorithm(
    algo: AlgorithmId,
    network: &Network<f64>,
    ms: &MeasurementSet<f64>,
    cfg: &ScenarioConfig,
    ctx: TrialContext,
) -> Result<AlgorithmRun, HarnessError> {
    let mut gamma = cfg.gamma;
    let mut attempt = 0;
    let (estimates, tb) = loop {
        match run_pipeline(algo, network, ms, cfg, gamma, ctx.seed) {
            Err(e) if e.is_divergence() && attempt < cfg.gamma_halvings => {
                log::debug!("{algo} trial {} diverged at gamma {gamma}; halving", ctx.trial);
                gamma *= 0.5;
                attempt += 1;
            }
            other => break other?,
        }
    };
    let truth = network.positions();
    let sensors: Vec<NodeId> = network.sensor_ids().collect();
    let nodes = metric_nodes(network, cfg.include_anchors);
    let mse = metrics::mean_squared_error(&estimates, truth, &sensors)?;
    let result = TrialResult {
        algorithm: algo,
        nlos_ratio: ctx.nlos_ratio,
        trial: ctx.trial,
        rmse: mse.sqrt(),
        mse,
        ger: metrics::ger(&estimates, truth, &nodes)?,
        gde: metrics::gde(&estimates, truth, &nodes, cfg.comm_range)?,
        iterations_used: tb.iterations,
        messages_sent: tb.messages,
        converged: tb.converged,
        gamma_used: gamma,
    };
    Ok(AlgorithmRun { estimates, result, trace: tb.rows })
}

/// Aggregates for one algorithm over the non-diverged trials.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmSummary {
    pub algorithm: AlgorithmId,
    pub nlos_ratio: f64,
    pub trials: usize,
    pub diverged: usize,
    /// `sqrt(mean_t mse_t)`: squared errors averaged over trials, then rooted.
    pub rmse: f64,
    /// Arithmetic mean of per-trial RMSE.
    pub mean_rmse: f64,
    pub mean_ger: f64,
    pub mean_gde: f64,
    pub mean_iterations: f64,
    pub mean_messages: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub nlos_ratio: f64,
    /// Successful runs, ordered by trial then by configured algorithm order.
    pub results: Vec<TrialResult>,
    pub diverged: Vec<(AlgorithmId, usize)>,
    pub summaries: Vec<AlgorithmSummary>,
    pub ecdfs: Vec<(AlgorithmId, EcdfTable)>,
    /// Convergence traces of trial 0.
    pub traces: Vec<(AlgorithmId, usize, Vec<TraceRow>)>,
}

impl ScenarioOutcome {
    pub fn summary(&self, algo: AlgorithmId) -> Option<&AlgorithmSummary> {
        self.summaries.iter().find(|s| s.algorithm == algo)
    }

    pub fn results_for(&self, algo: AlgorithmId) -> impl Iterator<Item = &TrialResult> {
        self.results.iter().filter(move |r| r.algorithm == algo)
    }
}

/// Seeds of one trial's realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeeds {
    pub topology: u64,
    pub realization: u64,
}

pub fn trial_seeds(cfg: &ScenarioConfig, trial: usize, nlos_ratio: f64) -> TrialSeeds {
    let topo_trial = if cfg.fixed_topology { 0 } else { trial as u64 };
    TrialSeeds {
        topology: derive_seed(cfg.master_seed, &[0x746f_706f, topo_trial]),
        realization: derive_seed(cfg.master_seed, &[trial as u64, nlos_ratio.to_bits()]),
    }
}

const MAX_TOPOLOGY_ATTEMPTS: usize = 1000;

/// Topology for a trial, redrawn while any sensor is isolated if the config
/// asks for it.
pub fn trial_network(cfg: &ScenarioConfig, seeds: TrialSeeds) -> Result<Network<f64>, HarnessError> {
    let topo = cfg.topology();
    for attempt in 0..MAX_TOPOLOGY_ATTEMPTS {
        let seed = if attempt == 0 { seeds.topology } else { derive_seed(seeds.topology, &[attempt as u64]) };
        let net = generate_topology(&topo, seed)?;
        if !cfg.require_connected || net.connectivity().all_connected() {
            return Ok(net);
        }
    }
    Err(HarnessError::Disconnected(MAX_TOPOLOGY_ATTEMPTS))
}

/// Network plus `samples_per_link` range samples for one trial.
pub fn trial_realization(
    cfg: &ScenarioConfig,
    trial: usize,
    nlos_ratio: f64,
    samples_per_link: usize,
) -> Result<(Network<f64>, MeasurementSet<f64>, u64), HarnessError> {
    let seeds = trial_seeds(cfg, trial, nlos_ratio);
    let network = trial_network(cfg, seeds)?;
    let conditions = assign_link_conditions(network.n_links(), nlos_ratio, seeds.realization)?;
    let ms = measure(&network, &conditions, &cfg.noise(), samples_per_link, seeds.realization)?;
    Ok((network, ms, seeds.realization))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub jobs: Option<usize>,
}

fn in_pool<T: Send>(opts: RunOptions, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    match opts.jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| HarnessError::Pool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

type TrialRuns = Vec<(AlgorithmId, Result<AlgorithmRun, HarnessError>)>;

fn run_trials(
    cfg: &ScenarioConfig,
    nlos_ratio: f64,
    algorithms: &[AlgorithmId],
    samples_per_link: usize,
    opts: RunOptions,
) -> Result<Vec<TrialRuns>, HarnessError> {
    in_pool(opts, || {
        (0..cfg.n_trials)
            .into_par_iter()
            .map(|trial| {
                let (network, ms, seed) = trial_realization(cfg, trial, nlos_ratio, samples_per_link)?;
                let ctx = TrialContext { trial, nlos_ratio, seed };
                Ok(algorithms
                    .iter()
                    .map(|&algo| (algo, run_algorithm(algo, &network, &ms, cfg, ctx)))
                    .collect())
            })
            .collect::<Result<Vec<_>, HarnessError>>()
    })?
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

pub fn summarize(
    algorithm: AlgorithmId,
    nlos_ratio: f64,
    results: &[&TrialResult],
    diverged: usize,
) -> AlgorithmSummary {
    AlgorithmSummary {
        algorithm,
        nlos_ratio,
        trials: results.len(),
        diverged,
        rmse: mean(results.iter().map(|r| r.mse)).sqrt(),
        mean_rmse: mean(results.iter().map(|r| r.rmse)),
        mean_ger: mean(results.iter().map(|r| r.ger)),
        mean_gde: mean(results.iter().map(|r| r.gde)),
        mean_iterations: mean(results.iter().map(|r| r.iterations_used as f64)),
        mean_messages: mean(results.iter().map(|r| r.messages_sent as f64)),
    }
}

fn collect_outcome(
    cfg: &ScenarioConfig,
    nlos_ratio: f64,
    algorithms: &[AlgorithmId],
    trials: Vec<TrialRuns>,
) -> Result<ScenarioOutcome, HarnessError> {
    let mut results = Vec::new();
    let mut diverged = Vec::new();
    let mut traces = Vec::new();
    for (trial, runs) in trials.into_iter().enumerate() {
        for (algo, run) in runs {
            match run {
                Ok(run) => {
                    if trial == 0 {
                        traces.push((algo, trial, run.trace));
                    }
                    results.push(run.result);
                }
                Err(e) if e.is_divergence() => {
                    log::warn!("{algo} trial {trial} at nlos {nlos_ratio}: {e}");
                    diverged.push((algo, trial));
                }
                Err(e) => return Err(e),
            }
        }
    }
    let mut summaries = Vec::new();
    let mut ecdfs = Vec::new();
    for &algo in algorithms {
        let mine: Vec<&TrialResult> = results.iter().filter(|r| r.algorithm == algo).collect();
        let n_div = diverged.iter().filter(|(a, _)| *a == algo).count();
        if n_div as f64 > cfg.divergence_cap * cfg.n_trials as f64 {
            return Err(HarnessError::DivergenceCap {
                algorithm: algo,
                nlos_ratio,
                diverged: n_div,
                trials: cfg.n_trials,
                cap: cfg.divergence_cap,
            });
        }
        if !mine.is_empty() {
            let rmses: Vec<f64> = mine.iter().map(|r| r.rmse).collect();
            ecdfs.push((algo, metrics::ecdf(&rmses)?));
        }
        summaries.push(summarize(algo, nlos_ratio, &mine, n_div));
    }
    Ok(ScenarioOutcome { nlos_ratio, results, diverged, summaries, ecdfs, traces })
}

/// Run every configured algorithm over `n_trials` paired realizations at
/// one NLOS ratio.
pub fn run_scenario(cfg: &ScenarioConfig, nlos_ratio: f64, opts: RunOptions) -> Result<ScenarioOutcome, HarnessError> {
    cfg.validate()?;
    let trials = run_trials(cfg, nlos_ratio, &cfg.algorithms, cfg.samples_per_link, opts)?;
    collect_outcome(cfg, nlos_ratio, &cfg.algorithms, trials)
}

/// [`run_scenario`] for every ratio in `nlos_ratios`.
pub fn run_comparison(cfg: &ScenarioConfig, opts: RunOptions) -> Result<Vec<ScenarioOutcome>, HarnessError> {
    cfg.nlos_ratios.iter().map(|&r| run_scenario(cfg, r, opts)).collect()
}

/// Every configured algorithm on one fixed network and measurement set,
/// repeated `n_trials` times with different initialization and resampling
/// seeds. Results carry a NaN NLOS ratio since link conditions are unknown.
pub fn run_dataset(
    network: &Network<f64>,
    ms: &MeasurementSet<f64>,
    cfg: &ScenarioConfig,
    opts: RunOptions,
) -> Result<ScenarioOutcome, HarnessError> {
    cfg.validate()?;
    let ratio = f64::NAN;
    let trials = in_pool(opts, || {
        (0..cfg.n_trials)
            .into_par_iter()
            .map(|trial| {
                let seed = derive_seed(cfg.master_seed, &[trial as u64, 0x6461_7461]);
                let ctx = TrialContext { trial, nlos_ratio: ratio, seed };
                cfg.algorithms.iter().map(|&a| (a, run_algorithm(a, network, ms, cfg, ctx))).collect::<TrialRuns>()
            })
            .collect::<Vec<_>>()
    })?;
    collect_outcome(cfg, ratio, &cfg.algorithms, trials)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub samples_per_link: usize,
    pub results: Vec<TrialResult>,
    pub summary: AlgorithmSummary,
    pub ecdf: EcdfTable,
}

/// Bootstrap pipeline at several sample sizes. Every size sees the same
/// trials; size `s` uses the first `s` samples of each link.
pub fn sample_size_sweep(
    cfg: &ScenarioConfig,
    sizes: &[usize],
    opts: RunOptions,
) -> Result<Vec<SweepEntry>, HarnessError> {
    cfg.validate()?;
    if sizes.contains(&0) {
        return Err(DataError::invalid("sample_sizes", "must be at least 1").into());
    }
    let Some(&max_size) = sizes.iter().max() else {
        return Ok(Vec::new());
    };
    let nlos_ratio = cfg.nlos_ratio;
    let per_trial: Vec<Vec<Result<AlgorithmRun, HarnessError>>> = in_pool(opts, || {
        (0..cfg.n_trials)
            .into_par_iter()
            .map(|trial| {
                let (network, ms, seed) = trial_realization(cfg, trial, nlos_ratio, max_size)?;
                let ctx = TrialContext { trial, nlos_ratio, seed };
                sizes
                    .iter()
                    .map(|&s| {
                        let sized = ScenarioConfig { samples_per_link: s, ..cfg.clone() };
                        let truncated = ms.truncated(s)?;
                        Ok(run_algorithm(AlgorithmId::StageIBootstrap, &network, &truncated, &sized, ctx))
                    })
                    .collect::<Result<Vec<_>, HarnessError>>()
            })
            .collect::<Result<Vec<_>, HarnessError>>()
    })??;

    let mut entries = Vec::new();
    for (k, &size) in sizes.iter().enumerate() {
        let mut results = Vec::new();
        let mut n_div = 0;
        for runs in &per_trial {
            match &runs[k] {
                Ok(run) => results.push(run.result.clone()),
                Err(e) if e.is_divergence() => n_div += 1,
                Err(e) => return Err(HarnessError::Pool(e.to_string())),
            }
        }
        if n_div as f64 > cfg.divergence_cap * cfg.n_trials as f64 {
            return Err(HarnessError::DivergenceCap {
                algorithm: AlgorithmId::StageIBootstrap,
                nlos_ratio,
                diverged: n_div,
                trials: cfg.n_trials,
                cap: cfg.divergence_cap,
            });
        }
        let refs: Vec<&TrialResult> = results.iter().collect();
        let summary = summarize(AlgorithmId::StageIBootstrap, nlos_ratio, &refs, n_div);
        let ecdf = metrics::ecdf(&results.iter().map(|r| r.rmse).collect::<Vec<_>>())?;
        entries.push(SweepEntry { samples_per_link: size, results, summary, ecdf });
    }
    Ok(entries)
}
