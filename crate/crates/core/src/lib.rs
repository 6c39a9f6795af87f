//! Distributed cooperative localization for wireless sensor networks.
//!
//! Sensors estimate their positions by synchronous gradient descent on a
//! one-sided (relaxed) Huber loss over noisy time-of-arrival ranges, then
//! refine those estimates by bootstrap-resampling per-link range residuals
//! and descending again. The crate also carries the NLS and plain-Huber
//! baselines, accuracy metrics, and a Monte Carlo harness.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f64`, which the harness and file formats
//! use; `*32` aliases are provided for single precision.

pub mod bootstrap;
pub mod dataio;
pub mod estimators;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod ranging;
pub mod scalar;
pub mod seeding;
pub mod solver;

pub use scalar::Scalar;

pub type Position = model::Position<f64>;
pub type Network = model::Network<f64>;
pub type TopologyConfig = model::TopologyConfig<f64>;
pub type MeasurementSet = ranging::MeasurementSet<f64>;
pub type NoiseModel = ranging::NoiseModel<f64>;
pub type EstimatorSpec = estimators::EstimatorSpec<f64>;
pub type HuberParams = estimators::HuberParams<f64>;
pub type SolverConfig = solver::SolverConfig<f64>;
pub type SolverTrace = solver::SolverTrace<f64>;
pub type InitStrategy = solver::InitStrategy<f64>;

pub type Position32 = model::Position<f32>;
pub type Network32 = model::Network<f32>;
pub type MeasurementSet32 = ranging::MeasurementSet<f32>;
pub type EstimatorSpec32 = estimators::EstimatorSpec<f32>;
pub type SolverConfig32 = solver::SolverConfig<f32>;

pub use dataio::ScenarioConfig;
pub use harness::{AlgorithmId, TrialResult};
