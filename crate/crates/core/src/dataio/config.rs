//! Scenario configuration: a flat TOML key/value file. Every key is optional;
//! omitted keys take the defaults below, which reproduce the reference
//! 50-sensor, 4-anchor simulation setup.
//!
//! | key                     | default                          |
//! |-------------------------|----------------------------------|
//! | `area_length`           | 10.0 (m)                         |
//! | `area_width`            | 10.0 (m)                         |
//! | `n_sensors`             | 50                               |
//! | `anchor_positions`      | `[[0,0],[0,10],[10,10],[10,0]]`  |
//! | `comm_range`            | 3.0 (m)                          |
//! | `noise_sigma`           | 0.5 (m)                          |
//! | `nlos_bias_mean_m`      | 1.0 (m)                          |
//! | `fresh_bias_per_sample` | true                             |
//! | `nlos_ratio`            | 0.05                             |
//! | `nlos_ratios`           | `[0.05, 0.5, 0.95]`              |
//! | `samples_per_link`      | 10                               |
//! | `n_resample`            | 1000                             |
//! | `huber_alpha`           | 1.345                            |
//! | `gamma`                 | 0.01                             |
//! | `epsilon`               | 0.001 (m)                        |
//! | `max_iterations`        | 1000                             |
//! | `init_strategy`         | `"uniform_random"`               |
//! | `n_trials`              | 200                              |
//! | `master_seed`           | 1                                |
//! | `algorithms`            | all five                         |
//! | `sample_sizes`          | `[3, 5, 10, 20]`                 |
//! | `fixed_topology`        | false                            |
//! | `require_connected`     | true                             |
//! | `include_anchors`       | false                            |
//! | `gamma_halvings`        | 4                                |
//! | `divergence_cap`        | 0.05                             |

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::harness::AlgorithmId;
use crate::model::{Area, Position, TopologyConfig};
use crate::ranging::NoiseModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    UniformRandom,
    AnchorCentroid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub area_length: f64,
    pub area_width: f64,
    pub n_sensors: usize,
    pub anchor_positions: Vec<[f64; 2]>,
    pub comm_range: f64,
    pub noise_sigma: f64,
    pub nlos_bias_mean_m: f64,
    pub fresh_bias_per_sample: bool,
    pub nlos_ratio: f64,
    pub nlos_ratios: Vec<f64>,
    pub samples_per_link: usize,
    pub n_resample: usize,
    pub huber_alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub init_strategy: InitKind,
    pub n_trials: usize,
    pub master_seed: u64,
    pub algorithms: Vec<AlgorithmId>,
    pub sample_sizes: Vec<usize>,
    pub fixed_topology: bool,
    pub require_connected: bool,
    pub include_anchors: bool,
    pub gamma_halvings: u32,
    pub divergence_cap: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            area_length: 10.0,
            area_width: 10.0,
            n_sensors: 50,
            anchor_positions: vec![[0.0, 0.0], [0.0, 10.0], [10.0, 10.0], [10.0, 0.0]],
            comm_range: 3.0,
            noise_sigma: 0.5,
            nlos_bias_mean_m: 1.0,
            fresh_bias_per_sample: true,
            nlos_ratio: 0.05,
            nlos_ratios: vec![0.05, 0.5, 0.95],
            samples_per_link: 10,
            n_resample: 1000,
            huber_alpha: 1.345,
            gamma: 0.01,
            epsilon: 1e-3,
            max_iterations: 1000,
            init_strategy: InitKind::UniformRandom,
            n_trials: 200,
            master_seed: 1,
            algorithms: AlgorithmId::ALL.to_vec(),
            sample_sizes: vec![3, 5, 10, 20],
            fixed_topology: false,
            require_connected: true,
            include_anchors: false,
            gamma_halvings: 4,
            divergence_cap: 0.05,
        }
    }
}

fn positive(key: &'static str, v: f64) -> Result<(), DataError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(DataError::invalid(key, format!("must be positive and finite, got {v}")))
    }
}

fn fraction(key: &'static str, v: f64) -> Result<(), DataError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(DataError::invalid(key, format!("must lie in [0, 1], got {v}")))
    }
}

fn at_least_one(key: &'static str, v: usize) -> Result<(), DataError> {
    if v >= 1 {
        Ok(())
    } else {
        Err(DataError::invalid(key, "must be at least 1"))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        positive("area_length", self.area_length)?;
        positive("area_width", self.area_width)?;
        positive("comm_range", self.comm_range)?;
        positive("noise_sigma", self.noise_sigma)?;
        positive("nlos_bias_mean_m", self.nlos_bias_mean_m)?;
        positive("huber_alpha", self.huber_alpha)?;
        positive("gamma", self.gamma)?;
        positive("epsilon", self.epsilon)?;
        fraction("nlos_ratio", self.nlos_ratio)?;
        for &r in &self.nlos_ratios {
            fraction("nlos_ratios", r)?;
        }
        fraction("divergence_cap", self.divergence_cap)?;
        at_least_one("samples_per_link", self.samples_per_link)?;
        at_least_one("n_resample", self.n_resample)?;
        at_least_one("max_iterations", self.max_iterations)?;
        at_least_one("n_trials", self.n_trials)?;
        for &s in &self.sample_sizes {
            at_least_one("sample_sizes", s)?;
        }
        if self.anchor_positions.len() < 3 {
            return Err(DataError::invalid(
                "anchor_positions",
                format!("need at least 3 anchors, got {}", self.anchor_positions.len()),
            ));
        }
        if self.anchor_positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(DataError::invalid("anchor_positions", "coordinates must be finite"));
        }
        if self.algorithms.is_empty() {
            return Err(DataError::invalid("algorithms", "must name at least one algorithm"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, DataError> {
        let cfg: Self = toml::from_str(text).map_err(|e| DataError::Parse {
            what: "config".into(),
            message: e.message().to_owned(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The bundled reference scenario. Same as [`Default`] except for a
    /// larger step size.
    pub fn reference() -> Self {
        Self::from_toml_str(REFERENCE_CONFIG).expect("bundled reference config is valid")
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config always serializes")
    }

    pub fn topology(&self) -> TopologyConfig<f64> {
        TopologyConfig {
            area: Area { length: self.area_length, width: self.area_width },
            n_sensors: self.n_sensors,
            anchor_positions: self.anchor_positions.iter().map(|&[x, y]| Position::new(x, y)).collect(),
            comm_range: self.comm_range,
        }
    }

    pub fn noise(&self) -> NoiseModel<f64> {
        NoiseModel {
            sigma: self.noise_sigma,
            nlos_bias_mean: self.nlos_bias_mean_m,
            fresh_bias_per_sample: self.fresh_bias_per_sample,
        }
    }
}

/// Text of the bundled reference scenario.
pub const REFERENCE_CONFIG: &str = include_str!("../../configs/reference.toml");

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    ScenarioConfig::from_toml_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ScenarioConfig::from_toml_str("").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn reference_values() {
        let cfg = ScenarioConfig::from_toml_str(
            "n_sensors = 50\ncomm_range = 3.0\nnoise_sigma = 0.5\nnlos_bias_mean_m = 1.0\n\
             samples_per_link = 10\nn_resample = 1000\n",
        )
        .unwrap();
        assert_eq!(cfg.n_sensors, 50);
        assert_eq!(cfg.anchor_positions.len(), 4);
        assert_eq!(cfg.comm_range, 3.0);
        assert_eq!(cfg.noise_sigma, 0.5);
        assert_eq!(cfg.nlos_bias_mean_m, 1.0);
        assert_eq!(cfg.samples_per_link, 10);
        assert_eq!(cfg.n_resample, 1000);
    }

    #[test]
    fn reference_differs_from_defaults_only_in_gamma() {
        let r = ScenarioConfig::reference();
        assert_eq!(r.gamma, 0.05);
        assert_eq!(ScenarioConfig { gamma: 0.01, ..r }, ScenarioConfig::default());
    }

    #[test]
    fn errors_name_the_key() {
        let err = ScenarioConfig::from_toml_str("nlos_ratio = 1.5").unwrap_err();
        assert!(err.to_string().contains("nlos_ratio"), "{err}");
        let err = ScenarioConfig::from_toml_str("bogus_key = 3").unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
        let err = ScenarioConfig::from_toml_str("anchor_positions = [[0.0, 0.0]]").unwrap_err();
        assert!(err.to_string().contains("anchor_positions"), "{err}");
        let err = ScenarioConfig::from_toml_str("algorithms = [\"tukey\"]").unwrap_err();
        assert!(err.to_string().contains("tukey"), "{err}");
        let err = load_config("/definitely/not/here.toml").unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.toml"), "{err}");
    }

    #[test]
    fn round_trips_through_text() {
        let cfg = ScenarioConfig {
            gamma: 0.004,
            algorithms: vec![AlgorithmId::StageIBootstrap, AlgorithmId::NlsOriginal],
            init_strategy: InitKind::AnchorCentroid,
            nlos_ratios: vec![0.25],
            ..Default::default()
        };
        assert_eq!(ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    }
}
