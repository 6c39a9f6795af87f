//! Synthetic time-of-arrival ranging.
//!
//! A LOS sample is `d + n` and an NLOS sample is `d + n + b`, with
//! `n ~ N(0, sigma^2)` and `b ~ Exponential(mean = nlos_bias_mean)`. Every
//! link gets its own generator stream so the draws for one link never depend
//! on how many other links exist or in which order they are visited.

use thiserror::Error;

use crate::model::{LinkCondition, LinkConditions, Network};
use crate::scalar::Scalar;
use crate::seeding::{purpose_seed, stream_rng, Purpose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RangingError {
    #[error("noise sigma must be positive, got {0}")]
    BadSigma(f64),
    #[error("nlos bias mean must be positive, got {0}")]
    BadBiasMean(f64),
    #[error("samples_per_link must be at least 1")]
    NoSamples,
    #[error("network has no links to measure")]
    NoLinks,
    #[error("{conditions} link conditions given for {links} links")]
    ConditionMismatch { conditions: usize, links: usize },
    #[error("{got} range samples given for {links} links x {per_link} samples")]
    SampleCountMismatch { got: usize, links: usize, per_link: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel<S> {
    pub sigma: S,
    pub nlos_bias_mean: S,
    /// Draw a new NLOS bias for every sample rather than one per link.
    pub fresh_bias_per_sample: bool,
}

impl<S: Scalar> NoiseModel<S> {
    pub fn new(sigma: S, nlos_bias_mean: S) -> Self {
        Self { sigma, nlos_bias_mean, fresh_bias_per_sample: true }
    }

    pub fn validate(&self) -> Result<(), RangingError> {
        if !(self.sigma > S::zero() && self.sigma.is_finite()) {
            return Err(RangingError::BadSigma(self.sigma.to_f64_lossy()));
        }
        if !(self.nlos_bias_mean > S::zero() && self.nlos_bias_mean.is_finite()) {
            return Err(RangingError::BadBiasMean(self.nlos_bias_mean.to_f64_lossy()));
        }
        Ok(())
    }
}

/// Repeated range samples per link, stored once per unordered pair in
/// link-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet<S> {
    samples_per_link: usize,
    ranges: Vec<S>,
    conditions: Option<LinkConditions>,
}

impl<S: Scalar> MeasurementSet<S> {
    /// Wrap already-measured ranges (`ranges[link * samples_per_link + l]`).
    pub fn from_samples(
        samples_per_link: usize,
        ranges: Vec<S>,
        conditions: Option<LinkConditions>,
    ) -> Result<Self, RangingError> {
        if samples_per_link == 0 {
            return Err(RangingError::NoSamples);
        }
        if !ranges.len().is_multiple_of(samples_per_link) {
            return Err(RangingError::SampleCountMismatch {
                got: ranges.len(),
                links: ranges.len() / samples_per_link,
                per_link: samples_per_link,
            });
        }
        if let Some(c) = &conditions {
            if c.len() * samples_per_link != ranges.len() {
                return Err(RangingError::ConditionMismatch {
                    conditions: c.len(),
                    links: ranges.len() / samples_per_link,
                });
            }
        }
        Ok(Self { samples_per_link, ranges, conditions })
    }

    pub fn samples_per_link(&self) -> usize {
        self.samples_per_link
    }

    pub fn n_links(&self) -> usize {
        self.ranges.len() / self.samples_per_link
    }

    /// All samples of one link.
    pub fn link_samples(&self, link: usize) -> &[S] {
        let l = self.samples_per_link;
        &self.ranges[link * l..(link + 1) * l]
    }

    pub fn sample(&self, link: usize, l: usize) -> S {
        self.link_samples(link)[l]
    }

    pub fn raw(&self) -> &[S] {
        &self.ranges
    }

    /// Ground-truth LOS/NLOS labels, when known. Estimators never see these.
    pub fn conditions(&self) -> Option<&LinkConditions> {
        self.conditions.as_ref()
    }

    /// The first sample of every link, as consumed by a single-range solve.
    pub fn first_sample_view(&self) -> FirstSampleView<'_, S> {
        FirstSampleView { set: self }
    }

    /// Keep only the first `l` samples of every link.
    pub fn truncated(&self, l: usize) -> Result<Self, RangingError> {
        if l == 0 {
            return Err(RangingError::NoSamples);
        }
        let l = l.min(self.samples_per_link);
        let ranges = (0..self.n_links())
            .flat_map(|k| self.link_samples(k)[..l].iter().copied())
            .collect();
        Ok(Self { samples_per_link: l, ranges, conditions: self.conditions.clone() })
    }
}

/// Read access to one range per link, indexed by link.
pub trait RangeTable<S> {
    fn range(&self, link: usize) -> S;
    fn n_links(&self) -> usize;
}

impl<S: Scalar> RangeTable<S> for [S] {
    fn range(&self, link: usize) -> S {
        self[link]
    }
    fn n_links(&self) -> usize {
        self.len()
    }
}

impl<S: Scalar> RangeTable<S> for Vec<S> {
    fn range(&self, link: usize) -> S {
        self[link]
    }
    fn n_links(&self) -> usize {
        self.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FirstSampleView<'a, S> {
    set: &'a MeasurementSet<S>,
}

impl<S: Scalar> FirstSampleView<'_, S> {
    pub fn to_vec(&self) -> Vec<S> {
        (0..self.set.n_links()).map(|k| self.range(k)).collect()
    }
}

impl<S: Scalar> RangeTable<S> for FirstSampleView<'_, S> {
    fn range(&self, link: usize) -> S {
        self.set.ranges[link * self.set.samples_per_link]
    }
    fn n_links(&self) -> usize {
        self.set.n_links()
    }
}

/// Generate `samples_per_link` noisy ranges for every link of the network.
pub fn measure<S: Scalar>(
    network: &Network<S>,
    conditions: &LinkConditions,
    model: &NoiseModel<S>,
    samples_per_link: usize,
    seed: u64,
) -> Result<MeasurementSet<S>, RangingError> {
    model.validate()?;
    if samples_per_link == 0 {
        return Err(RangingError::NoSamples);
    }
    if network.n_links() == 0 {
        return Err(RangingError::NoLinks);
    }
    if conditions.len() != network.n_links() {
        return Err(RangingError::ConditionMismatch {
            conditions: conditions.len(),
            links: network.n_links(),
        });
    }
    let seed = purpose_seed(seed, Purpose::Measurements);
    let mut ranges = Vec::with_capacity(network.n_links() * samples_per_link);
    for k in 0..network.n_links() {
        let d = network.true_distance(k);
        let mut rng = stream_rng(seed, k as u64);
        let mut bias = None;
        for _ in 0..samples_per_link {
            let noise = S::sample_standard_normal(&mut rng) * model.sigma;
            let b = match conditions.get(k) {
                LinkCondition::Los => S::zero(),
                LinkCondition::Nlos if model.fresh_bias_per_sample => {
                    S::sample_exp1(&mut rng) * model.nlos_bias_mean
                }
                LinkCondition::Nlos => {
                    *bias.get_or_insert_with(|| S::sample_exp1(&mut rng) * model.nlos_bias_mean)
                }
            };
            ranges.push(d + noise + b);
        }
    }
    Ok(MeasurementSet {
        samples_per_link,
        ranges,
        conditions: Some(conditions.clone()),
    })
}
