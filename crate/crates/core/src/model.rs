//! Network domain types: node identities, positions, the link set and the
//! per-node neighbor sets, plus random topology generation.
//!
//! Node indices are zero-based. Sensors occupy `0..n_sensors` and anchors
//! occupy `n_sensors..n_sensors + n_anchors`, so a node's role follows from
//! its index alone.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use rand::seq::index;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::seeding::{purpose_seed, rng_from_seed, Purpose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("at least 3 anchors are required for 2-D localization, got {0}")]
    TooFewAnchors(usize),
    #[error("communication range must be positive and finite, got {0}")]
    BadRange(f64),
    #[error("area dimensions must be positive and finite, got {0} x {1}")]
    BadArea(f64, f64),
    #[error("position of node {0} is not finite")]
    NonFinitePosition(usize),
    #[error("nlos ratio must lie in [0, 1], got {0}")]
    BadNlosRatio(f64),
    #[error("network has {got} nodes but {needed} were declared")]
    NodeCountMismatch { got: usize, needed: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Sensor,
    Anchor,
}

/// Point (or displacement) in the plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position<S> {
    pub x: S,
    pub y: S,
}

impl<S: Scalar> Position<S> {
    pub fn new(x: S, y: S) -> Self {
        Self { x, y }
    }

    pub fn zero() -> Self {
        Self::new(S::zero(), S::zero())
    }

    pub fn norm(self) -> S {
        self.x.hypot(self.y)
    }

    pub fn norm_squared(self) -> S {
        self.x * self.x + self.y * self.y
    }

    pub fn distance(self, other: Self) -> S {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn cast<T: Scalar>(self) -> Position<T> {
        Position::new(T::of(self.x.to_f64_lossy()), T::of(self.y.to_f64_lossy()))
    }
}

impl<S: Scalar> Add for Position<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<S: Scalar> AddAssign for Position<S> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<S: Scalar> Sub for Position<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<S: Scalar> SubAssign for Position<S> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<S: Scalar> Mul<S> for Position<S> {
    type Output = Self;
    fn mul(self, k: S) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

impl<S: Scalar> Neg for Position<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Unordered node pair stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Link {
    pub i: NodeId,
    pub j: NodeId,
}

impl Link {
    /// Normalizes the order of the endpoints.
    pub fn new(a: NodeId, b: NodeId) -> Self {
        if a <= b {
            Self { i: a, j: b }
        } else {
            Self { i: b, j: a }
        }
    }
}

/// Entry of a neighbor set: the neighbor and the index of the shared link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub node: NodeId,
    pub link: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkCondition {
    Los,
    Nlos,
}

/// Per-link LOS/NLOS labels, aligned with [`Network::links`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkConditions(pub Vec<LinkCondition>);

impl LinkConditions {
    pub fn all(condition: LinkCondition, n_links: usize) -> Self {
        Self(vec![condition; n_links])
    }

    pub fn get(&self, link: usize) -> LinkCondition {
        self.0[link]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn nlos_count(&self) -> usize {
        self.0.iter().filter(|c| **c == LinkCondition::Nlos).count()
    }
}

/// Adjacency derived from positions: the link set `S` (sorted) and the
/// neighbor sets `S_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    pub links: Vec<Link>,
    pub neighbors: Vec<Vec<Neighbor>>,
}

impl Adjacency {
    /// Build adjacency from an explicit list of node pairs. Duplicates and
    /// self-pairs are dropped.
    pub fn from_pairs(n_nodes: usize, pairs: impl IntoIterator<Item = (NodeId, NodeId)>) -> Self {
        let mut links: Vec<Link> = pairs
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| Link::new(a, b))
            .collect();
        links.sort_unstable();
        links.dedup();
        let mut neighbors = vec![Vec::new(); n_nodes];
        for (k, link) in links.iter().enumerate() {
            neighbors[link.i.0].push(Neighbor { node: link.j, link: k });
            neighbors[link.j.0].push(Neighbor { node: link.i, link: k });
        }
        Self { links, neighbors }
    }
}

/// Link every pair of nodes at distance `<= comm_range`.
pub fn build_adjacency<S: Scalar>(positions: &[Position<S>], comm_range: S) -> Adjacency {
    let n = positions.len();
    let pairs = (0..n).flat_map(|i| {
        ((i + 1)..n)
            .filter(move |&j| positions[i].distance(positions[j]) <= comm_range)
            .map(move |j| (NodeId(i), NodeId(j)))
    });
    Adjacency::from_pairs(n, pairs)
}

/// Rectangular deployment area `[0, length] x [0, width]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Area<S> {
    pub length: S,
    pub width: S,
}

impl<S: Scalar> Area<S> {
    pub fn diagonal(&self) -> S {
        self.length.hypot(self.width)
    }

    pub fn contains(&self, p: Position<S>) -> bool {
        p.x >= S::zero() && p.x <= self.length && p.y >= S::zero() && p.y <= self.width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyConfig<S> {
    pub area: Area<S>,
    pub n_sensors: usize,
    pub anchor_positions: Vec<Position<S>>,
    pub comm_range: S,
}

impl<S: Scalar> TopologyConfig<S> {
    /// 50 sensors, anchors on the corners of a 10 m x 10 m square, 3 m range.
    pub fn reference() -> Self {
        let c = S::of(10.0);
        let z = S::zero();
        Self {
            area: Area { length: c, width: c },
            n_sensors: 50,
            anchor_positions: vec![
                Position::new(z, z),
                Position::new(z, c),
                Position::new(c, c),
                Position::new(c, z),
            ],
            comm_range: S::of(3.0),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.anchor_positions.len() < 3 {
            return Err(ModelError::TooFewAnchors(self.anchor_positions.len()));
        }
        check_range(self.comm_range)?;
        let (l, w) = (self.area.length, self.area.width);
        if !(l > S::zero() && w > S::zero() && l.is_finite() && w.is_finite()) {
            return Err(ModelError::BadArea(l.to_f64_lossy(), w.to_f64_lossy()));
        }
        Ok(())
    }
}

fn check_range<S: Scalar>(r: S) -> Result<(), ModelError> {
    if r > S::zero() && r.is_finite() {
        Ok(())
    } else {
        Err(ModelError::BadRange(r.to_f64_lossy()))
    }
}

/// Nodes whose neighborhoods are too small for reliable localization.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConnectivityReport {
    pub isolated: Vec<NodeId>,
    pub fewer_than_three: Vec<NodeId>,
}

impl ConnectivityReport {
    pub fn all_connected(&self) -> bool {
        self.isolated.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<S> {
    n_sensors: usize,
    n_anchors: usize,
    positions: Vec<Position<S>>,
    comm_range: S,
    area: Area<S>,
    adjacency: Adjacency,
}

impl<S: Scalar> Network<S> {
    /// Network from explicit ground-truth positions, sensors first.
    /// Adjacency follows the communication range.
    pub fn from_positions(
        n_sensors: usize,
        positions: Vec<Position<S>>,
        comm_range: S,
    ) -> Result<Self, ModelError> {
        check_range(comm_range)?;
        let adjacency = build_adjacency(&positions, comm_range);
        Self::with_adjacency(n_sensors, positions, comm_range, adjacency)
    }

    /// Network with caller-supplied adjacency (e.g. links observed in a
    /// measurement campaign rather than implied by a range threshold).
    pub fn with_adjacency(
        n_sensors: usize,
        positions: Vec<Position<S>>,
        comm_range: S,
        adjacency: Adjacency,
    ) -> Result<Self, ModelError> {
        check_range(comm_range)?;
        if positions.len() < n_sensors {
            return Err(ModelError::NodeCountMismatch { got: positions.len(), needed: n_sensors });
        }
        if adjacency.neighbors.len() != positions.len() {
            return Err(ModelError::NodeCountMismatch {
                got: adjacency.neighbors.len(),
                needed: positions.len(),
            });
        }
        if let Some(k) = positions.iter().position(|p| !p.is_finite()) {
            return Err(ModelError::NonFinitePosition(k));
        }
        let area = bounding_area(&positions);
        Ok(Self {
            n_sensors,
            n_anchors: positions.len() - n_sensors,
            positions,
            comm_range,
            area,
            adjacency,
        })
    }

    /// Replace the nominal deployment area (used for random initialization
    /// and the divergence guard). Defaults to the bounding box of the nodes.
    pub fn with_area(mut self, area: Area<S>) -> Self {
        self.area = area;
        self
    }

    pub fn n_sensors(&self) -> usize {
        self.n_sensors
    }

    pub fn n_anchors(&self) -> usize {
        self.n_anchors
    }

    pub fn n_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn comm_range(&self) -> S {
        self.comm_range
    }

    pub fn area(&self) -> Area<S> {
        self.area
    }

    pub fn positions(&self) -> &[Position<S>] {
        &self.positions
    }

    pub fn position(&self, id: NodeId) -> Position<S> {
        self.positions[id.0]
    }

    pub fn role(&self, id: NodeId) -> Role {
        if id.0 < self.n_sensors {
            Role::Sensor
        } else {
            Role::Anchor
        }
    }

    pub fn sensor_ids(&self) -> impl ExactSizeIterator<Item = NodeId> + Clone {
        (0..self.n_sensors).map(NodeId)
    }

    pub fn anchor_ids(&self) -> impl ExactSizeIterator<Item = NodeId> + Clone {
        (self.n_sensors..self.n_nodes()).map(NodeId)
    }

    pub fn anchor_positions(&self) -> &[Position<S>] {
        &self.positions[self.n_sensors..]
    }

    pub fn links(&self) -> &[Link] {
        &self.adjacency.links
    }

    pub fn n_links(&self) -> usize {
        self.adjacency.links.len()
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    /// Neighbor set of a node together with the shared link indices.
    pub fn neighbor_links(&self, id: NodeId) -> &[Neighbor] {
        &self.adjacency.neighbors[id.0]
    }

    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.neighbors[id.0].iter().map(|n| n.node)
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.adjacency.neighbors[id.0].len()
    }

    /// Sum of neighborhood sizes over sensors: one received broadcast per
    /// neighbor per synchronous round.
    pub fn sensor_degree_sum(&self) -> usize {
        self.sensor_ids().map(|i| self.degree(i)).sum()
    }

    pub fn link_index(&self, a: NodeId, b: NodeId) -> Option<usize> {
        self.adjacency.links.binary_search(&Link::new(a, b)).ok()
    }

    pub fn true_distance(&self, link: usize) -> S {
        let l = self.adjacency.links[link];
        self.position(l.i).distance(self.position(l.j))
    }

    pub fn connectivity(&self) -> ConnectivityReport {
        let mut report = ConnectivityReport::default();
        for id in self.sensor_ids() {
            match self.degree(id) {
                0 => {
                    report.isolated.push(id);
                    report.fewer_than_three.push(id);
                }
                1 | 2 => report.fewer_than_three.push(id),
                _ => {}
            }
        }
        report
    }
}

fn bounding_area<S: Scalar>(positions: &[Position<S>]) -> Area<S> {
    let (mut l, mut w) = (S::zero(), S::zero());
    for p in positions {
        l = l.max(p.x.abs());
        w = w.max(p.y.abs());
    }
    Area {
        length: if l > S::zero() { l } else { S::one() },
        width: if w > S::zero() { w } else { S::one() },
    }
}

/// Draw sensors uniformly over the area and place anchors as configured.
pub fn generate_topology<S: Scalar>(
    config: &TopologyConfig<S>,
    seed: u64,
) -> Result<Network<S>, ModelError> {
    config.validate()?;
    let mut rng = rng_from_seed(purpose_seed(seed, Purpose::Topology));
    let mut positions = Vec::with_capacity(config.n_sensors + config.anchor_positions.len());
    for _ in 0..config.n_sensors {
        let x = S::sample_open01(&mut rng) * config.area.length;
        let y = S::sample_open01(&mut rng) * config.area.width;
        positions.push(Position::new(x, y));
    }
    positions.extend_from_slice(&config.anchor_positions);
    let net = Network::from_positions(config.n_sensors, positions, config.comm_range)?;
    let report = net.connectivity();
    if !report.isolated.is_empty() {
        log::debug!("topology seed {seed}: {} isolated sensors", report.isolated.len());
    }
    Ok(net.with_area(config.area))
}

/// Label `round(ratio * n_links)` uniformly chosen links as NLOS.
pub fn assign_link_conditions(
    n_links: usize,
    nlos_ratio: f64,
    seed: u64,
) -> Result<LinkConditions, ModelError> {
    if !(0.0..=1.0).contains(&nlos_ratio) {
        return Err(ModelError::BadNlosRatio(nlos_ratio));
    }
    let n_nlos = ((nlos_ratio * n_links as f64).round() as usize).min(n_links);
    let mut conditions = LinkConditions::all(LinkCondition::Los, n_links);
    let mut rng = rng_from_seed(purpose_seed(seed, Purpose::Conditions));
    for k in index::sample(&mut rng, n_links, n_nlos) {
        conditions.0[k] = LinkCondition::Nlos;
    }
    Ok(conditions)
}
