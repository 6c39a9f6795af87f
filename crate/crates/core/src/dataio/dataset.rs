//! External measurement campaigns as two CSV tables.
//!
//! `nodes.csv` has header `id,role,x,y` (role is `sensor` or `anchor`) and
//! `ranges.csv` has header `i,j,l,range_m`. A link exists exactly when some
//! range between its endpoints was recorded. When both `(i,j)` and `(j,i)`
//! carry sample `l` the two values are averaged.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::DataError;
use crate::model::{Adjacency, Network, NodeId, Position};
use crate::ranging::MeasurementSet;

pub const NODE_HEADER: [&str; 4] = ["id", "role", "x", "y"];
pub const RANGE_HEADER: [&str; 4] = ["i", "j", "l", "range_m"];

/// Relative disagreement between mirrored samples that triggers a warning.
const MIRROR_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalDataset {
    pub network: Network<f64>,
    pub measurements: MeasurementSet<f64>,
    /// File id of each internal node (sensors first, then anchors).
    pub node_ids: Vec<u64>,
    pub warnings: Vec<String>,
}

impl ExternalDataset {
    pub fn internal_id(&self, file_id: u64) -> Option<NodeId> {
        self.node_ids.iter().position(|&id| id == file_id).map(NodeId)
    }
}

fn reader(path: &Path, expected: &[&str; 4]) -> Result<csv::Reader<std::fs::File>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DataError::csv(path, e))?;
    let header = rdr.headers().map_err(|e| DataError::csv(path, e))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(DataError::dataset(
            path,
            format!("header must be `{}`, found `{}`", expected.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    Ok(rdr)
}

fn field<T: std::str::FromStr>(path: &Path, row: usize, name: &str, raw: &str) -> Result<T, DataError> {
    raw.parse()
        .map_err(|_| DataError::dataset(path, format!("row {row}: bad {name} `{raw}`")))
}

struct NodeRow {
    id: u64,
    anchor: bool,
    pos: Position<f64>,
}

fn read_nodes(path: &Path) -> Result<Vec<NodeRow>, DataError> {
    let mut rows = Vec::new();
    for (k, rec) in reader(path, &NODE_HEADER)?.records().enumerate() {
        let rec = rec.map_err(|e| DataError::csv(path, e))?;
        let row = k + 2;
        let anchor = match rec[1].to_ascii_lowercase().as_str() {
            "anchor" => true,
            "sensor" => false,
            other => return Err(DataError::dataset(path, format!("row {row}: unknown role `{other}`"))),
        };
        let pos = Position::new(field(path, row, "x", &rec[2])?, field(path, row, "y", &rec[3])?);
        if !pos.is_finite() {
            return Err(DataError::dataset(path, format!("row {row}: non-finite position")));
        }
        rows.push(NodeRow { id: field(path, row, "id", &rec[0])?, anchor, pos });
    }
    Ok(rows)
}

/// Load a dataset. `comm_range` is not used to form links; it only scales
/// the distance-error metric and bounds the solver's search region.
pub fn load_dataset(
    node_path: impl AsRef<Path>,
    range_path: impl AsRef<Path>,
    comm_range: f64,
) -> Result<ExternalDataset, DataError> {
    let (node_path, range_path) = (node_path.as_ref(), range_path.as_ref());
    let nodes = read_nodes(node_path)?;
    let mut order: Vec<&NodeRow> = nodes.iter().filter(|n| !n.anchor).collect();
    let n_sensors = order.len();
    order.extend(nodes.iter().filter(|n| n.anchor));
    if order.len() - n_sensors < 3 {
        return Err(DataError::dataset(node_path, format!("need at least 3 anchors, found {}", order.len() - n_sensors)));
    }
    let mut index = HashMap::new();
    for (k, n) in order.iter().enumerate() {
        if index.insert(n.id, k).is_some() {
            return Err(DataError::dataset(node_path, format!("duplicate node id {}", n.id)));
        }
    }

    // pair (lo, hi) -> [forward, backward] samples keyed by l
    let mut pairs: BTreeMap<(usize, usize), [BTreeMap<u64, f64>; 2]> = BTreeMap::new();
    for (k, rec) in reader(range_path, &RANGE_HEADER)?.records().enumerate() {
        let rec = rec.map_err(|e| DataError::csv(range_path, e))?;
        let row = k + 2;
        let lookup = |raw: &str, name: &str| -> Result<usize, DataError> {
            let id: u64 = field(range_path, row, name, raw)?;
            index
                .get(&id)
                .copied()
                .ok_or_else(|| DataError::dataset(range_path, format!("row {row}: unknown node id {id}")))
        };
        let (a, b) = (lookup(&rec[0], "i")?, lookup(&rec[1], "j")?);
        if a == b {
            return Err(DataError::dataset(range_path, format!("row {row}: range from a node to itself")));
        }
        let l: u64 = field(range_path, row, "l", &rec[2])?;
        let r: f64 = field(range_path, row, "range_m", &rec[3])?;
        if !r.is_finite() {
            return Err(DataError::dataset(range_path, format!("row {row}: non-finite range")));
        }
        let dir = usize::from(a > b);
        let slot = &mut pairs.entry((a.min(b), a.max(b))).or_default()[dir];
        if slot.insert(l, r).is_some() {
            return Err(DataError::dataset(range_path, format!("row {row}: repeated sample {l} for ({}, {})", &rec[0], &rec[1])));
        }
    }
    if pairs.is_empty() {
        return Err(DataError::dataset(range_path, "no ranges"));
    }

    let mut warnings = Vec::new();
    let mut merged: Vec<((usize, usize), Vec<f64>)> = Vec::with_capacity(pairs.len());
    for (&(a, b), [fwd, back]) in &pairs {
        let mut samples = BTreeMap::new();
        for (&l, &r) in fwd.iter().chain(back) {
            samples
                .entry(l)
                .and_modify(|prev: &mut f64| {
                    if (*prev - r).abs() > MIRROR_TOLERANCE * prev.abs().max(r.abs()) {
                        warnings.push(format!(
                            "ranges {} -> {} and {} -> {} differ by more than 10% at sample {l}: {prev} vs {r}",
                            order[a].id, order[b].id, order[b].id, order[a].id
                        ));
                    }
                    *prev = 0.5 * (*prev + r);
                })
                .or_insert(r);
        }
        merged.push(((a, b), samples.into_values().collect()));
    }

    let l_min = merged.iter().map(|(_, s)| s.len()).min().unwrap_or(0);
    let l_max = merged.iter().map(|(_, s)| s.len()).max().unwrap_or(0);
    if l_min != l_max {
        warnings.push(format!("links carry between {l_min} and {l_max} samples; using the first {l_min} of each"));
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let positions: Vec<Position<f64>> = order.iter().map(|n| n.pos).collect();
    let adjacency = Adjacency::from_pairs(positions.len(), merged.iter().map(|&((a, b), _)| (NodeId(a), NodeId(b))));
    let network = Network::with_adjacency(n_sensors, positions, comm_range, adjacency)
        .map_err(|e| DataError::dataset(node_path, e.to_string()))?;
    // BTreeMap order on (lo, hi) matches the sorted link order.
    let ranges: Vec<f64> = merged.iter().flat_map(|(_, s)| s[..l_min].iter().copied()).collect();
    let measurements = MeasurementSet::from_samples(l_min, ranges, None)
        .map_err(|e| DataError::dataset(range_path, e.to_string()))?;
    Ok(ExternalDataset {
        network,
        measurements,
        node_ids: order.iter().map(|n| n.id).collect(),
        warnings,
    })
}

/// Write a dataset in the format [`load_dataset`] reads: sensors then
/// anchors, one row per link and sample with `i < j` internally, `l` from 1.
pub fn export_dataset(
    dataset: &ExternalDataset,
    node_path: impl AsRef<Path>,
    range_path: impl AsRef<Path>,
) -> Result<(), DataError> {
    let node_path = node_path.as_ref();
    let mut w = csv::Writer::from_path(node_path).map_err(|e| DataError::csv(node_path, e))?;
    let net = &dataset.network;
    let mut out = |rec: &[String]| w.write_record(rec).map_err(|e| DataError::csv(node_path, e));
    out(&NODE_HEADER.map(String::from))?;
    for (k, p) in net.positions().iter().enumerate() {
        let role = if k < net.n_sensors() { "sensor" } else { "anchor" };
        out(&[dataset.node_ids[k].to_string(), role.into(), p.x.to_string(), p.y.to_string()])?;
    }
    w.flush().map_err(|e| DataError::io(node_path, e))?;

    let range_path = range_path.as_ref();
    let mut w = csv::Writer::from_path(range_path).map_err(|e| DataError::csv(range_path, e))?;
    let mut out = |rec: &[String]| w.write_record(rec).map_err(|e| DataError::csv(range_path, e));
    out(&RANGE_HEADER.map(String::from))?;
    for (k, link) in net.links().iter().enumerate() {
        for (l, r) in dataset.measurements.link_samples(k).iter().enumerate() {
            out(&[
                dataset.node_ids[link.i.0].to_string(),
                dataset.node_ids[link.j.0].to_string(),
                (l + 1).to_string(),
                r.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| DataError::io(range_path, e))
}
