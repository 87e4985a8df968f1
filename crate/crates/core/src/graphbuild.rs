//! Sensing graphs: an anchor station plus its `n - 1` nearest neighbours,
//! fully connected, edges weighted by great-circle distance.
//!
//! # Container format
//!
//! All integers and floats little-endian.
//!
//! ```text
//! magic        8 bytes  "RLGRAPH\0"
//! version      u32      1
//! n            u32      nodes per graph
//! k            u32      histogram bins per metric
//! r            u32      label classes
//! feature_dim  u32      3k+1, or 3k when the outdoor share was dropped
//! count        u64      number of graphs
//! per graph:
//!   anchor       u32
//!   window       u32
//!   window_start i64    unix seconds
//!   label        u32
//!   nodes        n x u32   cluster index per node, anchor first
//!   valid        n x u8
//!   features     n*feature_dim x f64, row-major
//!   edges        n*n x f64, row-major
//! ```

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{put_u32, ByteReader};
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::geodata::{haversine_km, nearest_neighbors, GeoPoint, LabelBinning, RadarGrid};
use crate::rainnet::DenseMatrix;

pub const FOLDS: usize = 5;
const MAGIC: &[u8; 8] = b"RLGRAPH\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SensingGraph {
    pub anchor_station: usize,
    /// Cluster index of each node; node 0 is the anchor.
    pub nodes: Vec<usize>,
    /// `n x feature_dim`.
    pub node_features: DenseMatrix,
    pub node_valid: Vec<bool>,
    /// `n x n`, symmetric, zero diagonal.
    pub edge_dist_km: DenseMatrix,
    pub label: usize,
    pub window: usize,
    pub window_start: i64,
}

impl SensingGraph {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.node_features.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n < 2 {
            return Err(Error::InvalidInput(format!("graph needs at least 2 nodes, got {n}")));
        }
        if self.node_features.rows() != n || self.node_valid.len() != n {
            return Err(Error::DimensionMismatch {
                context: "graph node rows".into(),
                expected: n,
                found: self.node_features.rows(),
            });
        }
        let e = &self.edge_dist_km;
        if e.rows() != n || e.cols() != n {
            return Err(Error::DimensionMismatch {
                context: "graph edge matrix".into(),
                expected: n,
                found: e.rows(),
            });
        }
        for i in 0..n {
            if e.get(i, i) != 0.0 {
                return Err(Error::InvalidInput(format!("edge diagonal at {i} is nonzero")));
            }
            for j in 0..n {
                let d = e.get(i, j);
                if !(d >= 0.0 && d.is_finite()) || d != e.get(j, i) {
                    return Err(Error::InvalidInput(format!("edge ({i},{j}) is negative or asymmetric")));
                }
            }
        }
        if !self.node_features.is_finite() {
            return Err(Error::Numerical("non-finite node feature".into()));
        }
        Ok(())
    }

    /// Same graph with node order `perm` (new node `i` is old node `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> SensingGraph {
        SensingGraph {
            anchor_station: self.anchor_station,
            nodes: perm.iter().map(|&p| self.nodes[p]).collect(),
            node_features: self.node_features.permute_rows(perm),
            node_valid: perm.iter().map(|&p| self.node_valid[p]).collect(),
            edge_dist_km: self.edge_dist_km.permute_sym(perm),
            label: self.label,
            window: self.window,
            window_start: self.window_start,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphDataset {
    pub n: usize,
    pub k: usize,
    pub r: usize,
    pub feature_dim: usize,
    pub graphs: Vec<SensingGraph>,
}

impl GraphDataset {
    /// Copy with the trailing outdoor-share column removed from every node.
    pub fn without_pou(&self) -> Result<GraphDataset> {
        if self.feature_dim != 3 * self.k + 1 {
            return Err(Error::InvalidInput(format!(
                "outdoor share already dropped (feature dim {})",
                self.feature_dim
            )));
        }
        let c = self.feature_dim - 1;
        let graphs = self
            .graphs
            .iter()
            .map(|g| SensingGraph {
                node_features: g.node_features.without_column(c),
                ..g.clone()
            })
            .collect();
        Ok(GraphDataset {
            feature_dim: c,
            graphs,
            ..*self
        })
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(|g| g.label).collect()
    }
}

/// One graph per `(window, anchor)`, window-major. Graphs whose nodes fall
/// outside the radar grid are skipped with a warning.
pub fn build_graphs(
    centers: &[GeoPoint],
    features: &FeatureTable,
    radar: &[RadarGrid],
    n: usize,
    binning: &LabelBinning,
) -> Result<GraphDataset> {
    let m = centers.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("nodes per graph must be >= 2, got {n}")));
    }
    if n > m {
        return Err(Error::InvalidInput(format!("nodes per graph {n} exceeds station count {m}")));
    }
    if features.clusters() != m {
        return Err(Error::DimensionMismatch {
            context: "feature table clusters".into(),
            expected: m,
            found: features.clusters(),
        });
    }
    if features.windows() != radar.len() {
        return Err(Error::DimensionMismatch {
            context: "feature table windows vs radar frames".into(),
            expected: radar.len(),
            found: features.windows(),
        });
    }
    let neighborhoods = (0..m)
        .map(|i| {
            let mut nodes = vec![i];
            nodes.extend(nearest_neighbors(centers, i, n - 1)?);
            Ok(nodes)
        })
        .collect::<Result<Vec<_>>>()?;
    let edges: Vec<DenseMatrix> = neighborhoods
        .iter()
        .map(|nodes| {
            let mut e = DenseMatrix::zeros(n, n);
            for a in 0..n {
                for b in a + 1..n {
                    let d = haversine_km(centers[nodes[a]], centers[nodes[b]]);
                    e.set(a, b, d);
                    e.set(b, a, d);
                }
            }
            e
        })
        .collect();
    let dim = features.spec.feature_dim();

    let per_window: Vec<Vec<SensingGraph>> = radar
        .par_iter()
        .enumerate()
        .map(|(w, grid)| {
            let mut out = Vec::with_capacity(m);
            for (anchor, nodes) in neighborhoods.iter().enumerate() {
                let mut sum = 0.0;
                let mut outside = None;
                for &c in nodes {
                    match grid.interpolate(centers[c]) {
                        Ok(v) => sum += v,
                        Err(_) => {
                            outside = Some(c);
                            break;
                        }
                    }
                }
                if let Some(c) = outside {
                    log::warn!("skipping graph anchor {anchor} window {w}: node {c} lies outside the radar grid");
                    continue;
                }
                let label = binning.bin(sum / n as f64)?;
                let mut data = Vec::with_capacity(n * dim);
                let mut valid = Vec::with_capacity(n);
                for &c in nodes {
                    let f = features.get(c, w);
                    data.extend_from_slice(&f.values);
                    valid.push(f.valid);
                }
                out.push(SensingGraph {
                    anchor_station: anchor,
                    nodes: nodes.clone(),
                    node_features: DenseMatrix::from_vec(n, dim, data),
                    node_valid: valid,
                    edge_dist_km: edges[anchor].clone(),
                    label,
                    window: w,
                    window_start: grid.window_start().timestamp(),
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(GraphDataset {
        n,
        k: features.spec.k,
        r: binning.classes(),
        feature_dim: dim,
        graphs: per_window.into_iter().flatten().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Unshuffled,
    Shuffled,
}

impl SplitMode {
    pub fn name(self) -> &'static str {
        match self {
            SplitMode::Unshuffled => "unshuffled",
            SplitMode::Shuffled => "shuffled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub mode: SplitMode,
    pub seed: u64,
    /// Graph indices per fold.
    pub folds: Vec<Vec<usize>>,
}

impl DatasetSplit {
    /// `(train, test)` indices with fold `f` held out.
    pub fn train_test(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        let test = self.folds[f].clone();
        let train = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != f)
            .flat_map(|(_, fold)| fold.iter().copied())
            .collect();
        (train, test)
    }
}

/// Five near-equal folds. Unshuffled folds are contiguous blocks of the input
/// order, which [`build_graphs`] makes time order.
pub fn make_splits(count: usize, mode: SplitMode, seed: u64) -> Result<DatasetSplit> {
    if count < FOLDS {
        return Err(Error::InvalidInput(format!("need at least {FOLDS} graphs for cross-validation, got {count}")));
    }
    let mut order: Vec<usize> = (0..count).collect();
    if mode == SplitMode::Shuffled {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let base = count / FOLDS;
    let extra = count % FOLDS;
    let mut folds = Vec::with_capacity(FOLDS);
    let mut start = 0;
    for f in 0..FOLDS {
        let len = base + usize::from(f < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(DatasetSplit { mode, seed, folds })
}

/// Random `(train, test)` partition with `round(train_frac * count)` training graphs.
pub fn holdout_split(count: usize, train_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidInput(format!("train fraction must be in (0, 1), got {train_frac}")));
    }
    let cut = (train_frac * count as f64).round() as usize;
    if cut == 0 || cut == count {
        return Err(Error::InvalidInput(format!("holdout of {count} graphs leaves an empty side")));
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = order.split_off(cut);
    Ok((order, test))
}

pub fn encode_graphs(ds: &GraphDataset) -> Result<Vec<u8>> {
    let n = ds.n;
    let d = ds.feature_dim;
    let mut buf = Vec::with_capacity(36 + ds.graphs.len() * (20 + 5 * n + 8 * n * (d + n)));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut buf, n, "n")?;
    put_u32(&mut buf, ds.k, "k")?;
    put_u32(&mut buf, ds.r, "r")?;
    put_u32(&mut buf, d, "feature_dim")?;
    buf.extend_from_slice(&(ds.graphs.len() as u64).to_le_bytes());
    for g in &ds.graphs {
        if g.n() != n || g.feature_dim() != d {
            return Err(Error::DimensionMismatch {
                context: format!("graph anchor {} window {}", g.anchor_station, g.window),
                expected: n * d,
                found: g.n() * g.feature_dim(),
            });
        }
        put_u32(&mut buf, g.anchor_station, "anchor")?;
        put_u32(&mut buf, g.window, "window")?;
        buf.extend_from_slice(&g.window_start.to_le_bytes());
        put_u32(&mut buf, g.label, "label")?;
        for &c in &g.nodes {
            put_u32(&mut buf, c, "node")?;
        }
        buf.extend(g.node_valid.iter().map(|&v| v as u8));
        for v in g.node_features.data().iter().chain(g.edge_dist_km.data()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn decode_graphs(bytes: &[u8]) -> Result<GraphDataset> {
    let mut rd = ByteReader::new(bytes);
    if rd.take(8)? != MAGIC {
        return Err(Error::Format("not a graph container (bad magic)".into()));
    }
    let version = rd.u32()? as u32;
    if version != VERSION {
        return Err(Error::Format(format!("graph container version {version}, expected {VERSION}")));
    }
    let n = rd.u32()?;
    let k = rd.u32()?;
    let r = rd.u32()?;
    let d = rd.u32()?;
    let count = rd.u64()?;
    if n < 2 || d == 0 {
        return Err(Error::Format(format!("bad header: n={n} feature_dim={d}")));
    }
    let per_graph = 20 + 5 * n + 8 * n * (d + n);
    if (count as u128) * (per_graph as u128) != rd.remaining() as u128 {
        return Err(Error::Format(format!(
            "graph container holds {} payload bytes, header promises {count} graphs of {per_graph}",
            rd.remaining()
        )));
    }
    let mut graphs = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let anchor_station = rd.u32()?;
        let window = rd.u32()?;
        let window_start = rd.i64()?;
        let label = rd.u32()?;
        let nodes = (0..n).map(|_| rd.u32()).collect::<Result<Vec<_>>>()?;
        let node_valid = rd.take(n)?.iter().map(|&b| b != 0).collect();
        let node_features = DenseMatrix::from_vec(n, d, rd.f64s(n * d)?);
        let edge_dist_km = DenseMatrix::from_vec(n, n, rd.f64s(n * n)?);
        if label >= r {
            return Err(Error::Format(format!("label {label} outside {r} classes")));
        }
        graphs.push(SensingGraph {
            anchor_station,
            nodes,
            node_features,
            node_valid,
            edge_dist_km,
            label,
            window,
            window_start,
        });
    }
    Ok(GraphDataset {
        n,
        k,
        r,
        feature_dim: d,
        graphs,
    })
}

pub fn write_graphs(path: &Path, ds: &GraphDataset) -> Result<()> {
    std::fs::write(path, encode_graphs(ds)?).map_err(|e| Error::io(path, e))
}

pub fn read_graphs(path: &Path) -> Result<GraphDataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_graphs(&bytes)
}
