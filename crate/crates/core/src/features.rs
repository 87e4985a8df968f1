//! Node features: per-metric histogram densities plus the outdoor share.
//!
//! One [`HistogramSpec`] is fitted over a whole dataset so that every node's
//! bins line up. Bins are equal-width over `[min, max]` of the integer
//! metric; the last bin is closed.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::LteRecord;

pub const DEFAULT_BINS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    Rsrp,
    Sinr,
    Rssi,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Rsrp, Metric::Sinr, Metric::Rssi];

    pub fn of(self, r: &LteRecord) -> i32 {
        match self {
            Metric::Rsrp => r.rsrp,
            Metric::Sinr => r.sinr,
            Metric::Rssi => r.rssi,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rsrp => "rsrp",
            Metric::Sinr => "sinr",
            Metric::Rssi => "rssi",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricRange {
    pub min: i32,
    pub max: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub k: usize,
    /// Indexed by [`Metric`] order: RSRP, SINR, RSSI.
    pub ranges: [MetricRange; 3],
}

impl HistogramSpec {
    pub fn range(&self, m: Metric) -> MetricRange {
        self.ranges[m.index()]
    }

    /// Length of a node feature vector with the outdoor share included.
    pub fn feature_dim(&self) -> usize {
        3 * self.k + 1
    }

    pub fn bin_of(&self, m: Metric, v: i32) -> Result<usize> {
        let MetricRange { min, max } = self.range(m);
        if v < min || v > max {
            return Err(Error::OutOfRange(format!(
                "{} value {v} outside histogram range [{min}, {max}]",
                m.name()
            )));
        }
        let pos = self.k as f64 * (v - min) as f64 / (max - min) as f64;
        Ok((pos.floor() as usize).min(self.k - 1))
    }
}

/// Fit the global per-metric ranges over `records`.
pub fn fit_histogram_spec(records: &[LteRecord], k: usize) -> Result<HistogramSpec> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("histogram needs k >= 2 bins, got {k}")));
    }
    if records.is_empty() {
        return Err(Error::InvalidInput("cannot fit histogram ranges to zero records".into()));
    }
    let mut ranges = [MetricRange {
        min: i32::MAX,
        max: i32::MIN,
    }; 3];
    for r in records {
        for m in Metric::ALL {
            let v = m.of(r);
            let rg = &mut ranges[m.index()];
            rg.min = rg.min.min(v);
            rg.max = rg.max.max(v);
        }
    }
    for m in Metric::ALL {
        let rg = ranges[m.index()];
        if rg.min >= rg.max {
            return Err(Error::InvalidInput(format!(
                "{} takes a single value ({}) across the dataset; widen the data (more records or windows) before fitting",
                m.name(),
                rg.min
            )));
        }
    }
    Ok(HistogramSpec { k, ranges })
}

/// Relative frequency of each bin. All zeros for an empty input.
pub fn estimate_pdf(values: &[i32], spec: &HistogramSpec, metric: Metric) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; spec.k];
    for &v in values {
        counts[spec.bin_of(metric, v)?] += 1;
    }
    let n = values.len();
    Ok(if n == 0 {
        vec![0.0; spec.k]
    } else {
        counts.into_iter().map(|c| c as f64 / n as f64).collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFeatures {
    /// `[pdf(RSRP) | pdf(SINR) | pdf(RSSI) | POU]`, length `3k + 1`.
    pub values: Vec<f64>,
    /// False when the node had no reports; `values` is then all zero.
    pub valid: bool,
}

impl NodeFeatures {
    pub fn empty(spec: &HistogramSpec) -> Self {
        NodeFeatures {
            values: vec![0.0; spec.feature_dim()],
            valid: false,
        }
    }

    pub fn pou(&self) -> f64 {
        *self.values.last().expect("nonempty feature vector")
    }
}

pub fn node_features<'a, I>(records: I, spec: &HistogramSpec) -> Result<NodeFeatures>
where
    I: IntoIterator<Item = &'a LteRecord>,
{
    let mut counts = vec![0usize; 3 * spec.k];
    let mut outdoor = 0usize;
    let mut n = 0usize;
    for r in records {
        for m in Metric::ALL {
            counts[m.index() * spec.k + spec.bin_of(m, m.of(r))?] += 1;
        }
        outdoor += r.outdoor as usize;
        n += 1;
    }
    if n == 0 {
        return Ok(NodeFeatures::empty(spec));
    }
    let mut values: Vec<f64> = counts.into_iter().map(|c| c as f64 / n as f64).collect();
    values.push(outdoor as f64 / n as f64);
    Ok(NodeFeatures { values, valid: true })
}

/// Features for every (cluster, window) cell: `table[cluster][window]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub spec: HistogramSpec,
    pub cells: Vec<Vec<NodeFeatures>>,
}

impl FeatureTable {
    pub fn get(&self, cluster: usize, window: usize) -> &NodeFeatures {
        &self.cells[cluster][window]
    }

    pub fn clusters(&self) -> usize {
        self.cells.len()
    }

    pub fn windows(&self) -> usize {
        self.cells.first().map_or(0, Vec::len)
    }
}

/// Bucket records by `(assignment[i], window_of[i])` and featurize each cell.
pub fn build_feature_table(
    records: &[LteRecord],
    assignment: &[usize],
    window_of: &[usize],
    clusters: usize,
    windows: usize,
    spec: &HistogramSpec,
) -> Result<FeatureTable> {
    if assignment.len() != records.len() || window_of.len() != records.len() {
        return Err(Error::DimensionMismatch {
            context: "feature table assignment".into(),
            expected: records.len(),
            found: assignment.len().min(window_of.len()),
        });
    }
    let mut buckets: Vec<Vec<&LteRecord>> = vec![Vec::new(); clusters * windows];
    for ((r, &c), &w) in records.iter().zip(assignment).zip(window_of) {
        if c >= clusters || w >= windows {
            return Err(Error::OutOfRange(format!("record {} maps to cluster {c}, window {w}", r.id)));
        }
        buckets[c * windows + w].push(r);
    }
    let mut cells = Vec::with_capacity(clusters);
    for c in 0..clusters {
        let row = (0..windows)
            .map(|w| node_features(buckets[c * windows + w].iter().copied(), spec))
            .collect::<Result<Vec<_>>>()?;
        cells.push(row);
    }
    Ok(FeatureTable { spec: *spec, cells })
}

/// CSV export: `cluster,window,valid,rsrp_0..rsrp_{k-1},sinr_*,rssi_*,pou`.
pub fn write_feature_csv(path: &Path, table: &FeatureTable) -> Result<()> {
    let k = table.spec.k;
    let mut out = String::from("cluster,window,valid");
    for m in Metric::ALL {
        for b in 0..k {
            let _ = write!(out, ",{}_{b}", m.name());
        }
    }
    out.push_str(",pou\n");
    for (c, row) in table.cells.iter().enumerate() {
        for (w, f) in row.iter().enumerate() {
            let _ = write!(out, "{c},{w},{}", f.valid as u8);
            for v in &f.values {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
