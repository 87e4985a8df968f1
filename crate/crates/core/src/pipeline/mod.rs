//! Stage wiring shared by the CLI and the experiment harness: reports and
//! radar frames in, sensing graphs out.

mod config;
pub mod stages;

pub use config::{EvalConfig, GraphConfig, RunConfig, WaterConfig};

use crate::error::{Error, Result};
use crate::features::{build_feature_table, fit_histogram_spec, FeatureTable, HistogramSpec};
use crate::geodata::{cluster_stations, ClusterOptions, Clustering, GeoPoint, LabelBinning, RadarGrid};
use crate::graphbuild::{build_graphs, GraphDataset};
use crate::ingest::{LteRecord, Rat};

/// Everything derived from one report set before graph assembly.
#[derive(Debug, Clone)]
pub struct Featurized {
    pub centers: Vec<GeoPoint>,
    pub clustering: Clustering,
    pub spec: HistogramSpec,
    pub table: FeatureTable,
    pub binning: LabelBinning,
    /// Reports used, after the RAT and time-window filters.
    pub used: usize,
    pub dropped: usize,
}

impl Featurized {
    pub fn graphs(&self, radar: &[RadarGrid], n: usize) -> Result<GraphDataset> {
        build_graphs(&self.centers, &self.table, radar, n, &self.binning)
    }
}

/// Window index of `ts`: the frame whose `[start, start + window_secs)` holds it.
fn window_index(starts: &[i64], window_secs: i64, ts: i64) -> Option<usize> {
    let w = starts.partition_point(|&s| s <= ts).checked_sub(1)?;
    (ts < starts[w] + window_secs).then_some(w)
}

/// Cluster report locations into stations, bin each report into its radar
/// window and compute the per-(station, window) features.
pub fn featurize(records: &[LteRecord], radar: &[RadarGrid], cfg: &GraphConfig) -> Result<Featurized> {
    cfg.validate()?;
    if radar.is_empty() {
        return Err(Error::InvalidInput("empty radar series".into()));
    }
    let starts: Vec<i64> = radar.iter().map(|g| g.window_start().timestamp()).collect();
    if starts.windows(2).any(|w| w[1] < w[0] + cfg.window_secs) {
        return Err(Error::InvalidInput(format!(
            "radar frames must be in time order and at least {} s apart",
            cfg.window_secs
        )));
    }
    let mut kept: Vec<LteRecord> = Vec::with_capacity(records.len());
    let mut window_of = Vec::with_capacity(records.len());
    for r in records {
        if cfg.lte_only && r.rat != Rat::Lte4g {
            continue;
        }
        if let Some(w) = window_index(&starts, cfg.window_secs, r.timestamp) {
            kept.push(r.clone());
            window_of.push(w);
        }
    }
    let dropped = records.len() - kept.len();
    if dropped > 0 {
        log::info!("featurize: {dropped} of {} reports outside the RAT filter or radar windows", records.len());
    }
    if kept.is_empty() {
        return Err(Error::InvalidInput("no reports left after filtering".into()));
    }
    let points: Vec<GeoPoint> = kept.iter().map(|r| r.loc).collect();
    let opts = ClusterOptions {
        max_iter: cfg.cluster_max_iter,
        restarts: cfg.cluster_restarts,
    };
    let clustering = cluster_stations(&points, cfg.stations, cfg.cluster_seed, opts)?;
    let spec = fit_histogram_spec(&kept, cfg.bins)?;
    let table = build_feature_table(&kept, &clustering.assignment, &window_of, cfg.stations, radar.len(), &spec)?;
    let binning = LabelBinning::fit(radar.iter().flat_map(|g| g.values().iter().copied()), cfg.classes)?;
    Ok(Featurized {
        centers: clustering.centers(),
        clustering,
        spec,
        table,
        binning,
        used: kept.len(),
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_lookup() {
        let starts = [0, 100, 200];
        assert_eq!(window_index(&starts, 100, -1), None);
        assert_eq!(window_index(&starts, 100, 0), Some(0));
        assert_eq!(window_index(&starts, 100, 199), Some(1));
        assert_eq!(window_index(&starts, 100, 299), Some(2));
        assert_eq!(window_index(&starts, 100, 300), None);
        assert_eq!(window_index(&[0, 1000], 100, 500), None);
    }
}
