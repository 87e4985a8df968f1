//! Stage runners. Each reads its inputs from `input_dir`, checks them before
//! writing anything, and writes its artifacts plus `config.toml` into
//! `out_dir`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{featurize, Featurized, RunConfig};
use crate::energysim::{
    water_attenuation_length, write_coverage_csv, write_savings_csv, EnergyScenario, EnergyTotals,
};
use crate::error::{Error, Result};
use crate::evalharness::{
    run_baseline, run_node_ablation, run_pou_ablation, write_ablation_csv, write_confusion_csv, write_json,
    AblationPoint, ExperimentReport, PouAblation, RainNetTrainer, Trainer,
};
use crate::features::write_feature_csv;
use crate::geodata::{read_radar_series, write_radar_series, RadarGrid};
use crate::graphbuild::{make_splits, read_graphs, write_graphs, GraphDataset, SplitMode};
use crate::ingest::{parse_lte_csv, synthesize_dataset, synthesize_radar, write_lte_csv, write_truth_csv};
use crate::rainnet::{median_pairwise_distance, save_model, train, write_metrics_csv, ModelDims, RainNetModel};

pub const REPORTS: &str = "reports.csv";
pub const TRUTH: &str = "truth.csv";
pub const RADAR: &str = "radar.json";
pub const STATIONS: &str = "stations.csv";
pub const FEATURES: &str = "features.csv";
pub const GRAPHS: &str = "graphs.bin";
pub const MODEL: &str = "model.bin";
pub const METRICS: &str = "metrics.csv";
pub const CONFIG_ECHO: &str = "config.toml";

fn require(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::MissingInput(p))
    }
}

fn prepare_out(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let p = out_dir.join(CONFIG_ECHO);
    std::fs::write(&p, cfg.to_toml()?).map_err(|e| Error::io(&p, e))
}

fn snapshot(cfg: &RunConfig) -> Result<serde_json::Value> {
    serde_json::to_value(cfg).map_err(|e| Error::Format(e.to_string()))
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthSummary {
    pub records: usize,
    pub stations: usize,
    pub windows: usize,
}

pub fn run_synth(cfg: &RunConfig, out_dir: &Path) -> Result<SynthSummary> {
    cfg.validate()?;
    let radar = synthesize_radar(&cfg.synth)?;
    let ds = synthesize_dataset(&cfg.synth, &radar)?;
    prepare_out(cfg, out_dir)?;
    write_lte_csv(&out_dir.join(REPORTS), &ds.records)?;
    write_truth_csv(&out_dir.join(TRUTH), &ds.truth)?;
    write_radar_series(&out_dir.join(RADAR), &radar)?;
    Ok(SynthSummary {
        records: ds.records.len(),
        stations: ds.stations.len(),
        windows: radar.len(),
    })
}

fn load_featurized(cfg: &RunConfig, input_dir: &Path) -> Result<(Vec<RadarGrid>, Featurized)> {
    let reports = require(input_dir, REPORTS)?;
    let radar_path = require(input_dir, RADAR)?;
    let records = parse_lte_csv(&reports)?;
    let radar = read_radar_series(&radar_path)?;
    let f = featurize(&records, &radar, &cfg.graph)?;
    Ok((radar, f))
}

#[derive(Debug, Clone, Serialize)]
pub struct FeaturizeSummary {
    pub reports_used: usize,
    pub reports_dropped: usize,
    pub graphs: usize,
    pub feature_dim: usize,
}

pub fn run_featurize(cfg: &RunConfig, input_dir: &Path, out_dir: &Path) -> Result<FeaturizeSummary> {
    cfg.validate()?;
    let (radar, f) = load_featurized(cfg, input_dir)?;
    let graphs = f.graphs(&radar, cfg.graph.nodes)?;
    prepare_out(cfg, out_dir)?;
    let mut stations = String::from("cluster,lat,lon,members\n");
    for (i, c) in f.clustering.clusters.iter().enumerate() {
        let _ = writeln!(stations, "{i},{},{},{}", c.center.lat(), c.center.lon(), c.members.len());
    }
    let p = out_dir.join(STATIONS);
    std::fs::write(&p, stations).map_err(|e| Error::io(&p, e))?;
    write_feature_csv(&out_dir.join(FEATURES), &f.table)?;
    write_graphs(&out_dir.join(GRAPHS), &graphs)?;
    Ok(FeaturizeSummary {
        reports_used: f.used,
        reports_dropped: f.dropped,
        graphs: graphs.graphs.len(),
        feature_dim: graphs.feature_dim,
    })
}

fn load_graphs(cfg: &RunConfig, input_dir: &Path) -> Result<GraphDataset> {
    let ds = read_graphs(&require(input_dir, GRAPHS)?)?;
    if ds.r != cfg.graph.classes {
        return Err(Error::DimensionMismatch {
            context: "graph container classes vs config".into(),
            expected: cfg.graph.classes,
            found: ds.r,
        });
    }
    Ok(ds)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub train_graphs: usize,
    pub test_graphs: usize,
    pub final_test_accuracy: Option<f64>,
    pub parameters: usize,
    pub model_bytes: u64,
}

/// Fit on the first shuffled fold's training part, scoring its test part.
pub fn run_train(cfg: &RunConfig, input_dir: &Path, out_dir: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    let ds = load_graphs(cfg, input_dir)?;
    let split = make_splits(ds.graphs.len(), SplitMode::Shuffled, cfg.eval.seed)?;
    let (train_idx, test_idx) = split.train_test(0);
    let sigma = median_pairwise_distance(train_idx.iter().map(|&i| &ds.graphs[i]))?;
    let dims = ModelDims {
        in_dim: ds.feature_dim,
        hidden: cfg.train.hidden,
        classes: ds.r,
    };
    let model = RainNetModel::init(ds.k, dims, sigma, cfg.train.seed)?;
    let out = train(model, &ds.graphs, &train_idx, &test_idx, &cfg.train)?;
    prepare_out(cfg, out_dir)?;
    let model_path = out_dir.join(MODEL);
    save_model(&model_path, &out.model)?;
    write_metrics_csv(&out_dir.join(METRICS), &[(0, out.metrics.clone())])?;
    Ok(TrainSummary {
        train_graphs: train_idx.len(),
        test_graphs: test_idx.len(),
        final_test_accuracy: out.metrics.last().and_then(|m| m.test_acc),
        parameters: out.model.params.count(),
        model_bytes: std::fs::metadata(&model_path).map_err(|e| Error::io(&model_path, e))?.len(),
    })
}

fn write_report(out_dir: &Path, rep: &ExperimentReport) -> Result<()> {
    let mode = rep.mode.name();
    write_json(&out_dir.join(format!("report_{mode}.json")), rep)?;
    write_confusion_csv(&out_dir.join(format!("confusion_{mode}.csv")), &rep.confusion)?;
    let curves: Vec<_> = rep.folds.iter().map(|f| (f.fold, f.curve.clone())).collect();
    write_metrics_csv(&out_dir.join(format!("curves_{mode}.csv")), &curves)
}

/// Five-fold cross-validation in every configured split mode.
pub fn run_eval(cfg: &RunConfig, input_dir: &Path, out_dir: &Path) -> Result<Vec<ExperimentReport>> {
    cfg.validate()?;
    let ds = load_graphs(cfg, input_dir)?;
    eval_dataset(cfg, &ds, out_dir)
}

pub fn eval_dataset(cfg: &RunConfig, ds: &GraphDataset, out_dir: &Path) -> Result<Vec<ExperimentReport>> {
    let trainer = RainNetTrainer { cfg: cfg.train.clone() };
    let snap = snapshot(cfg)?;
    let reports = cfg
        .eval
        .modes
        .iter()
        .map(|&mode| run_baseline(ds, mode, &trainer as &dyn Trainer, cfg.eval.seed, snap.clone()))
        .collect::<Result<Vec<_>>>()?;
    prepare_out(cfg, out_dir)?;
    for rep in &reports {
        write_report(out_dir, rep)?;
    }
    Ok(reports)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationSummary {
    pub nodes: Vec<AblationPoint>,
    pub pou: PouAblation,
}

/// Node-count and outdoor-share ablations on holdout splits.
pub fn run_ablate(cfg: &RunConfig, input_dir: &Path, out_dir: &Path) -> Result<AblationSummary> {
    cfg.validate()?;
    let (radar, f) = load_featurized(cfg, input_dir)?;
    let trainer = RainNetTrainer { cfg: cfg.train.clone() };
    let e = &cfg.eval;
    let nodes = run_node_ablation(
        |n| f.graphs(&radar, n),
        &e.node_values,
        &trainer,
        e.holdout_train_fraction,
        e.repetitions,
        e.seed,
    );
    let base = f.graphs(&radar, cfg.graph.nodes)?;
    let pou = run_pou_ablation(&base, &trainer, e.holdout_train_fraction, e.repetitions, e.seed)?;
    prepare_out(cfg, out_dir)?;
    write_ablation_csv(&out_dir.join("ablation_nodes.csv"), &nodes)?;
    let summary = AblationSummary { nodes, pou };
    write_json(&out_dir.join("ablation.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedSavings {
    pub seed: u64,
    pub p_rain_watts: f64,
    pub p_clear_watts: f64,
    pub p_robust_watts: f64,
    pub savings_at_half: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergySummary {
    pub seeds: Vec<SeedSavings>,
    pub min_savings_at_half: f64,
}

/// Savings curve and coverage table for `energy.seed`, plus the savings at
/// `pr_rain = 0.5` for every layout seed.
pub fn run_energy(cfg: &RunConfig, out_dir: &Path) -> Result<EnergySummary> {
    cfg.validate()?;
    let ec = &cfg.energy;
    let scenario = EnergyScenario::generate(ec, ec.seed)?;
    let totals = EnergyTotals::solve(&scenario)?;
    let curve = ec
        .pr_rain
        .iter()
        .map(|&p| totals.expected_energy(p))
        .collect::<Result<Vec<_>>>()?;
    let seeds = ec
        .layout_seeds
        .iter()
        .map(|&seed| {
            let sc = EnergyScenario::generate(ec, seed)?;
            let t = EnergyTotals::solve(&sc)?;
            Ok(SeedSavings {
                seed,
                p_rain_watts: t.rain.total_w,
                p_clear_watts: t.clear.total_w,
                p_robust_watts: t.robust.total_w,
                savings_at_half: t.expected_energy(0.5)?.savings,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    prepare_out(cfg, out_dir)?;
    write_savings_csv(&out_dir.join("savings.csv"), &curve)?;
    write_coverage_csv(&out_dir.join("coverage.csv"), &scenario, &totals)?;
    let mut table = String::from("seed,p_rain_watts,p_clear_watts,p_robust_watts,savings_at_half\n");
    for s in &seeds {
        let _ = writeln!(
            table,
            "{},{},{},{},{}",
            s.seed, s.p_rain_watts, s.p_clear_watts, s.p_robust_watts, s.savings_at_half
        );
    }
    let p = out_dir.join("energy_seeds.csv");
    std::fs::write(&p, table).map_err(|e| Error::io(&p, e))?;
    let min_savings_at_half = seeds.iter().map(|s| s.savings_at_half).fold(f64::INFINITY, f64::min);
    Ok(EnergySummary {
        seeds,
        min_savings_at_half,
    })
}

/// `freq_ghz,length_m` at the configured temperature.
pub fn run_water(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    let rows = cfg
        .water
        .freqs_ghz
        .iter()
        .map(|&f| Ok((f, water_attenuation_length(f, cfg.water.temp_c)?)))
        .collect::<Result<Vec<_>>>()?;
    prepare_out(cfg, out_dir)?;
    let mut out = String::from("freq_ghz,length_m\n");
    for (f, l) in &rows {
        let _ = writeln!(out, "{f},{l}");
    }
    let p = out_dir.join("water.csv");
    std::fs::write(&p, out).map_err(|e| Error::io(&p, e))?;
    Ok(rows)
}
