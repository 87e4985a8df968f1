use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energysim::EnergyConfig;
use crate::error::{Error, Result};
use crate::graphbuild::SplitMode;
use crate::ingest::SynthConfig;
use crate::rainnet::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// Station clusters `m`.
    pub stations: usize,
    /// Nodes per graph `n`.
    pub nodes: usize,
    /// Histogram bins per metric `k`.
    pub bins: usize,
    /// Rainfall classes `r`.
    pub classes: usize,
    pub window_secs: i64,
    /// Cluster and featurize 4G reports only.
    pub lte_only: bool,
    pub cluster_restarts: usize,
    pub cluster_max_iter: usize,
    pub cluster_seed: u64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            stations: 100,
            nodes: 9,
            bins: crate::features::DEFAULT_BINS,
            classes: 10,
            window_secs: 1800,
            lte_only: true,
            cluster_restarts: 3,
            cluster_max_iter: 100,
            cluster_seed: 20221003,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.stations == 0 || self.bins == 0 || self.cluster_max_iter == 0 {
            return bad("stations, bins and cluster_max_iter must be positive".into());
        }
        if self.nodes < 2 || self.nodes > self.stations {
            return bad(format!("nodes must lie in [2, stations={}], got {}", self.stations, self.nodes));
        }
        if self.classes < 2 {
            return bad(format!("classes must be >= 2, got {}", self.classes));
        }
        if self.window_secs <= 0 {
            return bad("window_secs must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub modes: Vec<SplitMode>,
    /// Nodes per graph swept by the node ablation.
    pub node_values: Vec<usize>,
    pub repetitions: usize,
    /// Training share of the ablation holdout splits.
    pub holdout_train_fraction: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            modes: vec![SplitMode::Unshuffled, SplitMode::Shuffled],
            node_values: (2..=8).collect(),
            repetitions: 5,
            holdout_train_fraction: 0.5,
            seed: 20221003,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self, stations: usize) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::InvalidInput("eval.modes must not be empty".into()));
        }
        if let Some(n) = self.node_values.iter().find(|&&n| n < 2 || n > stations) {
            return Err(Error::InvalidInput(format!("eval.node_values entry {n} outside [2, {stations}]")));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidInput("eval.repetitions must be >= 1".into()));
        }
        if !(self.holdout_train_fraction > 0.0 && self.holdout_train_fraction < 1.0) {
            return Err(Error::InvalidInput(format!(
                "eval.holdout_train_fraction must lie in (0, 1), got {}",
                self.holdout_train_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaterConfig {
    pub temp_c: f64,
    pub freqs_ghz: Vec<f64>,
}

impl Default for WaterConfig {
    fn default() -> Self {
        WaterConfig {
            temp_c: 25.0,
            freqs_ghz: (1..=20).map(|i| i as f64 * 0.5).collect(),
        }
    }
}

/// Every tunable of every stage. Unset keys take their defaults; unknown
/// keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub graph: GraphConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub energy: EnergyConfig,
    pub water: WaterConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {}", e.message().trim())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].matches('\n').count() as u64 + 1)
                .unwrap_or(0);
            Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: e.message().trim().to_string(),
            }
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Use `seed` for every stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.synth.seed = seed;
        self.graph.cluster_seed = seed;
        self.train.seed = seed;
        self.eval.seed = seed;
        self.energy.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.graph.validate()?;
        self.train.validate()?;
        self.eval.validate(self.graph.stations)?;
        self.energy.validate()?;
        if self.graph.classes != self.synth.class_count {
            return Err(Error::InvalidInput(format!(
                "graph.classes ({}) must equal synth.class_count ({})",
                self.graph.classes, self.synth.class_count
            )));
        }
        if self.graph.window_secs != self.synth.window_secs {
            return Err(Error::InvalidInput(format!(
                "graph.window_secs ({}) must equal synth.window_secs ({})",
                self.graph.window_secs, self.synth.window_secs
            )));
        }
        if let Some(f) = self.water.freqs_ghz.iter().find(|f| !(**f > 0.1 && **f <= 100.0)) {
            return Err(Error::InvalidInput(format!("water frequency {f} GHz outside (0.1, 100]")));
        }
        if !(0.0..=60.0).contains(&self.water.temp_c) {
            return Err(Error::InvalidInput(format!("water temperature {} C outside [0, 60]", self.water.temp_c)));
        }
        Ok(())
    }
}
