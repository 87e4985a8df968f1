//! Evaluation protocols: five-fold baseline, node-count ablation and
//! outdoor-share ablation.
//!
//! Training is abstracted behind [`Trainer`] so the protocols can be checked
//! with stub classifiers.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphbuild::{holdout_split, make_splits, GraphDataset, SplitMode, FOLDS};
use crate::rainnet::{median_pairwise_distance, train, EpochMetrics, ModelDims, RainNetModel, TrainConfig};

/// Outcome of one train/test run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Predicted class per test graph, aligned with the test indices.
    pub predictions: Vec<usize>,
    pub curve: Vec<EpochMetrics>,
}

pub trait Trainer: Sync {
    /// Train on `train` and predict `test`. `seed` is distinct per run.
    fn fit(&self, ds: &GraphDataset, train: &[usize], test: &[usize], seed: u64) -> Result<FitResult>;
}

/// RainNet with the bandwidth set to the median edge length of the training graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct RainNetTrainer {
    pub cfg: TrainConfig,
}

impl Trainer for RainNetTrainer {
    fn fit(&self, ds: &GraphDataset, train_idx: &[usize], test_idx: &[usize], seed: u64) -> Result<FitResult> {
        let sigma = median_pairwise_distance(train_idx.iter().map(|&i| &ds.graphs[i]))?;
        let dims = ModelDims {
            in_dim: ds.feature_dim,
            hidden: self.cfg.hidden,
            classes: ds.r,
        };
        let model = RainNetModel::init(ds.k, dims, sigma, seed)?;
        let cfg = TrainConfig {
            seed,
            ..self.cfg.clone()
        };
        let out = train(model, &ds.graphs, train_idx, test_idx, &cfg)?;
        Ok(FitResult {
            predictions: out.test_predictions,
            curve: out.metrics,
        })
    }
}

/// Seed of run `run` under `master`; identical across ablation settings.
pub fn run_seed(master: u64, run: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(run);
    rng.random()
}

/// `matrix[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(r: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; r]; r],
        }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: f64,
    pub curve: Vec<EpochMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub mode: SplitMode,
    pub folds: Vec<FoldReport>,
    /// Mean of the per-fold accuracies.
    pub mean_accuracy: f64,
    /// Pooled over all test folds.
    pub confusion: ConfusionMatrix,
    pub config: serde_json::Value,
}

/// Five-fold cross-validation in the given split mode.
pub fn run_baseline(
    ds: &GraphDataset,
    mode: SplitMode,
    trainer: &dyn Trainer,
    seed: u64,
    config: serde_json::Value,
) -> Result<ExperimentReport> {
    let labels = ds.labels();
    if let Some(&l) = labels.iter().find(|&&l| l >= ds.r) {
        return Err(Error::OutOfRange(format!("label {l} outside {} classes", ds.r)));
    }
    let split = make_splits(labels.len(), mode, seed)?;
    let mut counts = vec![0usize; ds.r];
    for &l in &labels {
        counts[l] += 1;
    }
    let sparse: Vec<usize> = (0..ds.r).filter(|&c| counts[c] > 0 && counts[c] < FOLDS).collect();
    if !sparse.is_empty() {
        log::warn!("classes {sparse:?} have fewer than {FOLDS} graphs");
    }
    for f in 0..FOLDS {
        let (train_idx, test_idx) = split.train_test(f);
        let in_train: BTreeSet<usize> = train_idx.iter().map(|&i| labels[i]).collect();
        let unseen: BTreeSet<usize> = test_idx.iter().map(|&i| labels[i]).filter(|l| !in_train.contains(l)).collect();
        if !unseen.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} fold {f}: test classes {unseen:?} never appear in its training folds",
                mode.name()
            )));
        }
    }

    let fits: Vec<(usize, Vec<usize>, Vec<usize>, FitResult)> = (0..FOLDS)
        .into_par_iter()
        .map(|f| {
            let (train_idx, test_idx) = split.train_test(f);
            let fit = trainer.fit(ds, &train_idx, &test_idx, run_seed(seed, f as u64))?;
            if fit.predictions.len() != test_idx.len() {
                return Err(Error::DimensionMismatch {
                    context: format!("predictions of fold {f}"),
                    expected: test_idx.len(),
                    found: fit.predictions.len(),
                });
            }
            Ok((f, train_idx, test_idx, fit))
        })
        .collect::<Result<_>>()?;

    let mut confusion = ConfusionMatrix::new(ds.r);
    let mut folds = Vec::with_capacity(FOLDS);
    for (f, train_idx, test_idx, fit) in fits {
        let mut hits = 0;
        for (&i, &p) in test_idx.iter().zip(&fit.predictions) {
            if p >= ds.r {
                return Err(Error::OutOfRange(format!("prediction {p} outside {} classes", ds.r)));
            }
            confusion.record(labels[i], p);
            hits += usize::from(p == labels[i]);
        }
        folds.push(FoldReport {
            fold: f,
            train_size: train_idx.len(),
            test_size: test_idx.len(),
            accuracy: hits as f64 / test_idx.len() as f64,
            curve: fit.curve,
        });
    }
    let mean_accuracy = folds.iter().map(|f| f.accuracy).sum::<f64>() / FOLDS as f64;
    Ok(ExperimentReport {
        mode,
        folds,
        mean_accuracy,
        confusion,
        config,
    })
}

/// Mean holdout accuracy over `reps` runs; run `i` uses split and init seed
/// `run_seed(seed, i)` whatever the dataset.
pub fn holdout_accuracy(
    ds: &GraphDataset,
    trainer: &dyn Trainer,
    train_frac: f64,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if reps == 0 {
        return Err(Error::InvalidInput("repetitions must be >= 1".into()));
    }
    (0..reps)
        .into_par_iter()
        .map(|i| {
            let s = run_seed(seed, i as u64);
            let (train_idx, test_idx) = holdout_split(ds.graphs.len(), train_frac, s)?;
            let fit = trainer.fit(ds, &train_idx, &test_idx, s)?;
            let hits = test_idx
                .iter()
                .zip(&fit.predictions)
                .filter(|(&i, &p)| ds.graphs[i].label == p)
                .count();
            Ok(hits as f64 / test_idx.len() as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub n: usize,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Set when this `n` failed; the other points still run.
    pub error: Option<String>,
}

/// Accuracy against nodes per graph. `build(n)` must rebuild the dataset.
pub fn run_node_ablation<F>(
    build: F,
    n_values: &[usize],
    trainer: &dyn Trainer,
    train_frac: f64,
    reps: usize,
    seed: u64,
) -> Vec<AblationPoint>
where
    F: Fn(usize) -> Result<GraphDataset> + Sync,
{
    n_values
        .iter()
        .map(|&n| match build(n).and_then(|ds| holdout_accuracy(&ds, trainer, train_frac, reps, seed)) {
            Ok(acc) => AblationPoint {
                n,
                mean: acc.iter().sum::<f64>() / acc.len() as f64,
                accuracies: acc,
                error: None,
            },
            Err(e) => {
                log::error!("node ablation n={n}: {e}");
                AblationPoint {
                    n,
                    accuracies: Vec::new(),
                    mean: f64::NAN,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PouAblation {
    pub dim_with: usize,
    pub dim_without: usize,
    pub with_pou: Vec<f64>,
    pub without_pou: Vec<f64>,
    pub mean_with: f64,
    pub mean_without: f64,
}

/// Same holdout protocol and seeds with and without the outdoor-share feature.
pub fn run_pou_ablation(
    ds: &GraphDataset,
    trainer: &dyn Trainer,
    train_frac: f64,
    reps: usize,
    seed: u64,
) -> Result<PouAblation> {
    let lean = ds.without_pou()?;
    let with_pou = holdout_accuracy(ds, trainer, train_frac, reps, seed)?;
    let without_pou = holdout_accuracy(&lean, trainer, train_frac, reps, seed)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(PouAblation {
        dim_with: ds.feature_dim,
        dim_without: lean.feature_dim,
        mean_with: mean(&with_pou),
        mean_without: mean(&without_pou),
        with_pou,
        without_pou,
    })
}

fn write(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    write(path, text)
}

/// Rows are true classes, columns predictions.
pub fn write_confusion_csv(path: &Path, cm: &ConfusionMatrix) -> Result<()> {
    let r = cm.counts.len();
    let mut out = String::from("true");
    for c in 0..r {
        let _ = write!(out, ",pred_{c}");
    }
    out.push('\n');
    for (t, row) in cm.counts.iter().enumerate() {
        let _ = write!(out, "{t}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    write(path, out)
}

/// `n,mean,rep_0,..`
pub fn write_ablation_csv(path: &Path, points: &[AblationPoint]) -> Result<()> {
    let reps = points.iter().map(|p| p.accuracies.len()).max().unwrap_or(0);
    let mut out = String::from("n,mean");
    for i in 0..reps {
        let _ = write!(out, ",rep_{i}");
    }
    out.push('\n');
    for p in points {
        let _ = write!(out, "{},{}", p.n, p.mean);
        for a in &p.accuracies {
            let _ = write!(out, ",{a}");
        }
        out.push('\n');
    }
    write(path, out)
}
