use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Params, PreparedGraph, RainNetModel};
use crate::error::{Error, Result};
use crate::graphbuild::SensingGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Heavy-ball SGD: `v = μ v + g; θ -= lr v`.
    Momentum,
    /// Adam with `β1 = momentum`, `β2 = 0.999`, `ε = 1e-8`.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
            batch_size: 32,
            optimizer: OptimizerKind::Momentum,
            hidden: super::DEFAULT_HIDDEN,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight decay must be >= 0, got {}", self.weight_decay));
        }
        if self.batch_size == 0 || self.hidden == 0 {
            return bad("batch size and hidden width must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when there is no test set.
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: RainNetModel,
    pub metrics: Vec<EpochMetrics>,
    /// Test-set predictions of the final model, aligned with the test indices.
    pub test_predictions: Vec<usize>,
}

struct Optimizer {
    kind: OptimizerKind,
    m: Params,
    v: Params,
    step: i32,
}

impl Optimizer {
    fn new(kind: OptimizerKind, like: &Params) -> Self {
        Optimizer {
            kind,
            m: like.zeros_like(),
            v: like.zeros_like(),
            step: 0,
        }
    }

    fn apply(&mut self, params: &mut Params, grads: &Params, cfg: &TrainConfig) {
        self.step += 1;
        let lr = cfg.learning_rate;
        let mu = cfg.momentum;
        let wd = cfg.weight_decay;
        let (b1, b2, eps) = (mu, 0.999, 1e-8);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - f64::powi(b2, self.step);
        let kind = self.kind;
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for i in 0..p.len() {
                let gi = g[i] + wd * p[i];
                match kind {
                    OptimizerKind::Momentum => {
                        m[i] = mu * m[i] + gi;
                        p[i] -= lr * m[i];
                    }
                    OptimizerKind::Adam => {
                        m[i] = b1 * m[i] + (1.0 - b1) * gi;
                        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                        p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
}

const EVAL_CHUNK: usize = 256;

pub fn predict_all(model: &RainNetModel, graphs: &[&PreparedGraph]) -> Vec<usize> {
    graphs
        .chunks(EVAL_CHUNK)
        .flat_map(|c| model.predict_prepared(c))
        .collect()
}

/// Minibatch training on `train_idx`, scoring `test_idx` after every epoch.
/// Single-threaded; bit-identical for identical inputs.
pub fn train(
    mut model: RainNetModel,
    graphs: &[SensingGraph],
    train_idx: &[usize],
    test_idx: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_idx.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    let r = model.classes();
    let prep = |idx: &[usize]| -> Result<Vec<PreparedGraph>> {
        idx.iter()
            .map(|&i| {
                let g = graphs
                    .get(i)
                    .ok_or_else(|| Error::OutOfRange(format!("graph index {i} of {}", graphs.len())))?;
                model.prepare(g)
            })
            .collect()
    };
    let train_set = prep(train_idx)?;
    let test_set = prep(test_idx)?;
    let mut seen = vec![false; r];
    for g in &train_set {
        if g.label >= r {
            return Err(Error::OutOfRange(format!("label {} outside {r} classes", g.label)));
        }
        seen[g.label] = true;
    }
    let missing: Vec<usize> = (0..r).filter(|&c| !seen[c]).collect();
    if !missing.is_empty() {
        log::warn!("classes {missing:?} have no training graphs");
    }
    let test_refs: Vec<&PreparedGraph> = test_set.iter().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, &model.params);
    let mut grads = model.params.zeros_like();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut batch: Vec<&PreparedGraph> = Vec::with_capacity(cfg.batch_size);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| &train_set[i]));
            let loss = model.loss_and_grads_prepared(&batch, &mut grads)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Numerical(format!(
                    "loss became {loss} at epoch {epoch}, batch {b} (lr {}, {:?}); lower the learning rate",
                    cfg.learning_rate, cfg.optimizer
                )));
            }
            total += loss * chunk.len() as f64;
            opt.apply(&mut model.params, &grads, cfg);
        }
        let test_acc = (!test_refs.is_empty()).then(|| accuracy(&predict_all(&model, &test_refs), &test_set));
        let m = EpochMetrics {
            epoch,
            train_loss: total / train_set.len() as f64,
            test_acc,
        };
        log::debug!("epoch {epoch}: loss {:.5} acc {:?}", m.train_loss, m.test_acc);
        metrics.push(m);
    }
    let test_predictions = predict_all(&model, &test_refs);
    Ok(TrainOutcome {
        model,
        metrics,
        test_predictions,
    })
}

fn accuracy(pred: &[usize], set: &[PreparedGraph]) -> f64 {
    let hits = pred.iter().zip(set).filter(|(p, g)| **p == g.label).count();
    hits as f64 / set.len() as f64
}

/// `epoch,fold,train_loss,test_acc`; a missing accuracy is left empty.
pub fn write_metrics_csv(path: &Path, rows: &[(usize, Vec<EpochMetrics>)]) -> Result<()> {
    let mut out = String::from("epoch,fold,train_loss,test_acc\n");
    for (fold, metrics) in rows {
        for m in metrics {
            let acc = m.test_acc.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{fold},{},{acc}", m.epoch, m.train_loss);
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rainnet::model::tests::random_graph;
    use crate::rainnet::{DenseMatrix, ModelDims};
    use rand::Rng;

    fn separable(count: usize, seed: u64) -> Vec<SensingGraph> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|i| {
                let mut g = random_graph(4, 3, 2, &mut rng);
                g.label = i % 2;
                let shift = if g.label == 1 { 0.8 } else { 0.0 };
                let x = (0..12).map(|_| rng.random_range(0.0..0.5) + shift).collect();
                g.node_features = DenseMatrix::from_vec(4, 3, x);
                g
            })
            .collect()
    }

    fn dims() -> ModelDims {
        ModelDims { in_dim: 3, hidden: 8, classes: 2 }
    }

    #[test]
    fn separable_two_class_set_is_learned() {
        let graphs = separable(80, 1);
        let model = RainNetModel::init(1, dims(), 2.0, 3).unwrap();
        let train_idx: Vec<usize> = (0..60).collect();
        let test_idx: Vec<usize> = (60..80).collect();
        let cfg = TrainConfig {
            batch_size: 8,
            ..TrainConfig::default()
        };
        let out = train(model, &graphs, &train_idx, &test_idx, &cfg).unwrap();
        assert_eq!(out.metrics.len(), 150);
        assert_eq!(out.metrics.last().unwrap().test_acc, Some(1.0));
        let smooth = |a: usize| out.metrics[a..a + 3].iter().map(|m| m.train_loss).sum::<f64>();
        assert!(smooth(7) < smooth(0));
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let graphs = separable(20, 2);
        let model = RainNetModel::init(1, dims(), 2.0, 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 5,
            ..TrainConfig::default()
        };
        let idx: Vec<usize> = (0..20).collect();
        let out = train(model.clone(), &graphs, &idx, &[], &cfg).unwrap();
        assert_eq!(out.model, model);
        assert!(out.metrics.iter().all(|m| m.test_acc.is_none()));
    }

    #[test]
    fn training_is_deterministic() {
        let graphs = separable(40, 3);
        let idx: Vec<usize> = (0..30).collect();
        let test: Vec<usize> = (30..40).collect();
        for optimizer in [OptimizerKind::Momentum, OptimizerKind::Adam] {
            let cfg = TrainConfig {
                epochs: 10,
                optimizer,
                learning_rate: 0.01,
                ..TrainConfig::default()
            };
            let run = || {
                let m = RainNetModel::init(1, dims(), 2.0, 4).unwrap();
                train(m, &graphs, &idx, &test, &cfg).unwrap()
            };
            let (a, b) = (run(), run());
            assert_eq!(a.model.params.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.model.params.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            assert_eq!(a.metrics, b.metrics);
        }
    }

    #[test]
    fn divergence_aborts_with_diagnostics() {
        let graphs = separable(20, 5);
        let model = RainNetModel::init(1, dims(), 2.0, 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e200,
            epochs: 20,
            ..TrainConfig::default()
        };
        let idx: Vec<usize> = (0..20).collect();
        let err = train(model, &graphs, &idx, &[], &cfg).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)), "{err}");
        assert!(err.to_string().contains("epoch"));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: f64::NAN, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { momentum: 1.0, ..TrainConfig::default() }.validate().is_err());
        TrainConfig::default().validate().unwrap();
    }
}
