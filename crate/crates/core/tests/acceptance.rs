//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fail. Run with `cargo test -p rainlte-core --test acceptance`.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use rainlte_core::energysim::{
    dbm_to_watts, min_power_robust, min_power_single, water_attenuation_length, EnergyConfig, EnergyScenario,
    EnergyTotals,
};
use rainlte_core::evalharness::{run_baseline, run_node_ablation, run_pou_ablation, RainNetTrainer};
use rainlte_core::features::{estimate_pdf, HistogramSpec, Metric, MetricRange};
use rainlte_core::graphbuild::{decode_graphs, encode_graphs, SensingGraph, SplitMode};
use rainlte_core::ingest::{synthesize_dataset, synthesize_radar, SynthConfig};
use rainlte_core::pipeline::{featurize, stages, GraphConfig, RunConfig};
use rainlte_core::rainnet::{decode_model, encode_model, DenseMatrix, ModelDims, RainNetModel, TrainConfig};

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_err(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (var / v.len() as f64).sqrt()
}

fn random_graph(n: usize, d: usize, r: usize, rng: &mut ChaCha8Rng) -> SensingGraph {
    let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(0.0..4.0), rng.random_range(0.0..4.0)]).collect();
    let mut e = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            e.set(i, j, (pts[i][0] - pts[j][0]).hypot(pts[i][1] - pts[j][1]));
        }
    }
    let x = (0..n * d).map(|_| rng.random_range(0.0..1.0)).collect();
    SensingGraph {
        anchor_station: 0,
        nodes: (0..n).collect(),
        node_features: DenseMatrix::from_vec(n, d, x),
        node_valid: vec![true; n],
        edge_dist_km: e,
        label: rng.random_range(0..r),
        window: 0,
        window_start: 0,
    }
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let dims = ModelDims {
            in_dim: rng.random_range(2..6),
            hidden: rng.random_range(3..8),
            classes: rng.random_range(2..5),
        };
        let mut m = RainNetModel::init(rng.random_range(2..4), dims, rng.random_range(0.5..3.0), seed).unwrap();
        for t in m.params.tensors_mut() {
            for v in t.iter_mut() {
                *v += rng.random_range(-0.1..0.1);
            }
        }
        let batch: Vec<_> = (0..3)
            .map(|_| {
                let n = rng.random_range(2..6);
                random_graph(n, dims.in_dim, dims.classes, &mut rng)
            })
            .collect();
        let analytic = m.loss_and_grads(&batch).unwrap().1.flatten();
        let loss = |m: &RainNetModel| m.loss_and_grads(&batch).unwrap().0;
        let mut idx = 0;
        for t in 0..m.params.tensors().len() {
            for i in 0..m.params.tensors()[t].len() {
                let mut plus = m.clone();
                plus.params.tensors_mut()[t][i] += h;
                let mut minus = m.clone();
                minus.params.tensors_mut()[t][i] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let a = analytic[idx];
                worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
                idx += 1;
                checked += 1;
            }
        }
    }
    let took = start.elapsed();
    outcome(
        worst < 1e-4 && took < Duration::from_secs(30),
        format!("max rel err {worst:.2e} over {checked} params, {took:.1?}"),
    )
}

fn histogram_lln() -> Outcome {
    // RSRP drawn as -120 + Binomial(40, 0.3); bins over [-120, -80].
    let trials = 40u64;
    let p = 0.3f64;
    let mut pmf = vec![0.0; trials as usize + 1];
    pmf[0] = (1.0 - p).powi(trials as i32);
    for j in 1..=trials as usize {
        pmf[j] = pmf[j - 1] * (trials as f64 - j as f64 + 1.0) / j as f64 * p / (1.0 - p);
    }
    let k = 5;
    let edges: Vec<f64> = (0..=k).map(|b| -120.0 + 40.0 * b as f64 / k as f64).collect();
    let mut truth = vec![0.0; k];
    for (j, &w) in pmf.iter().enumerate() {
        let v = -120.0 + j as f64;
        let b = (0..k).find(|&b| v < edges[b + 1]).unwrap_or(k - 1);
        truth[b] += w;
    }
    let spec = HistogramSpec {
        k,
        ranges: [MetricRange { min: -120, max: -80 }, MetricRange { min: 0, max: 1 }, MetricRange { min: 0, max: 1 }],
    };
    let binom = Binomial::new(trials, p).unwrap();
    let sup_err = |samples: usize, seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<i32> = (0..samples).map(|_| -120 + binom.sample(&mut rng) as i32).collect();
        let est = estimate_pdf(&vals, &spec, Metric::Rsrp).unwrap();
        est.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let small: Vec<f64> = (0..5).map(|s| sup_err(100_000, s)).collect();
    let large: Vec<f64> = (0..5).map(|s| sup_err(1_000_000, 100 + s)).collect();
    let worst_small = small.iter().cloned().fold(0.0, f64::max);
    let (ms, ml) = (mean(&small), mean(&large));
    outcome(
        worst_small < 0.02 && ml < ms,
        format!("sup-norm at 1e5 max {worst_small:.2e} mean {ms:.2e}, at 1e6 mean {ml:.2e}"),
    )
}

fn baseline() -> Outcome {
    let start = Instant::now();
    let cfg = SynthConfig::default();
    let radar = synthesize_radar(&cfg).unwrap();
    let ds = synthesize_dataset(&cfg, &radar).unwrap();
    let gcfg = GraphConfig::default();
    let graphs = featurize(&ds.records, &radar, &gcfg).unwrap().graphs(&radar, gcfg.nodes).unwrap();
    let trainer = RainNetTrainer { cfg: TrainConfig::default() };
    let mut acc = Vec::new();
    for mode in [SplitMode::Unshuffled, SplitMode::Shuffled] {
        let rep = run_baseline(&graphs, mode, &trainer, 2022, serde_json::Value::Null).unwrap();
        acc.push(rep.mean_accuracy);
    }
    let took = start.elapsed();
    let gap = (acc[0] - acc[1]).abs();
    outcome(
        acc.iter().all(|&a| a >= 0.95) && gap <= 0.02 && took < Duration::from_secs(300),
        format!(
            "{} graphs, unshuffled {:.4} shuffled {:.4} gap {gap:.4}, {took:.1?}",
            graphs.graphs.len(),
            acc[0],
            acc[1]
        ),
    )
}

fn node_ablation() -> Outcome {
    let cfg = SynthConfig {
        windows: 10,
        localized_noise_db: 1.0,
        ..SynthConfig::default()
    };
    let radar = synthesize_radar(&cfg).unwrap();
    let ds = synthesize_dataset(&cfg, &radar).unwrap();
    let f = featurize(&ds.records, &radar, &GraphConfig::default()).unwrap();
    let trainer = RainNetTrainer { cfg: TrainConfig::default() };
    let ns: Vec<usize> = (2..=8).collect();
    let pts = run_node_ablation(|n| f.graphs(&radar, n), &ns, &trainer, 0.5, 5, 11);
    if let Some(p) = pts.iter().find(|p| p.error.is_some()) {
        return outcome(false, format!("n={} failed: {:?}", p.n, p.error));
    }
    let means: Vec<f64> = pts.iter().map(|p| p.mean).collect();
    let gain = means[means.len() - 1] - means[0];
    let mut monotone = true;
    for w in pts.windows(2) {
        let se = (std_err(&w[0].accuracies).powi(2) + std_err(&w[1].accuracies).powi(2)).sqrt();
        if w[1].mean < w[0].mean - (2.0 * se).max(0.01) {
            monotone = false;
        }
    }
    let curve: Vec<String> = means.iter().map(|m| format!("{m:.3}")).collect();
    outcome(
        gain >= 0.20 && monotone,
        format!("means n=2..8 [{}], gain {gain:.3}, nondecreasing within noise: {monotone}", curve.join(" ")),
    )
}

fn pou_gap(cfg: &SynthConfig) -> (f64, f64) {
    let radar = synthesize_radar(cfg).unwrap();
    let ds = synthesize_dataset(cfg, &radar).unwrap();
    let gcfg = GraphConfig::default();
    let graphs = featurize(&ds.records, &radar, &gcfg).unwrap().graphs(&radar, gcfg.nodes).unwrap();
    let trainer = RainNetTrainer { cfg: TrainConfig::default() };
    let r = run_pou_ablation(&graphs, &trainer, 0.5, 3, 11).unwrap();
    (r.mean_with, r.mean_without)
}

fn pou_ablation() -> Outcome {
    // Small dB shifts so the outdoor share carries most of the class signal.
    let coupled = SynthConfig {
        windows: 10,
        class_shift_db: (0..10).map(|i| 2.0 * i as f64 / 9.0).collect(),
        class_outdoor_prob: (0..10).map(|i| 0.9 - 0.8 * i as f64 / 9.0).collect(),
        ..SynthConfig::default()
    };
    let control = SynthConfig {
        windows: 10,
        class_outdoor_prob: vec![0.5; 10],
        ..SynthConfig::default()
    };
    let (cw, cwo) = pou_gap(&coupled);
    let (dw, dwo) = pou_gap(&control);
    let (gc, gd) = (cw - cwo, dw - dwo);
    outcome(
        gc >= 0.10 && gd.abs() <= 0.02,
        format!("coupled {cw:.4} vs {cwo:.4} (+{gc:.4}); decoupled {dw:.4} vs {dwo:.4} ({gd:+.4})"),
    )
}

/// Cheapest total over every user-to-station assignment.
fn brute_force(sc: &EnergyScenario, rain: Option<bool>) -> f64 {
    let (ns, nu) = (sc.stations.len(), sc.users.len());
    let need = |s: usize, u: usize| match rain {
        Some(r) => sc.requirement(s, u, r),
        None => sc.requirement(s, u, false).max(sc.requirement(s, u, true)),
    };
    let mut best = f64::INFINITY;
    for code in 0..ns.pow(nu as u32) {
        let mut level = vec![f64::NEG_INFINITY; ns];
        let mut c = code;
        let mut ok = true;
        for u in 0..nu {
            let s = c % ns;
            c /= ns;
            let r = need(s, u);
            ok &= r <= sc.stations[s].max_dbm;
            level[s] = level[s].max(r);
        }
        if ok {
            best = best.min(level.iter().filter(|p| p.is_finite()).map(|&p| dbm_to_watts(p)).sum());
        }
    }
    best
}

fn energy() -> Outcome {
    let cfg = EnergyConfig::default();
    let mut dominance = true;
    let mut collinear = 0.0f64;
    let mut savings = Vec::new();
    for seed in 0..10 {
        let sc = EnergyScenario::generate(&cfg, seed).unwrap();
        let t = EnergyTotals::solve(&sc).unwrap();
        dominance &= t.rain.total_w <= t.robust.total_w && t.clear.total_w <= t.robust.total_w;
        let e = |pr: f64| t.expected_energy(pr).unwrap();
        let (a, b, c) = (e(0.1), e(0.5), e(0.9));
        let line = a.p_w + (c.p_w - a.p_w) * 0.5;
        collinear = collinear.max((b.p_w - line).abs() / line);
        savings.push(b.savings);
    }
    let small = EnergyConfig {
        area_km: 0.3,
        micro_count: 2,
        users: 6,
        ..EnergyConfig::default()
    };
    let mut exact = true;
    for seed in 0..20 {
        let sc = EnergyScenario::generate(&small, seed).unwrap();
        for rain in [false, true] {
            let want = brute_force(&sc, Some(rain));
            exact &= (min_power_single(&sc, rain).unwrap().total_w - want).abs() <= 1e-12 * want;
        }
        let want = brute_force(&sc, None);
        exact &= (min_power_robust(&sc).unwrap().total_w - want).abs() <= 1e-12 * want;
    }
    let lo = savings.iter().cloned().fold(f64::INFINITY, f64::min);
    outcome(
        dominance && collinear < 1e-9 && lo >= 0.30 && exact,
        format!(
            "dominance {dominance}, collinearity {collinear:.1e}, savings@0.5 min {lo:.4} mean {:.4} (target > 0.40), brute force match {exact}",
            mean(&savings)
        ),
    )
}

fn water() -> Outcome {
    let l = |f: f64| water_attenuation_length(f, 25.0).unwrap();
    let ratio = l(1.0) / l(5.0);
    let grid: Vec<f64> = (0..=190).map(|i| 0.5 + 0.05 * i as f64).collect();
    let decreasing = grid.windows(2).all(|w| l(w[1]) < l(w[0]));
    outcome(
        ratio > 10.0 && decreasing,
        format!("L(1 GHz)/L(5 GHz) = {ratio:.2}, strictly decreasing on 0.5-10 GHz: {decreasing}"),
    )
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn determinism() -> Outcome {
    let cfg = RunConfig::from_toml(include_str!("../../../configs/small.toml")).unwrap();
    let run = |dir: &Path| {
        stages::run_synth(&cfg, dir).unwrap();
        stages::run_featurize(&cfg, dir, dir).unwrap();
        stages::run_train(&cfg, dir, dir).unwrap();
        stages::run_eval(&cfg, dir, dir).unwrap();
        stages::run_energy(&cfg, dir).unwrap();
        stages::run_water(&cfg, dir).unwrap();
        dir_bytes(dir)
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (fa, fb) = (run(a.path()), run(b.path()));
    let identical = fa == fb;

    let file = |name: &str| &fa.iter().find(|(n, _)| n == name).unwrap().1;
    let model_bytes = file(stages::MODEL);
    let model = decode_model(model_bytes).unwrap();
    let reencoded = encode_model(&model).unwrap();
    let bits = |m: &RainNetModel| m.params.flatten().iter().map(|v| v.to_bits()).collect::<Vec<u64>>();
    let model_rt = reencoded == *model_bytes && bits(&decode_model(&reencoded).unwrap()) == bits(&model);
    let graph_bytes = file(stages::GRAPHS);
    let graphs = decode_graphs(graph_bytes).unwrap();
    let graph_rt = encode_graphs(&graphs).unwrap() == *graph_bytes;
    outcome(
        identical && model_rt && graph_rt,
        format!("{} files identical across reruns: {identical}, model round trip {model_rt}, graph round trip {graph_rt}", fa.len()),
    )
}

fn permutation_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let n = rng.random_range(2..12);
        let d = rng.random_range(2..17);
        let dims = ModelDims { in_dim: d, hidden: 16, classes: 10 };
        let m = RainNetModel::init(2, dims, rng.random_range(0.5..3.0), i).unwrap();
        let g = random_graph(n, d, 10, &mut rng);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let a = m.forward(&g).unwrap();
        let b = m.forward(&g.permuted(&perm)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs());
        }
    }
    outcome(worst <= 1e-9, format!("max logit change {worst:.2e} over 100 graphs"))
}

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("gradient check", gradient_check),
        ("histogram convergence", histogram_lln),
        ("baseline accuracy", baseline),
        ("node ablation", node_ablation),
        ("outdoor-share ablation", pou_ablation),
        ("energy planning", energy),
        ("water attenuation", water),
        ("determinism", determinism),
        ("permutation invariance", permutation_invariance),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {} {name}: {} ({}) [{:.1?}]",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed()
        );
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
