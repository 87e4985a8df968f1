use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rainlte_core::graphbuild::read_graphs;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rainlte"))
}

fn small_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/small.toml")
}

fn run(args: &[&str], out: &Path) -> Output {
    bin()
        .arg("--config")
        .arg(small_config())
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("spawn rainlte")
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
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

#[test]
fn small_pipeline_runs_and_confusion_rows_match_class_counts() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ds = read_graphs(&dir.path().join("graphs.bin")).unwrap();
    let mut counts = vec![0u64; ds.r];
    for g in &ds.graphs {
        counts[g.label] += 1;
    }
    for mode in ["shuffled", "unshuffled"] {
        let text = std::fs::read_to_string(dir.path().join(format!("confusion_{mode}.csv"))).unwrap();
        let sums: Vec<u64> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').skip(1).map(|v| v.parse::<u64>().unwrap()).sum())
            .collect();
        assert_eq!(sums, counts);
    }
    let echoed = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert!(echoed.contains("nodes = 5"));
    assert!(echoed.contains("learning_rate"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        for stage in ["synth", "featurize", "train"] {
            let o = run(&[stage], dir);
            assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
        }
    }
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(fa.iter().any(|(n, _)| n == "model.bin"));
    assert_eq!(fa, fb);
}

#[test]
fn train_without_graphs_is_missing_input_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["train"], &out);
    assert_eq!(o.status.code(), Some(10));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error[missing-input]: "), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(!out.exists());
}

#[test]
fn malformed_config_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[graph]\nnodes = \"nine\"\n").unwrap();
    let o = bin()
        .args(["--config", cfg.to_str().unwrap(), "--out-dir"])
        .arg(dir.path().join("o"))
        .arg("config")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn invalid_values_are_rejected_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[graph]\nnodes = 1\n").unwrap();
    let out = dir.path().join("o");
    let o = bin()
        .args(["--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "synth"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn seed_flag_reaches_echoed_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--seed", "77", "water"], dir.path());
    assert!(o.status.success());
    let echoed = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert_eq!(echoed.matches("seed = 77").count(), 5, "{echoed}");
    let water = std::fs::read_to_string(dir.path().join("water.csv")).unwrap();
    assert_eq!(water.lines().count(), 21);
}

#[test]
fn energy_writes_curve_and_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["energy"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let curve = std::fs::read_to_string(dir.path().join("savings.csv")).unwrap();
    assert!(curve.starts_with("pr_rain,p_w_watts,p_wo_watts,savings\n"));
    assert_eq!(curve.lines().count(), 12);
    let cov = std::fs::read_to_string(dir.path().join("coverage.csv")).unwrap();
    assert_eq!(cov.lines().count(), 5);
}

#[test]
fn ablate_reports_every_node_count() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(&["synth"], dir.path()).status.success());
    let o = run(&["ablate"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("ablation_nodes.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("n,mean,rep_0,rep_1"));
    assert_eq!(csv.lines().count(), 5);
    let json = std::fs::read_to_string(dir.path().join("ablation.json")).unwrap();
    assert!(json.contains("\"dim_with\": 16") && json.contains("\"dim_without\": 15"));
}
