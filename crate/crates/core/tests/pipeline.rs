use rainlte_core::graphbuild::read_graphs;
use rainlte_core::ingest::{parse_lte_csv, synthesize_dataset, synthesize_radar, write_lte_csv, SynthConfig};
use rainlte_core::pipeline::{stages, RunConfig};
use rainlte_core::rainnet::load_model_checked;
use rainlte_core::Error;

fn small() -> RunConfig {
    RunConfig::from_toml(include_str!("../../../configs/small.toml")).unwrap()
}

#[test]
fn report_csv_round_trips() {
    let cfg = SynthConfig {
        m_stations: 5,
        users_per_station: 20,
        windows: 3,
        ..SynthConfig::default()
    };
    let radar = synthesize_radar(&cfg).unwrap();
    let ds = synthesize_dataset(&cfg, &radar).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reports.csv");
    write_lte_csv(&path, &ds.records).unwrap();
    assert_eq!(parse_lte_csv(&path).unwrap(), ds.records);
}

#[test]
fn stages_chain_through_files() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = stages::run_synth(&cfg, d).unwrap();
    assert_eq!(s.stations, 20);
    let f = stages::run_featurize(&cfg, d, d).unwrap();
    let t = stages::run_train(&cfg, d, d).unwrap();
    assert_eq!(t.train_graphs + t.test_graphs, f.graphs);
    assert_eq!(std::fs::metadata(d.join(stages::MODEL)).unwrap().len(), t.model_bytes);

    let graphs = read_graphs(&d.join(stages::GRAPHS)).unwrap();
    assert_eq!(graphs.graphs.len(), f.graphs);
    assert_eq!(graphs.feature_dim, f.feature_dim);
    assert_eq!(graphs.n, 5);

    let model = load_model_checked(&d.join(stages::MODEL), graphs.feature_dim, graphs.r).unwrap();
    let predicted = graphs.graphs.iter().map(|g| model.predict(g).unwrap()).collect::<Vec<_>>();
    assert!(predicted.iter().all(|&p| p < graphs.r));
    let lean = graphs.without_pou().unwrap();
    let e = load_model_checked(&d.join(stages::MODEL), lean.feature_dim, lean.r).unwrap_err();
    assert_eq!(e.class(), "dimension-mismatch");
}

#[test]
fn corrupt_graph_file_is_a_format_error() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    stages::run_synth(&cfg, d).unwrap();
    stages::run_featurize(&cfg, d, d).unwrap();
    let path = d.join(stages::GRAPHS);
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(read_graphs(&path), Err(Error::Format(_))));
    let out = d.join("out");
    let e = stages::run_train(&cfg, d, &out).unwrap_err();
    assert_eq!(e.class(), "format");
}

#[test]
fn missing_inputs_are_reported_before_output() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let e = stages::run_featurize(&cfg, dir.path(), &out).unwrap_err();
    assert_eq!(e.class(), "missing-input");
    assert!(!out.exists());
}
