use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use rainlte_core::pipeline::{stages, RunConfig};

/// Rainfall sensing from cellular signal reports, and the energy case study.
#[derive(Debug, Parser)]
#[command(name = "rainlte", version)]
struct Cli {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for artifacts and the echoed config.
    #[arg(long, global = true, default_value = "run")]
    out_dir: PathBuf,
    /// Override every stage seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic reports and radar frames.
    Synth,
    /// Cluster stations, compute node features and assemble graphs.
    Featurize {
        /// Where to read reports.csv and radar.json (default: --out-dir).
        #[arg(long)]
        input_dir: Option<PathBuf>,
    },
    /// Train one model and save it.
    Train {
        #[arg(long)]
        input_dir: Option<PathBuf>,
    },
    /// Five-fold cross-validation reports and confusion matrices.
    Eval {
        #[arg(long)]
        input_dir: Option<PathBuf>,
    },
    /// Node-count and outdoor-share ablations.
    Ablate {
        #[arg(long)]
        input_dir: Option<PathBuf>,
    },
    /// Minimum-power allocation and expected energy savings.
    Energy,
    /// Attenuation length of liquid water against frequency.
    Water,
    /// synth, featurize, train and eval in one directory.
    Run,
    /// Print the fully resolved configuration.
    Config,
}

fn exit_code(class: &str) -> u8 {
    match class {
        "invalid-input" => 3,
        "out-of-range" => 4,
        "parse" => 5,
        "dimension-mismatch" => 6,
        "infeasible" => 7,
        "format" => 8,
        "numerical" => 9,
        "missing-input" => 10,
        "io" => 11,
        _ => 1,
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn input<'a>(dir: &'a Option<PathBuf>, out: &'a Path) -> &'a Path {
    dir.as_deref().unwrap_or(out)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let cfg = load_config(cli)?;
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Synth => {
            let s = stages::run_synth(&cfg, out)?;
            println!("synth: {} reports from {} stations over {} windows", s.records, s.stations, s.windows);
        }
        Command::Featurize { input_dir } => {
            let s = stages::run_featurize(&cfg, input(input_dir, out), out)?;
            println!(
                "featurize: {} graphs, feature dim {} ({} reports used, {} dropped)",
                s.graphs, s.feature_dim, s.reports_used, s.reports_dropped
            );
        }
        Command::Train { input_dir } => train(&cfg, input(input_dir, out), out)?,
        Command::Eval { input_dir } => eval(&cfg, input(input_dir, out), out)?,
        Command::Ablate { input_dir } => {
            let s = stages::run_ablate(&cfg, input(input_dir, out), out)?;
            for p in &s.nodes {
                match &p.error {
                    None => println!("ablate: n={} accuracy {:.4}", p.n, p.mean),
                    Some(e) => println!("ablate: n={} failed: {e}", p.n),
                }
            }
            println!(
                "ablate: outdoor share in ({}) {:.4}, out ({}) {:.4}",
                s.pou.dim_with, s.pou.mean_with, s.pou.dim_without, s.pou.mean_without
            );
        }
        Command::Energy => {
            let s = stages::run_energy(&cfg, out)?;
            for r in &s.seeds {
                println!("energy: seed {} savings at pr_rain=0.5: {:.4}", r.seed, r.savings_at_half);
            }
            println!("energy: minimum savings {:.4}", s.min_savings_at_half);
        }
        Command::Water => {
            for (f, l) in stages::run_water(&cfg, out)? {
                println!("water: {f} GHz -> {:.4} mm", l * 1e3);
            }
        }
        Command::Run => {
            let s = stages::run_synth(&cfg, out)?;
            println!("synth: {} reports", s.records);
            let f = stages::run_featurize(&cfg, out, out)?;
            println!("featurize: {} graphs", f.graphs);
            train(&cfg, out, out)?;
            eval(&cfg, out, out)?;
        }
        Command::Config => print!("{}", cfg.to_toml()?),
    }
    Ok(())
}

fn train(cfg: &RunConfig, input: &Path, out: &Path) -> anyhow::Result<()> {
    let s = stages::run_train(cfg, input, out)?;
    let acc = s.final_test_accuracy.map_or("n/a".to_string(), |a| format!("{a:.4}"));
    println!(
        "train: {} train / {} test graphs, test accuracy {acc}, {} parameters, {} bytes on disk",
        s.train_graphs, s.test_graphs, s.parameters, s.model_bytes
    );
    Ok(())
}

fn eval(cfg: &RunConfig, input: &Path, out: &Path) -> anyhow::Result<()> {
    for rep in stages::run_eval(cfg, input, out)? {
        let folds: Vec<String> = rep.folds.iter().map(|f| format!("{:.4}", f.accuracy)).collect();
        println!("eval: {} mean accuracy {:.4} (folds {})", rep.mode.name(), rep.mean_accuracy, folds.join(" "));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RAINLTE_LOG", "warn")).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let class = err
                .downcast_ref::<rainlte_core::Error>()
                .map_or("internal", rainlte_core::Error::class);
            let detail = format!("{err:#}").replace('\n', " ");
            eprintln!("error[{class}]: {detail}");
            ExitCode::from(exit_code(class))
        }
    }
}
