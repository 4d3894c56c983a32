use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wolf::harness::report::{primary_medians, write_experiment, write_pif, write_sweep, ReportError};
use wolf::harness::{run_experiment, run_pif, run_sweep, summarise_sweep, ExperimentConfig, ScenarioKind};

#[derive(Parser)]
#[command(name = "wolf", version, about = "Robust filtering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// 2D tracking with Student-t or mixture measurement noise.
    Track2d(Common),
    /// Lorenz96 with ensemble filters.
    Lorenz96(Common),
    /// Online 1d regression with an MLP or the parametric curve.
    Regress1d(Common),
    /// Posterior influence grids on a 2D tracking history.
    Pif(Common),
    /// Hyperparameter sweep described by the config's `sweep` section.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "wolf-out")]
    out: PathBuf,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

enum Failure {
    Config(String),
    Run(String),
    Io(ReportError),
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        Failure::Io(e)
    }
}

fn load(kind: Option<ScenarioKind>, args: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match (&args.config, kind) {
        (Some(path), _) => ExperimentConfig::from_path(path, kind).map_err(|e| Failure::Config(e.to_string()))?,
        (None, Some(k)) => ExperimentConfig::default_for(k),
        (None, None) => return Err(Failure::Config("sweep needs --config".into())),
    };
    if let Some(s) = args.seed {
        cfg.run.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.run.trials = t;
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn experiment(cfg: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    let result = run_experiment(cfg).map_err(|e| Failure::Run(e.to_string()))?;
    let metric = cfg.scenario.kind().primary_metric();
    for (filter, m) in primary_medians(&result) {
        println!("{filter:<16} median {metric} {m:.4}");
    }
    report(&write_experiment(out, &result, cfg)?);
    Ok(())
}

fn pif(cfg: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    let results = run_pif(cfg).map_err(|e| Failure::Run(e.to_string()))?;
    for r in &results {
        println!("{:<16} grid max {:.4} bound {:.4}", r.filter, r.grid.max(), r.bound);
    }
    report(&write_pif(out, &results)?);
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    if cfg.sweep.is_none() {
        return Err(Failure::Config("config has no sweep section".into()));
    }
    let result = run_sweep(cfg).map_err(|e| Failure::Run(e.to_string()))?;
    for row in summarise_sweep(&result, cfg).iter().filter(|r| r.best) {
        println!("{:<16} best {} = {} (median {:.4})", row.filter, result.parameter, row.value, row.median);
    }
    report(&write_sweep(out, &result, cfg)?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (kind, args) = match &cli.command {
        Command::Track2d(a) => (Some(ScenarioKind::Track2d), a),
        Command::Lorenz96(a) => (Some(ScenarioKind::Lorenz96), a),
        Command::Regress1d(a) => (Some(ScenarioKind::Regress1d), a),
        Command::Pif(a) => (Some(ScenarioKind::Pif), a),
        Command::Sweep(a) => (None, a),
    };
    let cfg = load(kind, args)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| Failure::Run(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Sweep(_) => sweep(&cfg, &args.out),
        Command::Pif(_) => pif(&cfg, &args.out),
        _ => experiment(&cfg, &args.out),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Io(e)) => {
            eprintln!("i/o error: {e}");
            ExitCode::from(3)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
