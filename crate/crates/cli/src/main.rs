use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use entrydyn_cli::commands::{self, OracleConfig};
use entrydyn_cli::config::Overrides;
use entrydyn_cli::{CliError, CliResult};

/// Market entry game dynamics: agent-based and kinetic engines.
///
/// Exit codes: 0 success, 1 check failure, 2 configuration error,
/// 3 runtime error. ENTRYDYN_THREADS caps the worker threads.
#[derive(Parser)]
#[command(name = "entrydyn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    #[arg(long)]
    replicas: Option<usize>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, out: self.out.clone(), t_end: self.t_end, replicas: self.replicas }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Agent-based Monte Carlo run.
    Abm(RunArgs),
    /// Kinetic (drift-diffusion) solver run.
    Pde(RunArgs),
    /// Fit learning and sorting rates to series files.
    Analyze {
        /// Run configuration supplying the game parameters.
        #[arg(long)]
        config: PathBuf,
        /// Directory for fits.json; defaults to the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Learning prefactor; computed from the configured initial density if omitted.
        #[arg(long = "c-p")]
        c_p: Option<f64>,
        #[arg(required = true)]
        series: Vec<PathBuf>,
    },
    /// Distance between two series files.
    Compare {
        first: PathBuf,
        second: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Fail if the sup-norm of a exceeds this.
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Verify the exact one-round law on random small populations.
    OracleCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for oracle.json.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Write gnuplot scripts for the CSV files in a run directory.
    MakePlots {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("ENTRYDYN_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("invalid ENTRYDYN_THREADS: expected a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Abm(args) => {
            let resolved = commands::load_run_config(&args.config, &args.overrides())?;
            let dir = commands::cmd_abm(&resolved)?;
            println!("wrote {}", dir.display());
        }
        Command::Pde(args) => {
            let resolved = commands::load_run_config(&args.config, &args.overrides())?;
            let dir = commands::cmd_pde(&resolved)?;
            println!("wrote {}", dir.display());
        }
        Command::Analyze { config, out, c_p, series } => {
            let resolved = commands::load_run_config(&config, &Overrides::default())?;
            let out = out.unwrap_or_else(|| resolved.config.output_dir.clone());
            let path = commands::cmd_analyze(&resolved, &series, c_p, &out)?;
            println!("wrote {}", path.display());
        }
        Command::Compare { first, second, out, tolerance } => {
            let path = commands::cmd_compare(&first, &second, &out, tolerance)?;
            println!("wrote {}", path.display());
        }
        Command::OracleCheck { config, seed, out, instances, tolerance } => {
            let mut cfg = match config {
                Some(path) => OracleConfig::load(&path)?,
                None => OracleConfig::default(),
            };
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.instances = instances.unwrap_or(cfg.instances);
            cfg.tolerance = tolerance.unwrap_or(cfg.tolerance);
            let report = commands::cmd_oracle_check(&cfg)?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
            println!("{text}");
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
                let path = dir.join("oracle.json");
                std::fs::write(&path, text + "\n").map_err(CliError::io(&path))?;
            }
            if !report.pass {
                return Err(CliError::Check(format!("oracle identities exceed tolerance {}", report.tolerance)));
            }
        }
        Command::MakePlots { out } => {
            for path in commands::cmd_make_plots(&out)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
