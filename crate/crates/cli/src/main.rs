use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod config;
mod experiments;
mod report;

use config::{parse_tolerance, ExperimentConfig, PartialConfig};

#[derive(Parser)]
#[command(name = "colombeau", version, about = "Experiments with generalized functions on ℝⁿ and simple manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the experiment catalog.
    List,
    /// Run one experiment and write report.json and series/*.csv.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment id, see `list`.
    name: Option<String>,
    #[arg(long = "experiment", conflicts_with = "name")]
    experiment: Option<String>,
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dyadic ε grid 2^-k_min ..= 2^-k_max.
    #[arg(long, value_name = "K_MIN..K_MAX")]
    grid: Option<String>,
    /// fourier | bump | gausspoly:M
    #[arg(long)]
    mollifier: Option<String>,
    /// Negligibility exponent m_max.
    #[arg(long)]
    mmax: Option<i32>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-ε parallelism inside experiments.
    #[arg(long)]
    parallel: bool,
    /// Explicit ε values for poincare, stokes and mechanics.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    eps: Option<Vec<f64>>,
    /// Tolerance override, repeatable.
    #[arg(long = "tol", value_name = "NAME=VALUE", value_parser = parse_tolerance)]
    tol: Vec<(String, f64)>,
}

impl RunArgs {
    fn config(self) -> Result<ExperimentConfig, String> {
        let file = match &self.config {
            Some(p) => PartialConfig::from_file(p)?,
            None => PartialConfig::default(),
        };
        let flags = PartialConfig {
            experiment: self.name.or(self.experiment),
            grid: self.grid,
            mollifier: self.mollifier,
            mmax: self.mmax,
            out: self.out,
            seed: self.seed,
            parallel: self.parallel.then_some(true),
            eps: self.eps,
            tolerances: self.tol.into_iter().collect(),
        };
        ExperimentConfig::resolve(file.merge(flags))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            print!("{}", experiments::catalog());
            ExitCode::SUCCESS
        }
        Command::Run(args) => {
            let cfg = match args.config() {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let outcome = cfg.experiment.run(&cfg).map_err(|e| e.to_string());
            if let Err(e) = &outcome {
                eprintln!("error: {e}");
            }
            match report::write(&cfg, outcome, &cfg.out) {
                Ok(true) => {
                    println!("{}: all checks passed; report in {}", cfg.experiment.id(), cfg.out.display());
                    ExitCode::SUCCESS
                }
                Ok(false) => {
                    println!("{}: checks failed; report in {}", cfg.experiment.id(), cfg.out.display());
                    ExitCode::from(1)
                }
                Err(e) => {
                    eprintln!("error: cannot write report: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
