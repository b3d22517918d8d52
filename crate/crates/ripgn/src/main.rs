use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use ripgn::experiment::{self, EXIT_ERROR};
use ripgn::{checks, RunConfig};

#[derive(Parser)]
#[command(name = "ripgn", version, about = "Relaxed inexact proximal Gauss-Newton EIT reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Flat `key = value` config file; defaults apply without one.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Overrides as `key=value`, applied after the file.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        for o in &self.overrides {
            let (k, v) = o.split_once('=').with_context(|| format!("override `{o}` is not KEY=VALUE"))?;
            cfg.set(k, v).map_err(anyhow::Error::msg)?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured phantom and write a dataset file.
    Simulate {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Reconstruct from a dataset (or fresh simulation) into `out_dir`.
    Reconstruct {
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Run every `sweep_solvers` × `sweep_w` combination.
    Sweep {
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Run the quick invariant and oracle checks.
    Check,
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Simulate { args, output } => {
            let cfg = args.load()?;
            let ds = experiment::simulate_to_file(&cfg, &output)?;
            println!(
                "wrote {} ({} measurements, {} inversion nodes, {} simulation nodes)",
                output.display(),
                ds.measurements.len(),
                ds.inversion_mesh.n_nodes(),
                ds.simulation_nodes
            );
            Ok(0)
        }
        Command::Reconstruct { args } => {
            let cfg = args.load()?;
            let report = ripgn::run_case(&cfg)?;
            print!("{}", report.summary.to_text());
            Ok(report.outcome.exit_code())
        }
        Command::Sweep { args } => {
            let cfg = args.load()?;
            let reports = ripgn::sweep(&cfg)?;
            print!("{}", std::fs::read_to_string(cfg.out_dir.join("sweep.txt"))?);
            Ok(reports.iter().map(|r| r.outcome.exit_code()).max().unwrap_or(0))
        }
        Command::Check => {
            let results = checks::quick();
            for r in &results {
                println!("{r}");
            }
            Ok(if results.iter().all(|r| r.passed) { 0 } else { EXIT_ERROR })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
