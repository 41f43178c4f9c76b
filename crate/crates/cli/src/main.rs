use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fsi_cli::{bench, format_table, parse_config, run_scenario, validate, write_stats_csv, CliError, RunOptions};
use fsi_core::solver::PrecondKind;

#[derive(Parser)]
#[command(name = "fsi", version, about = "Fictitious-domain fluid-structure interaction solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario, writing stats, monitors and VTK snapshots.
    Run {
        config: PathBuf,
        /// Preconditioner: diag or tri (defaults to the config value).
        #[arg(long)]
        precond: Option<PrecondKind>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Stop after this many time steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Skip the VTK snapshots.
        #[arg(long)]
        no_vtk: bool,
    },
    /// Mesh-refinement sweep with both preconditioners.
    Bench {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// Time steps per run (defaults to the full interval).
        #[arg(long)]
        steps: Option<usize>,
        /// Where to write the stats table.
        #[arg(long, default_value = "bench.csv")]
        csv: PathBuf,
    },
    /// Check a config and report the problem size.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run {
            config,
            precond,
            out,
            steps,
            no_vtk,
        } => {
            let s = parse_config(&config)?;
            let rows = run_scenario(
                &s,
                &RunOptions {
                    precond,
                    out: out.clone(),
                    steps,
                    vtk: !no_vtk,
                },
            )?;
            print!("{}", format_table(&rows[..1]));
            println!("output written to {}", out.display());
        }
        Command::Bench {
            config,
            levels,
            steps,
            csv,
        } => {
            let s = parse_config(&config)?;
            let rows = bench(&s, levels, steps)?;
            print!("{}", format_table(&rows));
            write_stats_csv(&rows, &csv)?;
        }
        Command::Validate { config } => println!("{}", validate(&config)?),
    }
    Ok(())
}
