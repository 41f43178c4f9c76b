//! Driver behind the `fsi` binary: config files, benchmark sweeps and
//! output writers.

pub mod config;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

use fsi_core::simulator::{run, Discretization, Scenario, SimError};
use fsi_core::solver::PrecondKind;
use thiserror::Error;

pub use config::{parse_config, parse_config_str, write_config, ConfigError};
pub use output::{stats_csv, write_stats_csv, write_vtk, OutputError, StatsRow, STATS_HEADER};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("cannot create {path}: {source}")]
    CreateDir {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

/// Options of a single run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub precond: Option<PrecondKind>,
    pub out: PathBuf,
    /// Stop after this many steps instead of `t_end / dt`.
    pub steps: Option<usize>,
    pub vtk: bool,
}

fn limit_steps(s: &mut Scenario, steps: Option<usize>) {
    if let Some(n) = steps {
        s.t_end = n as f64 * s.dt;
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::CreateDir {
        path: dir.display().to_string(),
        source,
    })
}

/// Run one scenario and write `stats.csv`, `monitors.csv` and VTK snapshots
/// into `opts.out`. Returns the stats rows (summary first).
pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<Vec<StatsRow>, CliError> {
    let mut s = scenario.clone();
    limit_steps(&mut s, opts.steps);
    let kind = opts.precond.unwrap_or(s.precond);
    create_dir(&opts.out)?;
    let result = run(&s, kind)?;
    let dofs = result.summary.dofs;
    let mut rows = vec![StatsRow::summary(&s.name, &result.summary)];
    rows.extend(result.steps.iter().map(|st| StatsRow::step(&s.name, dofs, st)));
    write_stats_csv(&rows, &opts.out.join("stats.csv"))?;
    output::write_text(&opts.out.join("monitors.csv"), &output::monitors_csv(&result.monitors))?;
    if opts.vtk {
        let d = Discretization::new(&s)?;
        for snap in &result.snapshots {
            write_vtk(&d, &snap.state, snap.step, &opts.out)?;
        }
    }
    Ok(rows)
}

/// Mesh-refinement sweep: level `l` multiplies every resolution by `2^l`;
/// both preconditioners run at each level.
pub fn bench(scenario: &Scenario, levels: usize, steps: Option<usize>) -> Result<Vec<StatsRow>, CliError> {
    if levels < 2 {
        return Err(CliError::Usage(format!("--levels must be at least 2, got {levels}")));
    }
    let mut rows = Vec::new();
    for l in 0..levels {
        let mut s = scenario.refined(1 << l);
        limit_steps(&mut s, steps);
        for kind in [PrecondKind::Diagonal, PrecondKind::Triangular] {
            let r = run(&s, kind)?;
            rows.push(StatsRow::summary(&format!("{}_x{}_{kind}", s.name, 1 << l), &r.summary));
        }
    }
    Ok(rows)
}

/// Human-readable table in the layout of the benchmark tables.
pub fn format_table(rows: &[StatsRow]) -> String {
    use output::{count, secs};
    let mut out = format!(
        "{:<32} {:>9} {:>9} {:>9} {:>5} {:>7} {:>9} {:>9}\n",
        "config", "dofs", "T_ass", "T_coup", "nit", "its", "T_sol", "T_tot"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<32} {:>9} {:>9} {:>9} {:>5} {:>7} {:>9} {:>9}\n",
            r.config,
            r.dofs,
            secs(r.t_ass),
            secs(r.t_coup),
            count(r.nit),
            count(r.its),
            secs(r.t_sol),
            secs(r.t_tot)
        ));
    }
    out
}

/// Parse, build the discretization and report its size without stepping.
pub fn validate(path: &Path) -> Result<String, CliError> {
    let s = parse_config(path)?;
    let d = Discretization::new(&s)?;
    Ok(format!(
        "{}: ok, {} dofs (u {}, p {}, X {}, lambda {}), {} steps",
        s.name,
        d.n_dofs(),
        d.layout.n_u,
        d.layout.n_p,
        d.layout.n_x,
        d.layout.n_l,
        s.n_steps()
    ))
}
