//! CSV statistics and legacy-ASCII VTK snapshots.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fsi_core::fem::pressure_cell_means;
use fsi_core::simulator::{Discretization, Monitors, RunSummary, State, StepStats};
use fsi_core::solid::node_positions;
use thiserror::Error;

#[derive(Debug, Error)]
#[error("cannot write {path}: {source}")]
pub struct OutputError {
    pub path: String,
    #[source]
    pub source: std::io::Error,
}

fn write(path: &Path, text: &str) -> Result<(), OutputError> {
    fs::write(path, text).map_err(|source| OutputError {
        path: path.display().to_string(),
        source,
    })
}

pub const STATS_HEADER: &str = "config,dofs,T_ass,T_coup,nit,its,T_sol,T_tot";

/// One row of the benchmark table.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub config: String,
    pub dofs: usize,
    pub t_ass: f64,
    pub t_coup: f64,
    pub nit: f64,
    pub its: f64,
    pub t_sol: f64,
    pub t_tot: f64,
}

impl StatsRow {
    pub fn summary(config: &str, s: &RunSummary) -> Self {
        Self {
            config: config.to_string(),
            dofs: s.dofs,
            t_ass: s.t_ass,
            t_coup: s.t_coup,
            nit: s.nit,
            its: s.its,
            t_sol: s.t_sol,
            t_tot: s.t_tot,
        }
    }

    pub fn step(config: &str, dofs: usize, s: &StepStats) -> Self {
        Self {
            config: format!("{config}/step{}", s.step),
            dofs,
            t_ass: s.t_ass,
            t_coup: s.t_coup,
            nit: s.nit as f64,
            its: s.its,
            t_sol: s.t_sol,
            t_tot: s.t_tot,
        }
    }
}

/// Seconds with three significant digits.
pub fn secs(v: f64) -> String {
    format!("{v:.2e}")
}

/// Iteration averages: integers stay integers.
pub fn count(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

pub fn stats_csv(rows: &[StatsRow]) -> String {
    let mut out = String::from(STATS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.config,
            r.dofs,
            secs(r.t_ass),
            secs(r.t_coup),
            count(r.nit),
            count(r.its),
            secs(r.t_sol),
            secs(r.t_tot)
        );
    }
    out
}

pub fn write_stats_csv(rows: &[StatsRow], path: &Path) -> Result<(), OutputError> {
    write(path, &stats_csv(rows))
}

pub fn monitors_csv(monitors: &[Monitors]) -> String {
    let mut out = String::from("t,solid_area,energy,divergence,max_velocity\n");
    for m in monitors {
        let _ = writeln!(out, "{},{:e},{:e},{:e},{:e}", m.t, m.solid_area, m.energy, m.divergence, m.max_velocity);
    }
    out
}

/// VTK cell type of the 9-node biquadratic quadrilateral.
const VTK_BIQUADRATIC_QUAD: u8 = 28;
const VTK_QUAD: u8 = 9;
/// Local Q2 index (`3 * jj + ii`) for each VTK biquadratic node: corners,
/// edge midpoints, centre.
const Q2_TO_VTK: [usize; 9] = [0, 2, 8, 6, 1, 5, 7, 3, 4];

/// Fluid grid with Q2 velocity at the nodes and mean pressure per cell.
pub fn fluid_vtk(d: &Discretization, state: &State) -> String {
    let vel = &d.vel;
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0\nfluid t={}\nASCII\nDATASET UNSTRUCTURED_GRID", state.t);
    let _ = writeln!(out, "POINTS {} double", vel.n_nodes);
    for p in &vel.node_coords {
        let _ = writeln!(out, "{} {} 0", p.x, p.y);
    }
    let ne = vel.element_nodes.len();
    let _ = writeln!(out, "CELLS {} {}", ne, ne * 10);
    for nodes in &vel.element_nodes {
        out.push('9');
        for &k in &Q2_TO_VTK {
            let _ = write!(out, " {}", nodes[k]);
        }
        out.push('\n');
    }
    let _ = writeln!(out, "CELL_TYPES {ne}");
    for _ in 0..ne {
        let _ = writeln!(out, "{VTK_BIQUADRATIC_QUAD}");
    }
    let means = pressure_cell_means(&d.fluid, &d.pres, &state.p);
    let _ = writeln!(out, "CELL_DATA {ne}\nSCALARS p double 1\nLOOKUP_TABLE default");
    for m in means {
        let _ = writeln!(out, "{m}");
    }
    let _ = writeln!(out, "POINT_DATA {}\nVECTORS u double", vel.n_nodes);
    for n in 0..vel.n_nodes {
        let _ = writeln!(out, "{} {} 0", state.u[vel.dof(n, 0)], state.u[vel.dof(n, 1)]);
    }
    out
}

/// Solid mesh at its current position with the multiplier at the nodes.
pub fn solid_vtk(d: &Discretization, state: &State) -> String {
    let sd = &d.solid_dofs;
    let pos = node_positions(sd, &state.x);
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0\nsolid t={}\nASCII\nDATASET UNSTRUCTURED_GRID", state.t);
    let _ = writeln!(out, "POINTS {} double", pos.len());
    for p in &pos {
        let _ = writeln!(out, "{} {} 0", p.x, p.y);
    }
    let ne = d.solid.elements.len();
    let _ = writeln!(out, "CELLS {} {}", ne, ne * 5);
    for el in &d.solid.elements {
        let _ = writeln!(out, "4 {} {} {} {}", el[0], el[1], el[2], el[3]);
    }
    let _ = writeln!(out, "CELL_TYPES {ne}");
    for _ in 0..ne {
        let _ = writeln!(out, "{VTK_QUAD}");
    }
    let _ = writeln!(out, "POINT_DATA {}\nVECTORS lambda double", pos.len());
    for n in 0..sd.n_nodes {
        let _ = writeln!(out, "{} {} 0", state.lambda[sd.dof(n, 0)], state.lambda[sd.dof(n, 1)]);
    }
    out
}

/// Write `fluid_<step>.vtk` and `solid_<step>.vtk` into `dir`.
pub fn write_vtk(d: &Discretization, state: &State, step: usize, dir: &Path) -> Result<(), OutputError> {
    write(&dir.join(format!("fluid_{step:05}.vtk")), &fluid_vtk(d, state))?;
    write(&dir.join(format!("solid_{step:05}.vtk")), &solid_vtk(d, state))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), OutputError> {
    write(path, text)
}
