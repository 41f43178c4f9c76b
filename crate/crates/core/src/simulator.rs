//! Semi-implicit time stepping of the coupled problem and physical monitors.

use std::time::Instant;

use thiserror::Error;

use crate::coupling::{assemble_coupling, CouplingError, DEFAULT_DEGREE};
use crate::fem::{
    apply_velocity_bcs, assemble_fluid_blocks, assemble_solid_mass, assemble_solid_stiffness_linear,
    fix_pressure_nullspace, zero_mean_pressure, BcSpec, Constraints, FluidParams, VelocityBc,
};
use crate::geometry::{polygon_area, BoundingBox, Point, Polygon};
use crate::mesh::{
    build_annulus_quarter_mesh, build_cartesian_mesh, build_dof_maps, DofMap, Mesh, MeshError, SpaceKind,
};
use crate::solid::{interpolate_map, node_positions, solid_energy, SolidError, SolidModel};
use crate::solver::{
    assemble_a11, assemble_a22, build_block_system, newton_solve, refactor_if_changed, solve_block_system,
    DirectFactor, GmresParams, Layout, NewtonParams, PrecondKind, SolverError, StepProblem,
};
use crate::sparse::{norm2, norm_inf, SparseMatrix};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Solid(#[from] SolidError),
    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<SimError>,
    },
}

/// Immersed solid reference domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolidShape {
    /// Quarter annulus `0.3 <= |s| <= 0.5`, `s >= 0`.
    Annulus { nr: usize, ntheta: usize },
    /// Axis-aligned rectangle.
    Rectangle { domain: BoundingBox, nx: usize, ny: usize },
}

/// Initial position `X_0(s) = (a s_1, b s_2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialStretch {
    pub sx: f64,
    pub sy: f64,
}

impl InitialStretch {
    pub const IDENTITY: Self = Self { sx: 1.0, sy: 1.0 };
}

/// Point load on the solid node nearest `target`, active on
/// `[t_start, t_end]` (evaluated at the new time level).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointForce {
    pub target: Point,
    pub direction: Point,
    pub magnitude: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl PointForce {
    pub fn active(&self, t: f64) -> bool {
        let eps = 1e-12 * self.t_end.abs().max(1.0);
        t >= self.t_start - eps && t <= self.t_end + eps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub fluid_domain: BoundingBox,
    pub fluid_nx: usize,
    pub fluid_ny: usize,
    pub bc: BcSpec,
    pub solid: SolidShape,
    pub initial: InitialStretch,
    pub model: SolidModel,
    pub density: f64,
    pub viscosity: f64,
    pub dt: f64,
    pub t_end: f64,
    pub force: Option<PointForce>,
    pub precond: PrecondKind,
    pub gmres: GmresParams,
    pub newton: NewtonParams,
    pub quad_degree: usize,
    pub snapshot_every: usize,
}

impl Scenario {
    /// Stretched quarter annulus with the linear law; level `k` scales every
    /// mesh resolution by `k`.
    pub fn annulus_linear(level: usize) -> Self {
        let k = level.max(1);
        Self {
            name: level_name("annulus_linear", k),
            fluid_domain: BoundingBox::new(Point::new(0.0, 0.0), Point::new(1.0, 1.0)),
            fluid_nx: 32 * k,
            fluid_ny: 32 * k,
            bc: BcSpec {
                left: VelocityBc::Slip,
                right: VelocityBc::NoSlip,
                bottom: VelocityBc::Slip,
                top: VelocityBc::NoSlip,
            },
            solid: SolidShape::Annulus {
                nr: 48 * k,
                ntheta: 96 * k,
            },
            initial: InitialStretch { sx: 1.0 / 1.4, sy: 1.4 },
            model: SolidModel::Linear { kappa: 10.0 },
            density: 1.0,
            viscosity: 0.1,
            dt: 0.01,
            t_end: 2.0,
            force: None,
            precond: PrecondKind::Triangular,
            gmres: GmresParams::default(),
            newton: NewtonParams::default(),
            quad_degree: DEFAULT_DEGREE,
            snapshot_every: 25,
        }
    }

    /// Bar pulled down at the middle of its right edge, exponential law.
    pub fn bar_nonlinear(level: usize) -> Self {
        let k = level.max(1);
        Self {
            name: level_name("bar_nonlinear", k),
            fluid_domain: BoundingBox::new(Point::new(0.0, 0.0), Point::new(1.0, 1.0)),
            fluid_nx: 32 * k,
            fluid_ny: 32 * k,
            bc: BcSpec::no_slip(),
            solid: SolidShape::Rectangle {
                domain: BoundingBox::new(Point::new(0.0, 0.45), Point::new(0.4, 0.55)),
                nx: 96 * k,
                ny: 24 * k,
            },
            initial: InitialStretch::IDENTITY,
            model: SolidModel::Exponential { gamma: 1.333, eta: 9.242 },
            density: 1.0,
            viscosity: 0.2,
            dt: 0.002,
            t_end: 2.0,
            force: Some(PointForce {
                target: Point::new(0.4, 0.5),
                direction: Point::new(0.0, -1.0),
                magnitude: 0.2,
                t_start: 0.0,
                t_end: 1.0,
            }),
            precond: PrecondKind::Triangular,
            gmres: GmresParams::default(),
            newton: NewtonParams::default(),
            quad_degree: DEFAULT_DEGREE,
            snapshot_every: 25,
        }
    }

    /// Same scenario with every resolution multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        let mut s = self.clone();
        s.fluid_nx *= factor;
        s.fluid_ny *= factor;
        s.solid = match self.solid {
            SolidShape::Annulus { nr, ntheta } => SolidShape::Annulus {
                nr: nr * factor,
                ntheta: ntheta * factor,
            },
            SolidShape::Rectangle { domain, nx, ny } => SolidShape::Rectangle {
                domain,
                nx: nx * factor,
                ny: ny * factor,
            },
        };
        s
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if !(self.dt > 0.0) {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        if !(self.t_end >= self.dt) {
            return bad(format!("t_end = {} must be at least dt = {}", self.t_end, self.dt));
        }
        if !(self.density > 0.0 && self.viscosity > 0.0) {
            return bad("density and viscosity must be positive".into());
        }
        if self.fluid_nx == 0 || self.fluid_ny == 0 {
            return bad("fluid resolution must be positive".into());
        }
        if self.snapshot_every == 0 {
            return bad("snapshot stride must be positive".into());
        }
        match self.model {
            SolidModel::Linear { kappa } => {
                SolidModel::linear(kappa)?;
            }
            SolidModel::Exponential { gamma, eta } => {
                SolidModel::exponential(gamma, eta)?;
            }
        }
        if !(self.initial.sx > 0.0 && self.initial.sy > 0.0) {
            return bad("initial stretch factors must be positive".into());
        }
        if !(self.gmres.tol > 0.0 && self.gmres.restart >= 1 && self.newton.tol > 0.0) {
            return bad("solver tolerances must be positive and restart at least 1".into());
        }
        Ok(())
    }
}

fn level_name(base: &str, k: usize) -> String {
    if k == 1 {
        base.to_string()
    } else {
        format!("{base}_l{k}")
    }
}

/// Coefficients at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub t: f64,
}

impl State {
    fn stacked(&self) -> Vec<f64> {
        [&self.u[..], &self.p, &self.x, &self.lambda].concat()
    }

    fn from_stacked(z: &[f64], l: Layout, t: f64) -> Self {
        let (u, rest) = z.split_at(l.n_u);
        let (p, rest) = rest.split_at(l.n_p);
        let (x, lambda) = rest.split_at(l.n_x);
        Self {
            u: u.to_vec(),
            p: p.to_vec(),
            x: x.to_vec(),
            lambda: lambda.to_vec(),
            t,
        }
    }
}

/// Meshes, dof maps and time-independent matrices.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub fluid: Mesh,
    pub vel: DofMap,
    pub pres: DofMap,
    pub solid: Mesh,
    pub solid_dofs: DofMap,
    pub layout: Layout,
    pub constraints: Constraints,
    pub pinned: Option<usize>,
    pub mass: SparseMatrix,
    /// Divergence block with constrained columns removed, before pinning.
    pub div: SparseMatrix,
    pub a11: SparseMatrix,
    pub c_s: SparseMatrix,
    /// `A_s` for the linear law.
    pub a_s: Option<SparseMatrix>,
    pub force_node: Option<usize>,
}

impl Discretization {
    pub fn new(s: &Scenario) -> Result<Self, SimError> {
        s.validate()?;
        let fluid = build_cartesian_mesh(s.fluid_nx, s.fluid_ny, s.fluid_domain)?;
        let vel = build_dof_maps(&fluid, SpaceKind::VelocityQ2);
        let pres = build_dof_maps(&fluid, SpaceKind::PressureP1dc);
        let solid = match s.solid {
            SolidShape::Annulus { nr, ntheta } => build_annulus_quarter_mesh(nr, ntheta)?,
            SolidShape::Rectangle { domain, nx, ny } => build_cartesian_mesh(nx, ny, domain)?,
        };
        let solid_dofs = build_dof_maps(&solid, SpaceKind::SolidQ1);
        let layout = Layout {
            n_u: vel.n_dofs(),
            n_p: pres.n_dofs(),
            n_x: solid_dofs.n_dofs(),
            n_l: solid_dofs.n_dofs(),
        };
        let fb = assemble_fluid_blocks(
            &fluid,
            &vel,
            &pres,
            FluidParams {
                viscosity: s.viscosity,
                density: s.density,
                dt: s.dt,
            },
        );
        let constraints = s.bc.constraints(&vel, &s.fluid_domain);
        let mut sys = apply_velocity_bcs(&fb.a_f, &fb.div, &vec![0.0; layout.n_u], &constraints);
        let div = sys.div.clone();
        if s.bc.encloses() {
            sys = fix_pressure_nullspace(sys);
        }
        let a11 = assemble_a11(&sys.a_f, &sys.div, sys.pinned_pressure);
        let c_s = assemble_solid_mass(&solid, &solid_dofs);
        let a_s = match s.model {
            SolidModel::Linear { kappa } => Some(assemble_solid_stiffness_linear(&solid, &solid_dofs, kappa)),
            SolidModel::Exponential { .. } => None,
        };
        let force_node = s.force.map(|f| solid.nearest_node(f.target));
        Ok(Self {
            fluid,
            vel,
            pres,
            solid,
            solid_dofs,
            layout,
            constraints,
            pinned: sys.pinned_pressure,
            mass: fb.mass,
            div,
            a11,
            c_s,
            a_s,
            force_node,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.layout.n()
    }

    pub fn initial_state(&self, s: &Scenario) -> State {
        let st = s.initial;
        State {
            u: vec![0.0; self.layout.n_u],
            p: vec![0.0; self.layout.n_p],
            x: interpolate_map(&self.solid_dofs, |q| Point::new(st.sx * q.x, st.sy * q.y)),
            lambda: vec![0.0; self.layout.n_l],
            t: 0.0,
        }
    }

    pub fn monitors(&self, s: &Scenario, state: &State) -> Monitors {
        let pos = node_positions(&self.solid_dofs, &state.x);
        let area = (0..self.solid.n_elements())
            .map(|e| polygon_area(&Polygon::new(self.solid.element_map_with(e, &pos).corners.to_vec())))
            .sum();
        let energy = solid_energy(&self.solid, &self.solid_dofs, &s.model, &state.x).unwrap_or(f64::NAN);
        let un = norm2(&state.u);
        let divergence = if un > 0.0 { norm2(&self.div.mul_vec(&state.u)) / un } else { 0.0 };
        Monitors {
            t: state.t,
            solid_area: area,
            energy,
            divergence,
            max_velocity: norm_inf(&state.u),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monitors {
    pub t: f64,
    /// Area of the mapped solid (shoelace over element images).
    pub solid_area: f64,
    pub energy: f64,
    /// `||B u|| / ||u||`
    pub divergence: f64,
    pub max_velocity: f64,
}

/// Per-step solver statistics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub step: usize,
    /// Seconds building the step system (right-hand side and blocks).
    pub t_ass: f64,
    pub t_coup: f64,
    /// Newton iterations (1 for the linear law: a single linear solve).
    pub nit: usize,
    /// GMRES iterations, averaged over the Newton iterations.
    pub its: f64,
    /// Solve seconds, averaged over the Newton iterations.
    pub t_sol: f64,
    pub t_tot: f64,
}

/// One stepping run with cached factorizations.
pub struct Simulation {
    pub scenario: Scenario,
    pub disc: Discretization,
    pub state: State,
    /// Seconds spent on the time-independent assembly.
    pub setup_seconds: f64,
    f11: DirectFactor,
    f22: Option<DirectFactor>,
    step: usize,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self, SimError> {
        let t0 = Instant::now();
        let disc = Discretization::new(&scenario)?;
        let setup_seconds = t0.elapsed().as_secs_f64();
        let f11 = DirectFactor::new(&disc.a11, "A11")?;
        let state = disc.initial_state(&scenario);
        Ok(Self {
            scenario,
            disc,
            state,
            setup_seconds,
            f11,
            f22: None,
            step: 0,
        })
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn a11_fingerprint(&self) -> u64 {
        self.f11.fingerprint()
    }

    pub fn a22_fingerprint(&self) -> Option<u64> {
        self.f22.as_ref().map(DirectFactor::fingerprint)
    }

    /// Advance from `t_n` to `t_{n+1}` with the given preconditioner.
    pub fn advance_step(&mut self, kind: PrecondKind) -> Result<StepStats, SimError> {
        let step = self.step + 1;
        self.advance_inner(kind).map_err(|e| SimError::AtStep {
            step,
            source: Box::new(e),
        })
    }

    fn advance_inner(&mut self, kind: PrecondKind) -> Result<StepStats, SimError> {
        let t_start = Instant::now();
        let s = &self.scenario;
        let d = &self.disc;
        let l = d.layout;
        let t_new = self.state.t + s.dt;

        let t0 = Instant::now();
        let cf = assemble_coupling(&self.state.x, &d.fluid, &d.vel, &d.solid, &d.solid_dofs, s.quad_degree)?;
        let cf = d.constraints.drop_columns(&cf);
        let t_coup = t0.elapsed().as_secs_f64();

        let t0 = Instant::now();
        let mut rhs = vec![0.0; l.n()];
        d.mass.mul_vec_add(s.density / s.dt, &self.state.u, &mut rhs[..l.n_u]);
        d.constraints.zero(&mut rhs[..l.n_u]);
        if let (Some(f), Some(node)) = (s.force, d.force_node) {
            if f.active(t_new) {
                let o = l.n1();
                rhs[o + d.solid_dofs.dof(node, 0)] += f.magnitude * f.direction.x;
                rhs[o + d.solid_dofs.dof(node, 1)] += f.magnitude * f.direction.y;
            }
        }
        let o = l.n1() + l.n_x;
        d.c_s.mul_vec_add(-1.0 / s.dt, &self.state.x, &mut rhs[o..]);

        let stats;
        let z = if let Some(a_s) = &d.a_s {
            let a22 = assemble_a22(a_s, &d.c_s, s.dt);
            let sys = build_block_system(l, d.a11.clone(), &cf, a22, rhs)?;
            let t_ass = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            refactor_if_changed(&mut self.f22, &sys.a22, "A22")?;
            let out = solve_block_system(&sys, &self.f11, self.f22.as_ref().expect("factor"), kind, s.gmres)?;
            let t_sol = t1.elapsed().as_secs_f64();
            stats = StepStats {
                step: self.step + 1,
                t_ass,
                t_coup,
                nit: 1,
                its: out.its as f64,
                t_sol,
                t_tot: 0.0,
            };
            out.x
        } else {
            let problem = StepProblem {
                layout: l,
                a11: &d.a11,
                cf: &cf,
                c_s: &d.c_s,
                dt: s.dt,
                solid: &d.solid,
                solid_dofs: &d.solid_dofs,
                model: &s.model,
                rhs: &rhs,
            };
            let t_ass = t0.elapsed().as_secs_f64();
            let out = newton_solve(
                &problem,
                &self.state.stacked(),
                &self.f11,
                &mut self.f22,
                kind,
                s.newton,
                s.gmres,
            )?;
            let per = out.nit.max(1) as f64;
            stats = StepStats {
                step: self.step + 1,
                t_ass,
                t_coup,
                nit: out.nit,
                its: out.avg_its(),
                t_sol: out.solve_seconds / per,
                t_tot: 0.0,
            };
            out.z
        };
        let mut next = State::from_stacked(&z, l, t_new);
        if d.pinned.is_some() {
            zero_mean_pressure(&d.fluid, &d.pres, &mut next.p);
        }
        self.state = next;
        self.step += 1;
        Ok(StepStats {
            t_tot: t_start.elapsed().as_secs_f64(),
            ..stats
        })
    }
}

/// Averages over the time steps, as in the benchmark tables.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dofs: usize,
    pub t_ass: f64,
    pub t_coup: f64,
    pub nit: f64,
    /// GMRES iterations per Newton iteration, averaged over all steps.
    pub its: f64,
    pub t_sol: f64,
    pub t_tot: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub state: State,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub summary: RunSummary,
    pub steps: Vec<StepStats>,
    pub monitors: Vec<Monitors>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: State,
}

/// Run `scenario.n_steps()` steps; snapshots at step 0, every stride and
/// at the end.
pub fn run(scenario: &Scenario, kind: PrecondKind) -> Result<RunResult, SimError> {
    run_with(scenario, kind, |_, _| {})
}

/// [`run`] with a callback after every step.
pub fn run_with(
    scenario: &Scenario,
    kind: PrecondKind,
    mut on_step: impl FnMut(&StepStats, &Monitors),
) -> Result<RunResult, SimError> {
    let t0 = Instant::now();
    let mut sim = Simulation::new(scenario.clone())?;
    let n = scenario.n_steps();
    let mut steps = Vec::with_capacity(n);
    let mut monitors = vec![sim.disc.monitors(scenario, &sim.state)];
    let mut snapshots = vec![Snapshot {
        step: 0,
        state: sim.state.clone(),
    }];
    for k in 1..=n {
        let st = sim.advance_step(kind)?;
        let m = sim.disc.monitors(scenario, &sim.state);
        on_step(&st, &m);
        steps.push(st);
        monitors.push(m);
        if k % scenario.snapshot_every == 0 || k == n {
            snapshots.push(Snapshot {
                step: k,
                state: sim.state.clone(),
            });
        }
    }
    let nit_total: usize = steps.iter().map(|s| s.nit).sum();
    let its_total: f64 = steps.iter().map(|s| s.its * s.nit as f64).sum();
    let sol_total: f64 = steps.iter().map(|s| s.t_sol * s.nit as f64).sum();
    let nf = n.max(1) as f64;
    let per_newton = nit_total.max(1) as f64;
    let summary = RunSummary {
        dofs: sim.disc.n_dofs(),
        t_ass: sim.setup_seconds,
        t_coup: steps.iter().map(|s| s.t_coup).sum::<f64>() / nf,
        nit: nit_total as f64 / nf,
        its: its_total / per_newton,
        t_sol: sol_total / per_newton,
        t_tot: t0.elapsed().as_secs_f64(),
    };
    Ok(RunResult {
        summary,
        steps,
        monitors,
        snapshots,
        final_state: sim.state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_annulus() -> Scenario {
        let mut s = Scenario::annulus_linear(1);
        s.fluid_nx = 12;
        s.fluid_ny = 12;
        s.solid = SolidShape::Annulus { nr: 3, ntheta: 12 };
        s.t_end = 3.0 * s.dt;
        s
    }

    fn tiny_bar() -> Scenario {
        let mut s = Scenario::bar_nonlinear(1);
        s.fluid_nx = 10;
        s.fluid_ny = 10;
        s.solid = SolidShape::Rectangle {
            domain: BoundingBox::new(Point::new(0.0, 0.45), Point::new(0.4, 0.55)),
            nx: 8,
            ny: 2,
        };
        s.t_end = 3.0 * s.dt;
        s
    }

    #[test]
    fn preset_dof_counts() {
        assert_eq!(Discretization::new(&Scenario::annulus_linear(1)).unwrap().n_dofs(), 30534);
        assert_eq!(Discretization::new(&Scenario::bar_nonlinear(1)).unwrap().n_dofs(), 21222);
    }

    #[test]
    fn three_steps_give_three_rows() {
        let s = tiny_annulus();
        let r = run(&s, PrecondKind::Triangular).unwrap();
        assert_eq!(r.steps.len(), 3);
        assert_eq!(r.monitors.len(), 4);
        assert_eq!(r.snapshots.first().unwrap().step, 0);
        assert_eq!(r.snapshots.last().unwrap().step, 3);
        assert!((r.final_state.t - 0.03).abs() < 1e-15);
        assert!(r.summary.its >= 1.0);
    }

    #[test]
    fn initial_annulus_area_is_preserved_by_stretch() {
        let s = tiny_annulus();
        let d = Discretization::new(&s).unwrap();
        let m = d.monitors(&s, &d.initial_state(&s));
        assert!((m.solid_area - d.solid.total_area()).abs() < 1e-14);
        assert_eq!(m.max_velocity, 0.0);
    }

    #[test]
    fn bar_rest_monitors() {
        let s = tiny_bar();
        let d = Discretization::new(&s).unwrap();
        let m = d.monitors(&s, &d.initial_state(&s));
        assert!((m.solid_area - 0.04).abs() < 1e-15);
        let rest = 1.333 / (2.0 * 9.242) * 0.04;
        assert!((m.energy - rest).abs() < 1e-15);
        assert_eq!(d.force_node.map(|n| d.solid.nodes[n]), Some(Point::new(0.4, 0.5)));
    }

    #[test]
    fn x_update_satisfies_constraint_row() {
        let s = tiny_annulus();
        let mut sim = Simulation::new(s.clone()).unwrap();
        let x_old = sim.state.x.clone();
        sim.advance_step(PrecondKind::Triangular).unwrap();
        let d = &sim.disc;
        let cf = d
            .constraints
            .drop_columns(&assemble_coupling(&x_old, &d.fluid, &d.vel, &d.solid, &d.solid_dofs, s.quad_degree).unwrap());
        let dx: Vec<f64> = sim.state.x.iter().zip(&x_old).map(|(a, b)| (a - b) / s.dt).collect();
        let lhs = d.c_s.mul_vec(&dx);
        let rhs = cf.mul_vec(&sim.state.u);
        let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        assert!(norm2(&diff) < 1e-6 * norm2(&lhs));
    }

    #[test]
    fn linear_law_through_newton_takes_one_iteration() {
        let s = tiny_annulus();
        let sim = Simulation::new(s.clone()).unwrap();
        let d = &sim.disc;
        let l = d.layout;
        let cf = d
            .constraints
            .drop_columns(&assemble_coupling(&sim.state.x, &d.fluid, &d.vel, &d.solid, &d.solid_dofs, 6).unwrap());
        let mut rhs = vec![0.0; l.n()];
        d.c_s.mul_vec_add(-1.0 / s.dt, &sim.state.x, &mut rhs[l.n1() + l.n_x..]);
        let problem = StepProblem {
            layout: l,
            a11: &d.a11,
            cf: &cf,
            c_s: &d.c_s,
            dt: s.dt,
            solid: &d.solid,
            solid_dofs: &d.solid_dofs,
            model: &s.model,
            rhs: &rhs,
        };
        let mut cache = None;
        let out = newton_solve(&problem, &sim.state.stacked(), &sim.f11, &mut cache, PrecondKind::Triangular, NewtonParams::default(), GmresParams::default()).unwrap();
        assert_eq!(out.nit, 1);
        // converged state is a fixed point of the same step problem
        let again = newton_solve(&problem, &out.z, &sim.f11, &mut cache, PrecondKind::Triangular, NewtonParams::default(), GmresParams::default());
        assert!(matches!(again, Ok(ref o) if o.nit <= 1));
    }

    #[test]
    fn nonlinear_bar_steps_converge() {
        let s = tiny_bar();
        let r = run(&s, PrecondKind::Triangular).unwrap();
        for st in &r.steps {
            assert!((1..=3).contains(&st.nit), "{st:?}");
        }
    }

    #[test]
    fn a11_factor_is_reused_and_a22_tracks_newton() {
        let s = tiny_bar();
        let mut sim = Simulation::new(s).unwrap();
        let f11 = sim.a11_fingerprint();
        sim.advance_step(PrecondKind::Triangular).unwrap();
        let f22a = sim.a22_fingerprint().unwrap();
        sim.advance_step(PrecondKind::Triangular).unwrap();
        let f22b = sim.a22_fingerprint().unwrap();
        assert_eq!(sim.a11_fingerprint(), f11);
        assert_ne!(f22a, f22b);
    }

    #[test]
    fn preconditioners_agree() {
        let mut s = tiny_annulus();
        s.gmres.tol = 1e-12;
        let a = run(&s, PrecondKind::Triangular).unwrap().final_state;
        let b = run(&s, PrecondKind::Diagonal).unwrap().final_state;
        let rel = |x: &[f64], y: &[f64]| {
            let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            norm2(&d) / norm2(x)
        };
        assert!(rel(&a.u, &b.u) < 1e-6);
        assert!(rel(&a.x, &b.x) < 1e-6);
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut s = tiny_annulus();
        s.dt = 0.0;
        assert!(matches!(Discretization::new(&s), Err(SimError::InvalidScenario(_))));
        let mut s = tiny_annulus();
        s.model = SolidModel::Linear { kappa: -1.0 };
        assert!(Discretization::new(&s).is_err());
    }
}
