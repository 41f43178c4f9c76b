//! Time-independent fluid and solid blocks, velocity boundary conditions and
//! the pressure nullspace.
//!
//! Velocity is Q2 (component-major), pressure is discontinuous P1 with the
//! physical basis `{1, x - x_c, y - y_c}` per element, and the solid fields
//! are Q1. All element integrals use 3x3 Gauss points.

use nalgebra::Matrix2;

use crate::geometry::{tensor_gauss, BilinearMap, BoundingBox, Point};
use crate::mesh::{DofMap, Mesh, Q2_LOCAL};
use crate::sparse::{SparseMatrix, TripletBuilder};

/// Quadratic Lagrange basis on `{-1, 0, 1}` and derivatives.
fn lagrange2(t: f64) -> ([f64; 3], [f64; 3]) {
    (
        [0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)],
        [t - 0.5, -2.0 * t, t + 0.5],
    )
}

/// Q2 values and reference gradients at `s`, local order of [`Q2_LOCAL`].
pub fn q2_shape(s: [f64; 2]) -> ([f64; 9], [[f64; 2]; 9]) {
    let (lx, dx) = lagrange2(s[0]);
    let (ly, dy) = lagrange2(s[1]);
    let mut n = [0.0; 9];
    let mut g = [[0.0; 2]; 9];
    for (k, [i, j]) in Q2_LOCAL.iter().copied().enumerate() {
        n[k] = lx[i] * ly[j];
        g[k] = [dx[i] * ly[j], lx[i] * dy[j]];
    }
    (n, g)
}

/// Map reference gradients to physical ones with the inverse Jacobian.
pub fn physical_gradients<const N: usize>(ref_grads: &[[f64; 2]; N], jac: &Matrix2<f64>) -> [[f64; 2]; N] {
    let inv = jac.try_inverse().expect("non-degenerate element");
    let mut out = [[0.0; 2]; N];
    for (o, g) in out.iter_mut().zip(ref_grads) {
        // grad_x N = J^{-T} grad_s N
        o[0] = inv[(0, 0)] * g[0] + inv[(1, 0)] * g[1];
        o[1] = inv[(0, 1)] * g[0] + inv[(1, 1)] * g[1];
    }
    out
}

/// Element center used by the P1dc basis.
pub fn element_center(map: &BilinearMap) -> Point {
    map.eval([0.0, 0.0])
}

/// P1dc basis `{1, x - x_c, y - y_c}` at the physical point `x`.
pub fn p1dc_basis(center: Point, x: Point) -> [f64; 3] {
    [1.0, x.x - center.x, x.y - center.y]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidParams {
    pub viscosity: f64,
    pub density: f64,
    pub dt: f64,
}

/// Assembled fluid blocks before boundary conditions.
#[derive(Debug, Clone)]
pub struct FluidBlocks {
    /// `(phi_j, phi_i)`
    pub mass: SparseMatrix,
    /// `nu (eps(phi_j), eps(phi_i))`
    pub stiffness: SparseMatrix,
    /// `(div phi_i, psi_k)`, pressure rows by velocity columns.
    pub div: SparseMatrix,
    /// `rho / dt * mass + stiffness`
    pub a_f: SparseMatrix,
}

pub fn assemble_fluid_blocks(mesh: &Mesh, vel: &DofMap, pres: &DofMap, p: FluidParams) -> FluidBlocks {
    let nu_dofs = vel.n_dofs();
    let np_dofs = pres.n_dofs();
    let ne = mesh.n_elements();
    let rule = tensor_gauss(3);
    let nn = vel.n_nodes;

    let mut mass = TripletBuilder::with_capacity(nu_dofs, nu_dofs, ne * 2 * 81);
    let mut stiff = TripletBuilder::with_capacity(nu_dofs, nu_dofs, ne * 324);
    let mut div = TripletBuilder::with_capacity(np_dofs, nu_dofs, ne * 54);

    for e in 0..ne {
        let map = mesh.element_map(e);
        let center = element_center(&map);
        let nodes = &vel.element_nodes[e];
        let pdofs = &pres.element_nodes[e];
        let mut me = [[0.0; 9]; 9];
        // ke[c][d][a][b]: component c of test a against component d of trial b
        let mut ke = [[[[0.0; 9]; 9]; 2]; 2];
        let mut be = [[[0.0; 9]; 2]; 3];
        for (s, w) in rule.iter() {
            let (jac, det) = map.jacobian(s);
            let wd = w * det.abs();
            let (n, rg) = q2_shape(s);
            let g = physical_gradients(&rg, &jac);
            let x = map.eval(s);
            let psi = p1dc_basis(center, x);
            for a in 0..9 {
                for b in 0..9 {
                    me[a][b] += wd * n[a] * n[b];
                    let gg = g[a][0] * g[b][0] + g[a][1] * g[b][1];
                    for c in 0..2 {
                        for d in 0..2 {
                            let delta = if c == d { gg } else { 0.0 };
                            // 1/2 [delta_cd grad a . grad b + d_d N_a d_c N_b]
                            ke[c][d][a][b] += wd * 0.5 * (delta + g[a][d] * g[b][c]);
                        }
                    }
                }
                for (k, psik) in psi.iter().enumerate() {
                    for c in 0..2 {
                        be[k][c][a] += wd * psik * g[a][c];
                    }
                }
            }
        }
        for a in 0..9 {
            for b in 0..9 {
                for c in 0..2 {
                    mass.push(c * nn + nodes[a], c * nn + nodes[b], me[a][b]);
                    for d in 0..2 {
                        stiff.push(
                            c * nn + nodes[a],
                            d * nn + nodes[b],
                            p.viscosity * ke[c][d][a][b],
                        );
                    }
                }
            }
            for k in 0..3 {
                for c in 0..2 {
                    div.push(pdofs[k], c * nn + nodes[a], be[k][c][a]);
                }
            }
        }
    }
    let mass = mass.build();
    let stiffness = stiff.build();
    let a_f = mass.add_scaled(p.density / p.dt, &stiffness, 1.0);
    FluidBlocks {
        mass,
        stiffness,
        div: div.build(),
        a_f,
    }
}

/// Scalar Q1 mass and Laplacian element matrices at 3x3 Gauss points.
fn q1_element_matrices(map: &BilinearMap) -> ([[f64; 4]; 4], [[f64; 4]; 4]) {
    let rule = tensor_gauss(3);
    let mut m = [[0.0; 4]; 4];
    let mut k = [[0.0; 4]; 4];
    for (s, w) in rule.iter() {
        let (jac, det) = map.jacobian(s);
        let wd = w * det.abs();
        let n = BilinearMap::shape(s);
        let g = physical_gradients(&BilinearMap::shape_gradients(s), &jac);
        for a in 0..4 {
            for b in 0..4 {
                m[a][b] += wd * n[a] * n[b];
                k[a][b] += wd * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
            }
        }
    }
    (m, k)
}

fn assemble_q1_vector(mesh: &Mesh, dofs: &DofMap, pick: impl Fn(&[[f64; 4]; 4], &[[f64; 4]; 4]) -> [[f64; 4]; 4]) -> SparseMatrix {
    let n = dofs.n_dofs();
    let nn = dofs.n_nodes;
    let mut b = TripletBuilder::with_capacity(n, n, mesh.n_elements() * 32);
    for e in 0..mesh.n_elements() {
        let (m, k) = q1_element_matrices(&mesh.element_map(e));
        let el = pick(&m, &k);
        let nodes = &dofs.element_nodes[e];
        for c in 0..2 {
            for a in 0..4 {
                for bb in 0..4 {
                    b.push(c * nn + nodes[a], c * nn + nodes[bb], el[a][bb]);
                }
            }
        }
    }
    b.build()
}

/// `C_s = (chi_l, chi_j)_B`, block diagonal per component.
pub fn assemble_solid_mass(mesh: &Mesh, dofs: &DofMap) -> SparseMatrix {
    assemble_q1_vector(mesh, dofs, |m, _| *m)
}

/// `A_s = kappa (grad chi_j, grad chi_i)_B` with the full gradient.
pub fn assemble_solid_stiffness_linear(mesh: &Mesh, dofs: &DofMap, kappa: f64) -> SparseMatrix {
    assemble_q1_vector(mesh, dofs, |_, k| {
        let mut out = *k;
        out.iter_mut().flatten().for_each(|v| *v *= kappa);
        out
    })
}

/// Solid load vector `(chi_l, 1)_B` per component.
pub fn solid_load_vector(mesh: &Mesh, dofs: &DofMap) -> Vec<f64> {
    let rule = tensor_gauss(3);
    let mut f = vec![0.0; dofs.n_dofs()];
    for e in 0..mesh.n_elements() {
        let map = mesh.element_map(e);
        for (s, w) in rule.iter() {
            let det = map.jacobian(s).1.abs();
            let n = BilinearMap::shape(s);
            for (a, &node) in dofs.element_nodes[e].iter().enumerate() {
                for c in 0..2 {
                    f[dofs.dof(node, c)] += w * det * n[a];
                }
            }
        }
    }
    f
}

/// P1dc pressure mass matrix, block diagonal per element.
pub fn assemble_pressure_mass(mesh: &Mesh, pres: &DofMap) -> SparseMatrix {
    let rule = tensor_gauss(3);
    let n = pres.n_dofs();
    let mut b = TripletBuilder::with_capacity(n, n, mesh.n_elements() * 9);
    for e in 0..mesh.n_elements() {
        let map = mesh.element_map(e);
        let c = element_center(&map);
        let mut me = [[0.0; 3]; 3];
        for (s, w) in rule.iter() {
            let wd = w * map.jacobian(s).1.abs();
            let psi = p1dc_basis(c, map.eval(s));
            for a in 0..3 {
                for k in 0..3 {
                    me[a][k] += wd * psi[a] * psi[k];
                }
            }
        }
        let d = &pres.element_nodes[e];
        for a in 0..3 {
            for k in 0..3 {
                b.push(d[a], d[k], me[a][k]);
            }
        }
    }
    b.build()
}

/// Boundary condition on one edge of the fluid box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityBc {
    /// Both components vanish.
    NoSlip,
    /// Only the normal component vanishes.
    Slip,
    Free,
}

impl std::str::FromStr for VelocityBc {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "no-slip" | "noslip" | "no_slip" => Ok(Self::NoSlip),
            "slip" => Ok(Self::Slip),
            "free" => Ok(Self::Free),
            other => Err(format!("unknown boundary condition `{other}` (expected no-slip, slip or free)")),
        }
    }
}

impl std::fmt::Display for VelocityBc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::NoSlip => "no-slip",
            Self::Slip => "slip",
            Self::Free => "free",
        })
    }
}

/// Conditions on the four edges of an axis-aligned fluid box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BcSpec {
    pub left: VelocityBc,
    pub right: VelocityBc,
    pub bottom: VelocityBc,
    pub top: VelocityBc,
}

impl BcSpec {
    pub fn no_slip() -> Self {
        Self {
            left: VelocityBc::NoSlip,
            right: VelocityBc::NoSlip,
            bottom: VelocityBc::NoSlip,
            top: VelocityBc::NoSlip,
        }
    }

    /// True when every edge constrains the normal velocity, so the
    /// pressure is only defined up to a constant.
    pub fn encloses(&self) -> bool {
        [self.left, self.right, self.bottom, self.top]
            .iter()
            .all(|&b| b != VelocityBc::Free)
    }

    /// Constrained velocity dofs; corners take the union of both edges.
    pub fn constraints(&self, vel: &DofMap, domain: &BoundingBox) -> Constraints {
        let tol = 1e-10 * domain.diameter();
        let mut fixed = vec![false; vel.n_dofs()];
        for (node, p) in vel.node_coords.iter().enumerate() {
            // (bc, normal component)
            let mut edges = Vec::with_capacity(2);
            if (p.x - domain.min.x).abs() <= tol {
                edges.push((self.left, 0));
            }
            if (p.x - domain.max.x).abs() <= tol {
                edges.push((self.right, 0));
            }
            if (p.y - domain.min.y).abs() <= tol {
                edges.push((self.bottom, 1));
            }
            if (p.y - domain.max.y).abs() <= tol {
                edges.push((self.top, 1));
            }
            for (bc, normal) in edges {
                match bc {
                    VelocityBc::NoSlip => {
                        fixed[vel.dof(node, 0)] = true;
                        fixed[vel.dof(node, 1)] = true;
                    }
                    VelocityBc::Slip => fixed[vel.dof(node, normal)] = true,
                    VelocityBc::Free => {}
                }
            }
        }
        Constraints::from_mask(fixed)
    }
}

/// Dirichlet-constrained velocity dofs with prescribed values.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraints {
    pub fixed: Vec<bool>,
    pub values: Vec<f64>,
}

impl Constraints {
    pub fn from_mask(fixed: Vec<bool>) -> Self {
        let values = vec![0.0; fixed.len()];
        Self { fixed, values }
    }

    pub fn none(n: usize) -> Self {
        Self::from_mask(vec![false; n])
    }

    pub fn dofs(&self) -> Vec<usize> {
        self.fixed
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.fixed[i]
    }

    /// Zero the constrained entries of a velocity vector (homogeneous data).
    pub fn zero(&self, v: &mut [f64]) {
        for (x, &f) in v.iter_mut().zip(&self.fixed) {
            if f {
                *x = 0.0;
            }
        }
    }

    /// Zero the constrained columns of a matrix acting on velocities.
    pub fn drop_columns(&self, m: &SparseMatrix) -> SparseMatrix {
        m.filtered(|_, j| !self.fixed[j])
    }
}

/// Fluid blocks after symmetric Dirichlet elimination.
#[derive(Debug, Clone)]
pub struct ConstrainedFluid {
    pub a_f: SparseMatrix,
    pub div: SparseMatrix,
    pub rhs_velocity: Vec<f64>,
    pub rhs_pressure: Vec<f64>,
    /// Pressure dof pinned to zero, if the nullspace was fixed.
    pub pinned_pressure: Option<usize>,
}

/// Symmetric row/column elimination: constrained rows of `A_f` become
/// identity rows with the prescribed value on the right-hand side, and the
/// eliminated columns of `A_f` and `B` are moved to the right-hand side.
pub fn apply_velocity_bcs(
    a_f: &SparseMatrix,
    div: &SparseMatrix,
    rhs_velocity: &[f64],
    constraints: &Constraints,
) -> ConstrainedFluid {
    let n = a_f.nrows();
    assert_eq!(constraints.fixed.len(), n);
    let g = &constraints.values;
    let mut rv = rhs_velocity.to_vec();
    let mut rp = vec![0.0; div.nrows()];
    if g.iter().any(|&v| v != 0.0) {
        let mut data = vec![0.0; n];
        for i in constraints.dofs() {
            data[i] = g[i];
        }
        a_f.mul_vec_add(-1.0, &data, &mut rv);
        // -B u = 0 row: moving -B g to the right gives +B g
        div.mul_vec_add(1.0, &data, &mut rp);
    }
    let mut b = TripletBuilder::with_capacity(n, n, a_f.nnz());
    for (i, j, v) in a_f.triplets() {
        if !constraints.fixed[i] && !constraints.fixed[j] {
            b.push(i, j, v);
        }
    }
    for i in constraints.dofs() {
        b.push(i, i, 1.0);
        rv[i] = g[i];
    }
    ConstrainedFluid {
        a_f: b.build(),
        div: constraints.drop_columns(div),
        rhs_velocity: rv,
        rhs_pressure: rp,
        pinned_pressure: None,
    }
}

/// Pin the constant-mode pressure dof of element 0 to zero: its row of `B`
/// is removed and the saddle block gets a unit diagonal there.
pub fn fix_pressure_nullspace(mut sys: ConstrainedFluid) -> ConstrainedFluid {
    let k = 0;
    sys.div = sys.div.filtered(|i, _| i != k);
    sys.rhs_pressure[k] = 0.0;
    sys.pinned_pressure = Some(k);
    sys
}

/// Integral of a P1dc field over the mesh.
pub fn pressure_integral(mesh: &Mesh, pres: &DofMap, p: &[f64]) -> f64 {
    let rule = tensor_gauss(2);
    let mut s = 0.0;
    for e in 0..mesh.n_elements() {
        let map = mesh.element_map(e);
        let c = element_center(&map);
        let d = &pres.element_nodes[e];
        for (pt, w) in rule.iter() {
            let det = map.jacobian(pt).1.abs();
            let psi = p1dc_basis(c, map.eval(pt));
            s += w * det * (p[d[0]] * psi[0] + p[d[1]] * psi[1] + p[d[2]] * psi[2]);
        }
    }
    s
}

/// Shift a P1dc pressure to zero mean over the mesh.
pub fn zero_mean_pressure(mesh: &Mesh, pres: &DofMap, p: &mut [f64]) {
    let mean = pressure_integral(mesh, pres, p) / mesh.total_area();
    for e in 0..mesh.n_elements() {
        p[pres.element_nodes[e][0]] -= mean;
    }
}

/// Element-mean pressure per cell.
pub fn pressure_cell_means(mesh: &Mesh, pres: &DofMap, p: &[f64]) -> Vec<f64> {
    let rule = tensor_gauss(2);
    (0..mesh.n_elements())
        .map(|e| {
            let map = mesh.element_map(e);
            let c = element_center(&map);
            let d = &pres.element_nodes[e];
            let (mut s, mut a) = (0.0, 0.0);
            for (pt, w) in rule.iter() {
                let det = map.jacobian(pt).1.abs();
                let psi = p1dc_basis(c, map.eval(pt));
                s += w * det * (p[d[0]] * psi[0] + p[d[1]] * psi[1] + p[d[2]] * psi[2]);
                a += w * det;
            }
            s / a
        })
        .collect()
}

/// Evaluate a Q2 vector field at reference point `s` of element `e`.
pub fn eval_velocity(vel: &DofMap, u: &[f64], e: usize, s: [f64; 2]) -> [f64; 2] {
    let (n, _) = q2_shape(s);
    let nodes = &vel.element_nodes[e];
    let mut out = [0.0; 2];
    for (a, &node) in nodes.iter().enumerate() {
        out[0] += n[a] * u[vel.dof(node, 0)];
        out[1] += n[a] * u[vel.dof(node, 1)];
    }
    out
}
