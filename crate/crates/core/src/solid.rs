//! Constitutive laws for the immersed solid and the elastic residual.

use nalgebra::Matrix2;
use thiserror::Error;

use crate::fem::physical_gradients;
use crate::geometry::{tensor_gauss, BilinearMap, Point};
use crate::mesh::{DofMap, Mesh};
use crate::sparse::{SparseMatrix, TripletBuilder};

/// Deformation gradient `F = grad_s X`.
pub type DeformationGradient = Matrix2<f64>;

/// `T[a][b][c][d] = dP_ab / dF_cd`.
pub type Tangent = [[[[f64; 2]; 2]; 2]; 2];

const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolidError {
    #[error("strain energy exponent {exponent:.3e} exceeds the overflow guard (diverged state)")]
    ExponentOverflow { exponent: f64 },
    #[error("solid element {element} is inverted (det F = {det:.3e} at a quadrature point)")]
    InvertedElement { element: usize, det: f64 },
    #[error("invalid material parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolidModel {
    /// `P = kappa F`
    Linear { kappa: f64 },
    /// `W = gamma / (2 eta) exp(eta (tr F^T F - 2))`
    Exponential { gamma: f64, eta: f64 },
}

impl SolidModel {
    pub fn linear(kappa: f64) -> Result<Self, SolidError> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(SolidError::InvalidParameter(format!("kappa = {kappa} must be positive")));
        }
        Ok(Self::Linear { kappa })
    }

    pub fn exponential(gamma: f64, eta: f64) -> Result<Self, SolidError> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(SolidError::InvalidParameter(format!("gamma = {gamma} must be positive")));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(SolidError::InvalidParameter(format!("eta = {eta} must be positive")));
        }
        Ok(Self::Exponential { gamma, eta })
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Self::Linear { .. })
    }

    /// `gamma exp(eta (tr F^T F - 2))` for the exponential law.
    fn scale(gamma: f64, eta: f64, f: &DeformationGradient) -> Result<f64, SolidError> {
        let exponent = eta * (f.norm_squared() - 2.0);
        if !(exponent <= MAX_EXPONENT) {
            return Err(SolidError::ExponentOverflow { exponent });
        }
        Ok(gamma * exponent.exp())
    }

    pub fn energy(&self, f: &DeformationGradient) -> Result<f64, SolidError> {
        match *self {
            Self::Linear { kappa } => Ok(0.5 * kappa * f.norm_squared()),
            Self::Exponential { gamma, eta } => Ok(Self::scale(gamma, eta, f)? / (2.0 * eta)),
        }
    }

    pub fn piola_stress(&self, f: &DeformationGradient) -> Result<DeformationGradient, SolidError> {
        match *self {
            Self::Linear { kappa } => Ok(f * kappa),
            Self::Exponential { gamma, eta } => Ok(f * Self::scale(gamma, eta, f)?),
        }
    }

    pub fn piola_tangent(&self, f: &DeformationGradient) -> Result<Tangent, SolidError> {
        let mut t = [[[[0.0; 2]; 2]; 2]; 2];
        let (s, two_eta) = match *self {
            Self::Linear { kappa } => (kappa, 0.0),
            Self::Exponential { gamma, eta } => (Self::scale(gamma, eta, f)?, 2.0 * eta),
        };
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    for d in 0..2 {
                        let id = if a == c && b == d { 1.0 } else { 0.0 };
                        t[a][b][c][d] = s * (id + two_eta * f[(a, b)] * f[(c, d)]);
                    }
                }
            }
        }
        Ok(t)
    }
}

/// Contract a tangent with a direction: `(T : G)_ab = T_abcd G_cd`.
pub fn contract(t: &Tangent, g: &DeformationGradient) -> DeformationGradient {
    DeformationGradient::from_fn(|a, b| {
        let mut s = 0.0;
        for c in 0..2 {
            for d in 0..2 {
                s += t[a][b][c][d] * g[(c, d)];
            }
        }
        s
    })
}

/// Per-quadrature-point data of one solid element.
struct PointData {
    weight: f64,
    grads: [[f64; 2]; 4],
    f: DeformationGradient,
}

fn element_points(mesh: &Mesh, dofs: &DofMap, x: &[f64], e: usize) -> Result<Vec<PointData>, SolidError> {
    let map = mesh.element_map(e);
    let rule = tensor_gauss(3);
    let nodes = &dofs.element_nodes[e];
    let mut out = Vec::with_capacity(rule.len());
    for (s, w) in rule.iter() {
        let (jac, det) = map.jacobian(s);
        let grads = physical_gradients(&BilinearMap::shape_gradients(s), &jac);
        let mut f = DeformationGradient::zeros();
        for (k, &node) in nodes.iter().enumerate() {
            for a in 0..2 {
                let xa = x[dofs.dof(node, a)];
                f[(a, 0)] += xa * grads[k][0];
                f[(a, 1)] += xa * grads[k][1];
            }
        }
        let jf = f.determinant();
        if !(jf > 0.0) {
            return Err(SolidError::InvertedElement { element: e, det: jf });
        }
        out.push(PointData {
            weight: w * det.abs(),
            grads,
            f,
        });
    }
    Ok(out)
}

/// Elastic residual `(P(F_h), grad chi_i)_B` and its exact Jacobian.
pub fn assemble_solid_residual_tangent(
    mesh: &Mesh,
    dofs: &DofMap,
    model: &SolidModel,
    x: &[f64],
) -> Result<(Vec<f64>, SparseMatrix), SolidError> {
    let n = dofs.n_dofs();
    let mut r = vec![0.0; n];
    let mut kt = TripletBuilder::with_capacity(n, n, mesh.n_elements() * 64);
    for e in 0..mesh.n_elements() {
        let pts = element_points(mesh, dofs, x, e)?;
        let nodes = &dofs.element_nodes[e];
        let mut re = [[0.0; 2]; 4];
        let mut ke = [[[[0.0; 2]; 4]; 2]; 4];
        for p in &pts {
            let stress = model.piola_stress(&p.f)?;
            let t = model.piola_tangent(&p.f)?;
            for k in 0..4 {
                for a in 0..2 {
                    re[k][a] += p.weight * (stress[(a, 0)] * p.grads[k][0] + stress[(a, 1)] * p.grads[k][1]);
                    for l in 0..4 {
                        for c in 0..2 {
                            let mut s = 0.0;
                            for b in 0..2 {
                                for d in 0..2 {
                                    s += t[a][b][c][d] * p.grads[k][b] * p.grads[l][d];
                                }
                            }
                            ke[k][a][l][c] += p.weight * s;
                        }
                    }
                }
            }
        }
        for k in 0..4 {
            for a in 0..2 {
                let i = dofs.dof(nodes[k], a);
                r[i] += re[k][a];
                for l in 0..4 {
                    for c in 0..2 {
                        kt.push(i, dofs.dof(nodes[l], c), ke[k][a][l][c]);
                    }
                }
            }
        }
    }
    Ok((r, kt.build()))
}

/// Stored elastic energy `int_B W(F_h) ds`.
pub fn solid_energy(mesh: &Mesh, dofs: &DofMap, model: &SolidModel, x: &[f64]) -> Result<f64, SolidError> {
    let mut total = 0.0;
    for e in 0..mesh.n_elements() {
        for p in element_points(mesh, dofs, x, e)? {
            total += p.weight * model.energy(&p.f)?;
        }
    }
    Ok(total)
}

/// Coefficients of a map given pointwise at the solid nodes.
pub fn interpolate_map(dofs: &DofMap, map: impl Fn(Point) -> Point) -> Vec<f64> {
    let mut x = vec![0.0; dofs.n_dofs()];
    for (node, &p) in dofs.node_coords.iter().enumerate() {
        let q = map(p);
        x[dofs.dof(node, 0)] = q.x;
        x[dofs.dof(node, 1)] = q.y;
    }
    x
}

/// Current positions of the solid nodes from coefficients.
pub fn node_positions(dofs: &DofMap, x: &[f64]) -> Vec<Point> {
    (0..dofs.n_nodes)
        .map(|n| Point::new(x[dofs.dof(n, 0)], x[dofs.dof(n, 1)]))
        .collect()
}
