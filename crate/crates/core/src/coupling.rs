//! Coupling matrix `C_f(X)` between the solid multiplier space and the fluid
//! velocity space on non-matching meshes.
//!
//! Each solid element is mapped to its straight-edged image quad, clipped
//! against the fluid cells its bounding box touches, and the fragments are
//! integrated in physical space with `ds = dx |det grad G_E| / |det grad Phi|`,
//! where `G_E` maps the reference square onto the solid element and `Phi`
//! onto its image.

use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::fem::q2_shape;
use crate::geometry::{
    clip_polygon, inverse_bilinear, polygon_area, triangle_quadrature, triangulate_fan, BilinearMap,
    GeometryError, Point, Polygon, QuadratureRule,
};
use crate::mesh::{CartesianGrid, DofMap, Mesh};
use crate::solid::node_positions;
use crate::sparse::{SparseMatrix, TripletBuilder};

/// Default total degree of the triangle rule inside fragments.
pub const DEFAULT_DEGREE: usize = 6;

/// Fragments smaller than this fraction of a cell are dropped.
const SLIVER_FRACTION: f64 = 1e-14;

/// Overshoot past the fluid boundary, as a fraction of the smaller cell
/// width, tolerated before a solid element counts as escaped. Nodes on a
/// slip wall drift off it by the projection error of the position update;
/// the part outside the domain simply carries no coupling.
pub const ESCAPE_FRACTION: f64 = 0.25;

/// Tolerance on pulled-back reference coordinates.
const REF_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error("solid element {element} left the fluid domain")]
    SolidEscaped { element: usize },
    #[error("image of solid element {element} is inverted or degenerate (corner Jacobian {det:.3e})")]
    InvertedImage { element: usize, det: f64 },
    #[error("quadrature point of solid element {element} pulled back outside the reference cell: {s:?}")]
    PullbackOutside { element: usize, s: [f64; 2] },
    #[error("fluid mesh carries no Cartesian grid metadata")]
    NoGrid,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Piece of a mapped solid element inside one fluid cell, with its
/// quadrature data.
#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionFragment {
    pub solid_element: usize,
    pub fluid_cell: usize,
    pub polygon: Polygon,
    /// Physical quadrature points.
    pub points: Vec<Point>,
    /// Solid reference coordinates of the points.
    pub solid_ref: Vec<[f64; 2]>,
    /// Fluid-cell reference coordinates of the points.
    pub fluid_ref: Vec<[f64; 2]>,
    /// Weights for integration over `B` (include `1 / |det grad X_h|`).
    pub weights: Vec<f64>,
}

impl IntersectionFragment {
    pub fn area(&self) -> f64 {
        polygon_area(&self.polygon)
    }
}

fn image_polygon(image: &BilinearMap) -> Polygon {
    Polygon::new(image.corners.to_vec())
}

/// Reference coordinates of `x` in the axis-aligned fluid cell.
fn cell_reference(grid: &CartesianGrid, cell: usize, x: Point) -> [f64; 2] {
    let bb = grid.cell_bbox(cell);
    [
        2.0 * (x.x - bb.min.x) / bb.width() - 1.0,
        2.0 * (x.y - bb.min.y) / bb.height() - 1.0,
    ]
}

/// Clip the image of solid element `element` against the fluid grid.
///
/// `reference` maps the reference square onto the undeformed solid element
/// and `image` onto its current position.
pub fn intersect_element(
    element: usize,
    reference: &BilinearMap,
    image: &BilinearMap,
    grid: &CartesianGrid,
    rule: &QuadratureRule,
) -> Result<Vec<IntersectionFragment>, CouplingError> {
    let det = image.min_corner_det();
    if !(det > 0.0) {
        return Err(CouplingError::InvertedImage { element, det });
    }
    let bbox = image.bbox();
    let tol = ESCAPE_FRACTION * grid.hx().min(grid.hy());
    if !(grid.domain.contains(bbox.min, tol) && grid.domain.contains(bbox.max, tol)) {
        return Err(CouplingError::SolidEscaped { element });
    }
    let quad = image_polygon(image);
    let cell_area = grid.hx() * grid.hy();
    let mut out = Vec::new();
    for cell in grid.locate_cells(&bbox) {
        let window = Polygon::rectangle(&grid.cell_bbox(cell));
        let piece = clip_polygon(&quad, &window)?;
        if polygon_area(&piece) < SLIVER_FRACTION * cell_area {
            continue;
        }
        let tris = triangulate_fan(&piece)?;
        let mut frag = IntersectionFragment {
            solid_element: element,
            fluid_cell: cell,
            polygon: piece,
            points: Vec::with_capacity(tris.len() * rule.len()),
            solid_ref: Vec::with_capacity(tris.len() * rule.len()),
            fluid_ref: Vec::with_capacity(tris.len() * rule.len()),
            weights: Vec::with_capacity(tris.len() * rule.len()),
        };
        for [a, b, c] in tris {
            let jac2 = (b - a).cross(c - a);
            if jac2 <= 0.0 {
                continue;
            }
            for (p, w) in rule.iter() {
                let x = a + (b - a) * p[0] + (c - a) * p[1];
                let xi = inverse_bilinear(image, x)?;
                if xi.iter().any(|v| v.abs() > 1.0 + REF_TOL) {
                    return Err(CouplingError::PullbackOutside { element, s: xi });
                }
                let det_phi = image.jacobian(xi).1.abs();
                let det_g = reference.jacobian(xi).1.abs();
                frag.points.push(x);
                frag.solid_ref.push(xi);
                frag.fluid_ref.push(cell_reference(grid, cell, x));
                frag.weights.push(w * jac2 * det_g / det_phi);
            }
        }
        out.push(frag);
    }
    Ok(out)
}

/// Fragments of every solid element in the configuration `x`, ordered by
/// (solid element, fluid cell).
pub fn intersect_all(
    x: &[f64],
    fluid: &Mesh,
    solid: &Mesh,
    solid_dofs: &DofMap,
    degree: usize,
) -> Result<Vec<Vec<IntersectionFragment>>, CouplingError> {
    let grid = fluid.grid.as_ref().ok_or(CouplingError::NoGrid)?;
    let rule = triangle_quadrature(degree)?;
    let positions = node_positions(solid_dofs, x);
    (0..solid.n_elements())
        .into_par_iter()
        .map(|e| {
            let reference = solid.element_map(e);
            let image = solid.element_map_with(e, &positions);
            intersect_element(e, &reference, &image, grid, &rule)
        })
        .collect()
}

/// `(C_f)_{l j} = int_B chi_l phi_j(X_h(s)) ds`, rows indexed by solid
/// multiplier dofs and columns by fluid velocity dofs, no cross-component
/// coupling.
pub fn assemble_coupling(
    x: &[f64],
    fluid: &Mesh,
    vel: &DofMap,
    solid: &Mesh,
    solid_dofs: &DofMap,
    degree: usize,
) -> Result<SparseMatrix, CouplingError> {
    let frags = intersect_all(x, fluid, solid, solid_dofs, degree)?;
    Ok(coupling_from_fragments(&frags, vel, solid_dofs))
}

pub fn coupling_from_fragments(
    frags: &[Vec<IntersectionFragment>],
    vel: &DofMap,
    solid_dofs: &DofMap,
) -> SparseMatrix {
    let n_frag: usize = frags.iter().map(Vec::len).sum();
    let (ns, nf) = (solid_dofs.n_nodes, vel.n_nodes);
    let mut b = TripletBuilder::with_capacity(solid_dofs.n_dofs(), vel.n_dofs(), n_frag * 72);
    for frag in frags.iter().flatten() {
        let mut local = [[0.0; 9]; 4];
        for ((sr, fr), w) in frag.solid_ref.iter().zip(&frag.fluid_ref).zip(&frag.weights) {
            let chi = BilinearMap::shape(*sr);
            let (phi, _) = q2_shape(*fr);
            for (l, c) in chi.iter().enumerate() {
                for (j, p) in phi.iter().enumerate() {
                    local[l][j] += w * c * p;
                }
            }
        }
        let rows = &solid_dofs.element_nodes[frag.solid_element];
        let cols = &vel.element_nodes[frag.fluid_cell];
        for comp in 0..2 {
            for (l, &r) in rows.iter().enumerate() {
                for (j, &c) in cols.iter().enumerate() {
                    b.push(comp * ns + r, comp * nf + c, local[l][j]);
                }
            }
        }
    }
    b.build()
}

/// Debug dump: one row per fragment with its element ids and vertices.
pub fn write_fragments_csv<W: Write>(out: &mut W, frags: &[Vec<IntersectionFragment>]) -> std::io::Result<()> {
    writeln!(out, "solid_element,fluid_cell,area,vertices")?;
    for f in frags.iter().flatten() {
        let verts: Vec<String> = f.polygon.vertices.iter().map(|p| format!("{} {}", p.x, p.y)).collect();
        writeln!(out, "{},{},{:e},{}", f.solid_element, f.fluid_cell, f.area(), verts.join(";"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_solid_mass, solid_load_vector};
    use crate::geometry::{tensor_gauss, BoundingBox};
    use crate::mesh::{build_cartesian_mesh, build_dof_maps, SpaceKind};
    use crate::solid::interpolate_map;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(Point::new(x0, y0), Point::new(x1, y1))
    }

    struct Setup {
        fluid: Mesh,
        vel: DofMap,
        solid: Mesh,
        sd: DofMap,
    }

    fn setup(nf: usize, sbox: BoundingBox, ns: [usize; 2]) -> Setup {
        let fluid = build_cartesian_mesh(nf, nf, bx(0.0, 0.0, 1.0, 1.0)).unwrap();
        let vel = build_dof_maps(&fluid, SpaceKind::VelocityQ2);
        let solid = build_cartesian_mesh(ns[0], ns[1], sbox).unwrap();
        let sd = build_dof_maps(&solid, SpaceKind::SolidQ1);
        Setup { fluid, vel, solid, sd }
    }

    fn frags_for(s: &Setup, x: &[f64], degree: usize) -> Vec<Vec<IntersectionFragment>> {
        intersect_all(x, &s.fluid, &s.solid, &s.sd, degree).unwrap()
    }

    #[test]
    fn coinciding_element_gives_one_fragment() {
        let s = setup(4, bx(0.25, 0.5, 0.5, 0.75), [1, 1]);
        let x = interpolate_map(&s.sd, |p| p);
        let f = frags_for(&s, &x, 6);
        assert_eq!(f[0].len(), 1);
        let frag = &f[0][0];
        assert_eq!(frag.fluid_cell, s.fluid.grid.unwrap().cell_index(1, 2));
        assert!((frag.area() - 0.0625).abs() < 1e-15);
        // weights integrate |B| since the map is the identity
        let w: f64 = frag.weights.iter().sum();
        assert!((w - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn element_on_cell_corner_splits_in_four() {
        // half-cell element centered on the grid vertex (0.5, 0.5)
        let s = setup(4, bx(0.4375, 0.4375, 0.5625, 0.5625), [1, 1]);
        let x = interpolate_map(&s.sd, |p| p);
        let f = frags_for(&s, &x, 6);
        assert_eq!(f[0].len(), 4);
        for frag in &f[0] {
            assert!((frag.area() - 0.125f64.powi(2) / 4.0).abs() < 1e-16);
        }
    }

    #[test]
    fn random_affine_maps_partition_the_image() {
        let s = setup(8, bx(0.0, 0.0, 1.0, 1.0), [3, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let (a, b, c, d) = (
                rng.random_range(0.2..0.5),
                rng.random_range(-0.15..0.15),
                rng.random_range(-0.15..0.15),
                rng.random_range(0.2..0.5),
            );
            let det = a * d - b * c;
            let t = Point::new(rng.random_range(0.2..0.3), rng.random_range(0.2..0.3));
            let x = interpolate_map(&s.sd, |p| Point::new(t.x + a * p.x + b * p.y, t.y + c * p.x + d * p.y));
            let f = frags_for(&s, &x, 6);
            let pos = node_positions(&s.sd, &x);
            for (e, frags) in f.iter().enumerate() {
                let sum: f64 = frags.iter().map(IntersectionFragment::area).sum();
                let shoelace = polygon_area(&Polygon::new(s.solid.element_map_with(e, &pos).corners.to_vec()));
                let exact = det.abs() * s.solid.element_area(e);
                assert!((sum - shoelace).abs() < 1e-10 * shoelace);
                assert!((sum - exact).abs() < 1e-10 * exact);
                for fr in frags {
                    assert!(fr.weights.iter().all(|&w| w > 0.0));
                }
            }
        }
    }

    #[test]
    fn escaped_element_is_an_error() {
        let s = setup(4, bx(0.0, 0.0, 1.0, 1.0), [2, 2]);
        let x = interpolate_map(&s.sd, |p| Point::new(p.x + 0.5, p.y));
        assert!(matches!(
            intersect_all(&x, &s.fluid, &s.solid, &s.sd, 6),
            Err(CouplingError::SolidEscaped { .. })
        ));
    }

    #[test]
    fn identity_map_matches_direct_mixed_mass() {
        let s = setup(1, bx(0.0, 0.0, 1.0, 1.0), [1, 1]);
        let x = interpolate_map(&s.sd, |p| p);
        let cf = assemble_coupling(&x, &s.fluid, &s.vel, &s.solid, &s.sd, 6).unwrap();
        let rule = tensor_gauss(4);
        let map = s.solid.element_map(0);
        for l in 0..4 {
            for j in 0..9 {
                let mut exact = 0.0;
                for (p, w) in rule.iter() {
                    exact += w * map.jacobian(p).1 * BilinearMap::shape(p)[l] * q2_shape(p).0[j];
                }
                let (r, c) = (s.sd.element_nodes[0][l], s.vel.element_nodes[0][j]);
                for comp in 0..2 {
                    let got = cf.get(s.sd.dof(r, comp), s.vel.dof(c, comp));
                    assert!((got - exact).abs() < 1e-12, "({l},{j}) {got} vs {exact}");
                    assert_eq!(cf.get(s.sd.dof(r, comp), s.vel.dof(c, 1 - comp)), 0.0);
                }
            }
        }
    }

    #[test]
    fn row_sums_match_solid_load_vector() {
        let s = setup(8, bx(0.3, 0.35, 0.7, 0.6), [5, 3]);
        let th: f64 = 0.4;
        let x = interpolate_map(&s.sd, |p| {
            let q = p - Point::new(0.5, 0.5);
            Point::new(0.5 + th.cos() * q.x - th.sin() * q.y + 0.2 * q.y, 0.5 + th.sin() * q.x + th.cos() * q.y)
        });
        let cf = assemble_coupling(&x, &s.fluid, &s.vel, &s.solid, &s.sd, 6).unwrap();
        let load = solid_load_vector(&s.solid, &s.sd);
        for (i, l) in load.iter().enumerate() {
            let sum: f64 = cf.row(i).map(|(_, v)| v).sum();
            assert!((sum - l).abs() < 1e-10 * l.abs().max(1e-3), "row {i}: {sum} vs {l}");
        }
    }

    #[test]
    fn linear_fields_are_reproduced() {
        let s = setup(6, bx(0.2, 0.3, 0.7, 0.55), [4, 3]);
        let x = interpolate_map(&s.sd, |p| p);
        let cf = assemble_coupling(&x, &s.fluid, &s.vel, &s.solid, &s.sd, 6).unwrap();
        let field = |p: Point| Point::new(1.0 + 2.0 * p.x - p.y, -0.5 + 0.3 * p.x + 4.0 * p.y);
        let mut u = vec![0.0; s.vel.n_dofs()];
        for (n, p) in s.vel.node_coords.iter().enumerate() {
            let v = field(*p);
            u[s.vel.dof(n, 0)] = v.x;
            u[s.vel.dof(n, 1)] = v.y;
        }
        let xi = interpolate_map(&s.sd, field);
        let lhs = cf.mul_vec(&u);
        let rhs = assemble_solid_mass(&s.solid, &s.sd).mul_vec(&xi);
        for (a, b) in lhs.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn affine_maps_reach_the_quadrature_plateau() {
        let s = setup(8, bx(0.3, 0.3, 0.7, 0.6), [4, 3]);
        let x = interpolate_map(&s.sd, |p| Point::new(0.1 + 0.9 * p.x + 0.2 * p.y, 0.05 * p.x + 1.1 * p.y - 0.05));
        let c6 = assemble_coupling(&x, &s.fluid, &s.vel, &s.solid, &s.sd, 6).unwrap();
        let c8 = assemble_coupling(&x, &s.fluid, &s.vel, &s.solid, &s.sd, 8).unwrap();
        let d = c6.add_scaled(1.0, &c8, -1.0);
        let err = d.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-13, "{err:e}");
    }

    /// Column sums against 64x64 subdivision of each solid element with a
    /// 3x3 Gauss rule per subcell. The affine map sends fluid grid lines to
    /// subdivision lines, so the oracle is exact per subcell.
    #[test]
    fn column_sums_match_subdivision_oracle() {
        let s = setup(8, bx(0.25, 0.25, 0.75, 0.75), [2, 2]);
        let x = interpolate_map(&s.sd, |p| Point::new(p.x + 0.125, 0.5 + 0.5 * (p.y - 0.5)));
        let cf = assemble_coupling(&x, &s.fluid, &s.vel, &s.solid, &s.sd, 6).unwrap();
        let oracle = subdivision_column_sums(&s, &x, 64);
        let ones_l = {
            let mut o = vec![0.0; s.sd.n_dofs()];
            o[..s.sd.n_nodes].iter_mut().for_each(|v| *v = 1.0);
            o
        };
        let colsum = cf.transpose().mul_vec(&ones_l);
        for j in 0..s.vel.n_nodes {
            assert!((colsum[j] - oracle[j]).abs() < 1e-8, "col {j}: {} vs {}", colsum[j], oracle[j]);
        }
    }

    fn subdivision_column_sums(s: &Setup, x: &[f64], n: usize) -> Vec<f64> {
        let grid = s.fluid.grid.unwrap();
        let pos = node_positions(&s.sd, x);
        let rule = tensor_gauss(3);
        let mut out = vec![0.0; s.vel.n_nodes];
        let h = 2.0 / n as f64;
        for e in 0..s.solid.n_elements() {
            let g = s.solid.element_map(e);
            let img = s.solid.element_map_with(e, &pos);
            for a in 0..n {
                for b in 0..n {
                    for (p, w) in rule.iter() {
                        let xi = [-1.0 + h * (a as f64 + 0.5 * (p[0] + 1.0)), -1.0 + h * (b as f64 + 0.5 * (p[1] + 1.0))];
                        let wt = w * h * h / 4.0 * g.jacobian(xi).1.abs();
                        let y = img.eval(xi);
                        let i = (((y.x - grid.domain.min.x) / grid.hx()).floor() as usize).min(grid.nx - 1);
                        let j = (((y.y - grid.domain.min.y) / grid.hy()).floor() as usize).min(grid.ny - 1);
                        let cell = grid.cell_index(i, j);
                        let (phi, _) = q2_shape(cell_reference(&grid, cell, y));
                        for (k, &node) in s.vel.element_nodes[cell].iter().enumerate() {
                            out[node] += wt * phi[k];
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn fragment_dump_lists_every_fragment() {
        let s = setup(4, bx(0.4375, 0.4375, 0.5625, 0.5625), [1, 1]);
        let x = interpolate_map(&s.sd, |p| p);
        let f = frags_for(&s, &x, 6);
        let mut buf = Vec::new();
        write_fragments_csv(&mut buf, &f).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("solid_element,fluid_cell,area,vertices"));
    }
}
