//! Quadrilateral meshes for the fluid box and the solid reference domain,
//! degree-of-freedom maps, and bounding-box cell location on Cartesian grids.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;

use thiserror::Error;

use crate::geometry::{BilinearMap, BoundingBox, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid mesh dimensions: {0}")]
    InvalidDimensions(String),
    #[error("element {element} has non-positive Jacobian {det:e}")]
    InvertedElement { element: usize, det: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    Left,
    Right,
    Bottom,
    Top,
    /// Boundary of a non-rectangular solid reference domain.
    Solid,
}

/// Uniform grid metadata for O(1) point and box location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianGrid {
    pub domain: BoundingBox,
    pub nx: usize,
    pub ny: usize,
}

impl CartesianGrid {
    pub fn hx(&self) -> f64 {
        self.domain.width() / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.domain.height() / self.ny as f64
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_ij(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    pub fn cell_bbox(&self, cell: usize) -> BoundingBox {
        let (i, j) = self.cell_ij(cell);
        let (hx, hy) = (self.hx(), self.hy());
        let o = self.domain.min;
        BoundingBox::new(
            Point::new(o.x + i as f64 * hx, o.y + j as f64 * hy),
            Point::new(o.x + (i + 1) as f64 * hx, o.y + (j + 1) as f64 * hy),
        )
    }

    /// Cells whose closed extent meets the closed box `bbox` (touching
    /// counts), found by index arithmetic.
    pub fn locate_cells(&self, bbox: &BoundingBox) -> Vec<usize> {
        if !self.domain.intersects(bbox) {
            return Vec::new();
        }
        const EPS: f64 = 1e-10;
        let o = self.domain.min;
        let range = |a: f64, b: f64, origin: f64, h: f64, n: usize| {
            let lo = ((a - origin) / h - 1.0 - EPS).ceil().max(0.0) as usize;
            let hi = ((b - origin) / h + EPS).floor().min((n - 1) as f64);
            if hi < 0.0 {
                return None;
            }
            let hi = hi as usize;
            (lo <= hi).then_some((lo, hi))
        };
        let Some((i0, i1)) = range(bbox.min.x, bbox.max.x, o.x, self.hx(), self.nx) else {
            return Vec::new();
        };
        let Some((j0, j1)) = range(bbox.min.y, bbox.max.y, o.y, self.hy(), self.ny) else {
            return Vec::new();
        };
        let mut cells = Vec::with_capacity((i1 - i0 + 1) * (j1 - j0 + 1));
        for j in j0..=j1 {
            for i in i0..=i1 {
                cells.push(self.cell_index(i, j));
            }
        }
        cells
    }
}

/// Conforming quadrilateral mesh with counter-clockwise 4-node elements.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    pub elements: Vec<[usize; 4]>,
    /// `(node, tag)` pairs sorted by node; corner nodes appear once per edge.
    pub boundary: Vec<(usize, BoundaryTag)>,
    pub grid: Option<CartesianGrid>,
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn element_map(&self, e: usize) -> BilinearMap {
        let [a, b, c, d] = self.elements[e];
        BilinearMap::new([self.nodes[a], self.nodes[b], self.nodes[c], self.nodes[d]])
    }

    /// Element map with corners taken from a displaced configuration
    /// (`positions` indexed by node).
    pub fn element_map_with(&self, e: usize, positions: &[Point]) -> BilinearMap {
        let [a, b, c, d] = self.elements[e];
        BilinearMap::new([positions[a], positions[b], positions[c], positions[d]])
    }

    pub fn element_area(&self, e: usize) -> f64 {
        let m = self.element_map(e);
        crate::geometry::polygon_area(&crate::geometry::Polygon::new(m.corners.to_vec()))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.element_area(e)).sum()
    }

    pub fn boundary_nodes(&self, tag: BoundaryTag) -> Vec<usize> {
        self.boundary
            .iter()
            .filter(|(_, t)| *t == tag)
            .map(|(n, _)| *n)
            .collect()
    }

    pub fn nearest_node(&self, p: Point) -> usize {
        self.nodes
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.distance(p).total_cmp(&b.1.distance(p)))
            .map(|(i, _)| i)
            .expect("mesh has nodes")
    }

    /// Nearest node among those carrying `tag`.
    pub fn nearest_boundary_node(&self, tag: BoundaryTag, p: Point) -> Option<usize> {
        self.boundary_nodes(tag)
            .into_iter()
            .min_by(|&a, &b| self.nodes[a].distance(p).total_cmp(&self.nodes[b].distance(p)))
    }

    pub fn check_orientation(&self) -> Result<(), MeshError> {
        for e in 0..self.n_elements() {
            let det = self.element_map(e).min_corner_det();
            if det <= 0.0 {
                return Err(MeshError::InvertedElement { element: e, det });
            }
        }
        Ok(())
    }
}

/// Structured grid of `nx * ny` rectangles on `domain`, with Cartesian
/// lookup metadata and left/right/bottom/top boundary tags.
pub fn build_cartesian_mesh(nx: usize, ny: usize, domain: BoundingBox) -> Result<Mesh, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::InvalidDimensions(format!("nx={nx}, ny={ny}")));
    }
    if !(domain.width() > 0.0 && domain.height() > 0.0) {
        return Err(MeshError::InvalidDimensions(format!(
            "box {}x{}",
            domain.width(),
            domain.height()
        )));
    }
    let grid = CartesianGrid { domain, nx, ny };
    let (hx, hy) = (grid.hx(), grid.hy());
    let node = |i: usize, j: usize| j * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            // pin the far edges exactly to the box
            let x = if i == nx { domain.max.x } else { domain.min.x + i as f64 * hx };
            let y = if j == ny { domain.max.y } else { domain.min.y + j as f64 * hy };
            nodes.push(Point::new(x, y));
        }
    }
    let mut elements = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            elements.push([node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)]);
        }
    }
    let mut boundary = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let n = node(i, j);
            if i == 0 {
                boundary.push((n, BoundaryTag::Left));
            }
            if i == nx {
                boundary.push((n, BoundaryTag::Right));
            }
            if j == 0 {
                boundary.push((n, BoundaryTag::Bottom));
            }
            if j == ny {
                boundary.push((n, BoundaryTag::Top));
            }
        }
    }
    boundary.sort();
    Ok(Mesh {
        nodes,
        elements,
        boundary,
        grid: Some(grid),
    })
}

/// Rectangular solid reference domain; same construction as the fluid grid.
pub fn build_rect_mesh(domain: BoundingBox, nx: usize, ny: usize) -> Result<Mesh, MeshError> {
    build_cartesian_mesh(nx, ny, domain)
}

pub const ANNULUS_INNER: f64 = 0.3;
pub const ANNULUS_OUTER: f64 = 0.5;

/// Polar product grid on the quarter annulus `s1, s2 >= 0`,
/// `0.3 <= |s| <= 0.5`, with `nr` radial and `ntheta` angular cells.
pub fn build_annulus_quarter_mesh(nr: usize, ntheta: usize) -> Result<Mesh, MeshError> {
    if nr == 0 || ntheta == 0 {
        return Err(MeshError::InvalidDimensions(format!("nr={nr}, ntheta={ntheta}")));
    }
    let node = |i: usize, j: usize| j * (nr + 1) + i;
    let mut nodes = Vec::with_capacity((nr + 1) * (ntheta + 1));
    for j in 0..=ntheta {
        let theta = FRAC_PI_2 * j as f64 / ntheta as f64;
        let (sin, cos) = if j == ntheta { (1.0, 0.0) } else { theta.sin_cos() };
        for i in 0..=nr {
            let r = ANNULUS_INNER + (ANNULUS_OUTER - ANNULUS_INNER) * i as f64 / nr as f64;
            nodes.push(Point::new(r * cos, r * sin));
        }
    }
    let mut elements = Vec::with_capacity(nr * ntheta);
    for j in 0..ntheta {
        for i in 0..nr {
            elements.push([node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)]);
        }
    }
    let mut boundary = Vec::new();
    for j in 0..=ntheta {
        for i in 0..=nr {
            if i == 0 || i == nr || j == 0 || j == ntheta {
                boundary.push((node(i, j), BoundaryTag::Solid));
            }
        }
    }
    boundary.sort();
    let mesh = Mesh {
        nodes,
        elements,
        boundary,
        grid: None,
    };
    mesh.check_orientation()?;
    Ok(mesh)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    /// Continuous biquadratic vector field.
    VelocityQ2,
    /// Element-wise linear scalar, discontinuous across elements.
    PressureP1dc,
    /// Continuous bilinear vector field.
    SolidQ1,
}

/// Element-to-global numbering for one finite element space.
///
/// Vector spaces are numbered component-major: global dof
/// `component * n_nodes + node`.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub kind: SpaceKind,
    /// Scalar nodes per element, in local order.
    pub element_nodes: Vec<Vec<usize>>,
    pub n_nodes: usize,
    pub components: usize,
    /// Physical coordinates of the scalar nodes (empty for P1dc).
    pub node_coords: Vec<Point>,
}

impl DofMap {
    pub fn n_dofs(&self) -> usize {
        self.n_nodes * self.components
    }

    pub fn dof(&self, node: usize, component: usize) -> usize {
        component * self.n_nodes + node
    }

    /// Global dofs of element `e`: all nodes of component 0, then component 1.
    pub fn element_dofs(&self, e: usize) -> Vec<usize> {
        let nodes = &self.element_nodes[e];
        (0..self.components)
            .flat_map(|c| nodes.iter().map(move |&n| c * self.n_nodes + n))
            .collect()
    }
}

/// Local Q2 node `(ii, jj)` with `ii, jj in {0,1,2}` sits at reference
/// coordinates `(ii - 1, jj - 1)`; local index is `3 * jj + ii`.
pub const Q2_LOCAL: [[usize; 2]; 9] = [
    [0, 0],
    [1, 0],
    [2, 0],
    [0, 1],
    [1, 1],
    [2, 1],
    [0, 2],
    [1, 2],
    [2, 2],
];

pub fn build_dof_maps(mesh: &Mesh, kind: SpaceKind) -> DofMap {
    match kind {
        SpaceKind::SolidQ1 => DofMap {
            kind,
            element_nodes: mesh.elements.iter().map(|e| e.to_vec()).collect(),
            n_nodes: mesh.n_nodes(),
            components: 2,
            node_coords: mesh.nodes.clone(),
        },
        SpaceKind::PressureP1dc => DofMap {
            kind,
            element_nodes: (0..mesh.n_elements())
                .map(|e| vec![3 * e, 3 * e + 1, 3 * e + 2])
                .collect(),
            n_nodes: 3 * mesh.n_elements(),
            components: 1,
            node_coords: Vec::new(),
        },
        SpaceKind::VelocityQ2 => build_q2(mesh),
    }
}

fn build_q2(mesh: &Mesh) -> DofMap {
    let nv = mesh.n_nodes();
    let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edge_list: Vec<(usize, usize, usize, usize)> = Vec::new(); // (a, b, element, local edge)
    for (e, el) in mesh.elements.iter().enumerate() {
        for k in 0..4 {
            let (a, b) = (el[k], el[(k + 1) % 4]);
            let key = (a.min(b), a.max(b));
            edge_ids.entry(key).or_insert_with(|| {
                edge_list.push((a, b, e, k));
                edge_list.len() - 1
            });
        }
    }
    let ne = edge_list.len();
    let n_nodes = nv + ne + mesh.n_elements();
    let mut coords = vec![Point::default(); n_nodes];
    coords[..nv].copy_from_slice(&mesh.nodes);

    let mut element_nodes = Vec::with_capacity(mesh.n_elements());
    for (e, el) in mesh.elements.iter().enumerate() {
        let edge = |k: usize| {
            let (a, b) = (el[k], el[(k + 1) % 4]);
            nv + edge_ids[&(a.min(b), a.max(b))]
        };
        let center = nv + ne + e;
        let local = [
            el[0],
            edge(0),
            el[1],
            edge(3),
            center,
            edge(1),
            el[3],
            edge(2),
            el[2],
        ];
        let map = mesh.element_map(e);
        for (l, &g) in local.iter().enumerate() {
            if g >= nv {
                let [ii, jj] = Q2_LOCAL[l];
                coords[g] = map.eval([ii as f64 - 1.0, jj as f64 - 1.0]);
            }
        }
        element_nodes.push(local.to_vec());
    }
    DofMap {
        kind: SpaceKind::VelocityQ2,
        element_nodes,
        n_nodes,
        components: 2,
        node_coords: coords,
    }
}
