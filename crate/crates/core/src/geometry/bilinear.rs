use nalgebra::Matrix2;

use super::{BoundingBox, GeometryError, Point};

pub type Jacobian2 = Matrix2<f64>;

/// Reference-square corner signs in counter-clockwise order.
pub(crate) const CORNER_SIGNS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

const MAX_NEWTON: usize = 50;

/// Bilinear map from the reference square `[-1, 1]^2` onto a quadrilateral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearMap {
    pub corners: [Point; 4],
}

impl BilinearMap {
    pub fn new(corners: [Point; 4]) -> Self {
        Self { corners }
    }

    /// Q1 shape functions at `s`.
    pub fn shape(s: [f64; 2]) -> [f64; 4] {
        let mut n = [0.0; 4];
        for (a, sign) in CORNER_SIGNS.iter().enumerate() {
            n[a] = 0.25 * (1.0 + sign[0] * s[0]) * (1.0 + sign[1] * s[1]);
        }
        n
    }

    /// Reference gradients `[dN/dxi, dN/deta]` of the Q1 shape functions.
    pub fn shape_gradients(s: [f64; 2]) -> [[f64; 2]; 4] {
        let mut g = [[0.0; 2]; 4];
        for (a, sign) in CORNER_SIGNS.iter().enumerate() {
            g[a][0] = 0.25 * sign[0] * (1.0 + sign[1] * s[1]);
            g[a][1] = 0.25 * sign[1] * (1.0 + sign[0] * s[0]);
        }
        g
    }

    pub fn eval(&self, s: [f64; 2]) -> Point {
        let n = Self::shape(s);
        self.corners
            .iter()
            .zip(n)
            .fold(Point::default(), |acc, (&c, w)| acc + c * w)
    }

    /// Jacobian `d x / d s` (columns are the two reference directions) and
    /// its determinant.
    pub fn jacobian(&self, s: [f64; 2]) -> (Jacobian2, f64) {
        let g = Self::shape_gradients(s);
        let mut j = Jacobian2::zeros();
        for (c, ga) in self.corners.iter().zip(g) {
            j[(0, 0)] += c.x * ga[0];
            j[(0, 1)] += c.x * ga[1];
            j[(1, 0)] += c.y * ga[0];
            j[(1, 1)] += c.y * ga[1];
        }
        let det = j.determinant();
        (j, det)
    }

    /// Smallest Jacobian determinant over the four corners.
    pub fn min_corner_det(&self) -> f64 {
        CORNER_SIGNS
            .iter()
            .map(|&s| self.jacobian(s).1)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::from_points(&self.corners).expect("four corners")
    }

    pub fn diameter(&self) -> f64 {
        self.corners[0]
            .distance(self.corners[2])
            .max(self.corners[1].distance(self.corners[3]))
    }
}

/// Reference coordinates of the physical point `x` under `map`.
///
/// Newton iteration started at the reference center; converged when the
/// physical residual falls below `1e-14` of the element diameter, and
/// rejected if it is still above `1e-12` of it after 50 iterations.
pub fn inverse_bilinear(map: &BilinearMap, x: Point) -> Result<[f64; 2], GeometryError> {
    let diam = map.diameter();
    let mut s = [0.0, 0.0];
    let mut res = f64::INFINITY;
    for _ in 0..MAX_NEWTON {
        let r = map.eval(s) - x;
        res = r.norm();
        if res <= 1e-14 * diam {
            return Ok(s);
        }
        let (j, det) = map.jacobian(s);
        if det == 0.0 || !det.is_finite() {
            break;
        }
        // 2x2 inverse applied to r
        let ds0 = (j[(1, 1)] * r.x - j[(0, 1)] * r.y) / det;
        let ds1 = (-j[(1, 0)] * r.x + j[(0, 0)] * r.y) / det;
        s = [s[0] - ds0, s[1] - ds1];
    }
    let r = (map.eval(s) - x).norm();
    if r <= 1e-12 * diam {
        Ok(s)
    } else {
        Err(GeometryError::InversionFailed {
            iterations: MAX_NEWTON,
            residual: res.min(r),
        })
    }
}
