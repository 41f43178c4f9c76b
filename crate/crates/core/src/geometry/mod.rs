//! Computational-geometry kernels used by the coupling assembly.
//!
//! Everything here is a pure function of value types: polygon clipping
//! against convex windows, shoelace areas, centroid fan triangulation,
//! triangle and tensor Gauss rules, and bilinear quadrilateral maps on the
//! reference square `[-1, 1]^2`.

mod bilinear;
mod point;
mod polygon;
mod quadrature;

pub use bilinear::{inverse_bilinear, BilinearMap, Jacobian2};
pub use point::{BoundingBox, Point};
pub use polygon::{clip_polygon, polygon_area, triangulate_fan, Polygon, Triangle};
pub use quadrature::{gauss_legendre, tensor_gauss, triangle_quadrature, QuadratureRule};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("clip polygon is degenerate (area {area:e})")]
    DegenerateClip { area: f64 },
    #[error("polygon is not star-shaped about its vertex centroid (fan triangle area {area:e})")]
    NotStarShaped { area: f64 },
    #[error("no triangle quadrature rule of degree {0} (supported: 1..=10)")]
    UnsupportedDegree(usize),
    #[error("bilinear inversion did not converge in {iterations} iterations (residual {residual:e})")]
    InversionFailed { iterations: usize, residual: f64 },
}
