use super::{BoundingBox, GeometryError, Point};

/// Relative tolerance applied to the diameter of the configuration when
/// deciding half-plane membership and merging vertices.
const REL_TOL: f64 = 1e-12;

/// Simple polygon with counter-clockwise vertices. An empty vertex list is
/// the empty set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polygon {
    pub vertices: Vec<Point>,
}

/// Triangle given by its three corners.
pub type Triangle = [Point; 3];

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Self {
        Self { vertices }
    }

    pub fn empty() -> Self {
        Self { vertices: Vec::new() }
    }

    /// Axis-aligned rectangle, counter-clockwise from the lower-left corner.
    pub fn rectangle(bb: &BoundingBox) -> Self {
        Self::new(vec![
            bb.min,
            Point::new(bb.max.x, bb.min.y),
            bb.max,
            Point::new(bb.min.x, bb.max.y),
        ])
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    /// Shoelace signed area; positive for counter-clockwise order.
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let mut twice = 0.0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            twice += a.cross(b);
        }
        0.5 * twice
    }

    /// Arithmetic mean of the vertices.
    pub fn vertex_centroid(&self) -> Point {
        let n = self.vertices.len().max(1) as f64;
        let s = self
            .vertices
            .iter()
            .fold(Point::default(), |acc, &p| acc + p);
        s * (1.0 / n)
    }

    pub fn bbox(&self) -> Option<BoundingBox> {
        BoundingBox::from_points(&self.vertices)
    }

    /// Convexity test (counter-clockwise, collinear runs allowed within `tol`).
    pub fn is_convex(&self, tol: f64) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let c = self.vertices[(i + 2) % n];
            (b - a).cross(c - b) >= -tol
        })
    }
}

/// Shoelace area, clamped at zero for clockwise input.
pub fn polygon_area(p: &Polygon) -> f64 {
    p.signed_area().max(0.0)
}

fn scale_of(a: &Polygon, b: &Polygon) -> f64 {
    match (a.bbox(), b.bbox()) {
        (Some(x), Some(y)) => {
            let bb = BoundingBox::new(
                Point::new(x.min.x.min(y.min.x), x.min.y.min(y.min.y)),
                Point::new(x.max.x.max(y.max.x), x.max.y.max(y.max.y)),
            );
            bb.diameter()
        }
        _ => 0.0,
    }
}

/// Sutherland–Hodgman clipping of `subject` against the convex polygon `clip`.
///
/// Both inputs are taken as counter-clockwise; a clockwise clip is reversed.
/// Points within `1e-12 * diameter` of a clip edge count as inside, and the
/// output has duplicate and collinear vertices merged with the same
/// tolerance. Returns the empty polygon when the overlap has no area.
pub fn clip_polygon(subject: &Polygon, clip: &Polygon) -> Result<Polygon, GeometryError> {
    let scale = scale_of(subject, clip);
    let tol = REL_TOL * scale;
    let clip_area = clip.signed_area();
    if clip.vertices.len() < 3 || clip_area.abs() <= tol * scale {
        return Err(GeometryError::DegenerateClip { area: clip_area });
    }
    if subject.is_empty() {
        return Ok(Polygon::empty());
    }

    let mut clip_vertices = clip.vertices.clone();
    if clip_area < 0.0 {
        clip_vertices.reverse();
    }
    let mut output = subject.vertices.clone();
    if subject.signed_area() < 0.0 {
        output.reverse();
    }

    let m = clip_vertices.len();
    let mut input = Vec::with_capacity(output.len() + m);
    for k in 0..m {
        if output.is_empty() {
            break;
        }
        let a = clip_vertices[k];
        let b = clip_vertices[(k + 1) % m];
        let edge = b - a;
        let len = edge.norm();
        if len <= tol {
            continue;
        }
        let dist = |p: Point| edge.cross(p - a) / len;

        std::mem::swap(&mut input, &mut output);
        output.clear();
        let n = input.len();
        for i in 0..n {
            let cur = input[i];
            let next = input[(i + 1) % n];
            let dc = dist(cur);
            let dn = dist(next);
            let cur_in = dc >= -tol;
            let next_in = dn >= -tol;
            if cur_in {
                output.push(cur);
            }
            if cur_in != next_in {
                let t = (dc / (dc - dn)).clamp(0.0, 1.0);
                output.push(cur + (next - cur) * t);
            }
        }
    }

    let cleaned = merge_vertices(output, tol);
    let poly = Polygon::new(cleaned);
    if poly.is_empty() || poly.signed_area() <= 0.0 {
        Ok(Polygon::empty())
    } else {
        Ok(poly)
    }
}

/// Drop repeated vertices (cyclically) and collinear vertices lying on the
/// chord of their neighbours, one at a time until none remain.
fn merge_vertices(v: Vec<Point>, tol: f64) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(v.len());
    for p in v {
        if out.last().is_none_or(|q| q.distance(p) > tol) {
            out.push(p);
        }
    }
    loop {
        while out.len() > 1 && out[0].distance(out[out.len() - 1]) <= tol {
            out.pop();
        }
        let n = out.len();
        if n < 3 {
            return out;
        }
        let collinear = (0..n).find(|&i| {
            let (prev, cur, next) = (out[(i + n - 1) % n], out[i], out[(i + 1) % n]);
            let chord = next - prev;
            let clen = chord.norm();
            if clen <= tol || (chord.cross(cur - prev) / clen).abs() > tol {
                return false;
            }
            // keep a vertex that sticks out beyond the chord
            let t = (cur - prev).dot(chord) / (clen * clen);
            (0.0..=1.0).contains(&t)
        });
        match collinear {
            Some(i) => {
                out.remove(i);
                // the removal can make the new neighbours coincide
                let mut deduped: Vec<Point> = Vec::with_capacity(out.len());
                for p in out {
                    if deduped.last().is_none_or(|q| q.distance(p) > tol) {
                        deduped.push(p);
                    }
                }
                out = deduped;
            }
            None => return out,
        }
    }
}

/// Fan triangulation about the vertex centroid.
///
/// Fewer than three vertices yields no triangles. A fan triangle with
/// negative area means the polygon is not star-shaped about the pivot.
pub fn triangulate_fan(p: &Polygon) -> Result<Vec<Triangle>, GeometryError> {
    let n = p.vertices.len();
    if n < 3 {
        return Ok(Vec::new());
    }
    let c = p.vertex_centroid();
    let scale = p.bbox().map(|b| b.diameter()).unwrap_or(0.0);
    let tol = REL_TOL * scale * scale;
    let mut tris = Vec::with_capacity(n);
    for i in 0..n {
        let a = p.vertices[i];
        let b = p.vertices[(i + 1) % n];
        let area = 0.5 * (a - c).cross(b - c);
        if area < -tol {
            return Err(GeometryError::NotStarShaped { area });
        }
        tris.push([c, a, b]);
    }
    Ok(tris)
}
