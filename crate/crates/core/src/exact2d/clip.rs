//! Convex polygon clipping by half-planes (Sutherland-Hodgman, one plane at a time).

use crate::geometry::polygon_area;

pub type Polygon = Vec<[f64; 2]>;

/// The closed half-plane `{ x : normal . x <= offset }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub normal: [f64; 2],
    pub offset: f64,
}

impl HalfPlane {
    /// Points at least as close to `own` as to `other`.
    pub fn bisector(own: [f64; 2], other: [f64; 2]) -> Self {
        let normal = [other[0] - own[0], other[1] - own[1]];
        let mid = [0.5 * (own[0] + other[0]), 0.5 * (own[1] + other[1])];
        Self {
            normal,
            offset: normal[0] * mid[0] + normal[1] * mid[1],
        }
    }

    /// Inner side of the directed edge `p -> q` of a counterclockwise polygon,
    /// shifted inward by `inset`.
    pub fn edge(p: [f64; 2], q: [f64; 2], inset: f64) -> Self {
        let e = [q[0] - p[0], q[1] - p[1]];
        let len = e[0].hypot(e[1]);
        let normal = [e[1] / len, -e[0] / len];
        Self {
            normal,
            offset: normal[0] * p[0] + normal[1] * p[1] - inset,
        }
    }

    #[inline]
    pub fn excess(&self, x: [f64; 2]) -> f64 {
        self.normal[0] * x[0] + self.normal[1] * x[1] - self.offset
    }
}

/// Clips a convex polygon to a half-plane.
pub fn clip_halfplane(poly: &[[f64; 2]], plane: &HalfPlane) -> Polygon {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    if n == 0 {
        return out;
    }
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let sp = plane.excess(p);
        let sq = plane.excess(q);
        if sp <= 0.0 {
            out.push(p);
        }
        if (sp < 0.0 && sq > 0.0) || (sp > 0.0 && sq < 0.0) {
            let t = sp / (sp - sq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    if out.len() < 3 {
        out.clear();
    }
    out
}

/// Intersection of a convex polygon with a convex counterclockwise clipper.
pub fn clip_convex(subject: &[[f64; 2]], clipper: &[[f64; 2]]) -> Polygon {
    let n = clipper.len();
    let mut poly = subject.to_vec();
    for i in 0..n {
        if poly.is_empty() {
            break;
        }
        let plane = HalfPlane::edge(clipper[i], clipper[(i + 1) % n], 0.0);
        // The running polygon lies in the hull of `subject`, so such planes cannot cut it.
        if subject.iter().all(|&v| plane.excess(v) <= 0.0) {
            continue;
        }
        poly = clip_halfplane(&poly, &plane);
    }
    poly
}

/// Inner parallel body `{ x in P : dist(x, boundary) >= r }` of a convex polygon.
pub fn inner_parallel_polygon(vertices: &[[f64; 2]], r: f64) -> Polygon {
    let n = vertices.len();
    let mut poly = vertices.to_vec();
    for i in 0..n {
        if poly.is_empty() {
            break;
        }
        poly = clip_halfplane(&poly, &HalfPlane::edge(vertices[i], vertices[(i + 1) % n], r));
    }
    poly
}

/// Area of the intersection of two convex counterclockwise polygons. The one
/// with fewer vertices acts as the clipper, after vertices closer than a
/// relative 1e-12 to their predecessor are merged so every clipping edge has
/// a well-defined normal.
pub fn intersection_area(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let (subject, clipper) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let scale = clipper
        .iter()
        .flat_map(|v| v.iter())
        .fold(0.0f64, |m, c| m.max(c.abs()))
        .max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    let mut merged: Polygon = Vec::with_capacity(clipper.len());
    for &v in clipper {
        if merged.last().is_none_or(|p: &[f64; 2]| (v[0] - p[0]).hypot(v[1] - p[1]) > tol) {
            merged.push(v);
        }
    }
    while merged.len() > 1 {
        let (f, l) = (merged[0], merged[merged.len() - 1]);
        if (f[0] - l[0]).hypot(f[1] - l[1]) > tol {
            break;
        }
        merged.pop();
    }
    if merged.len() < 3 {
        return 0.0;
    }
    area(&clip_convex(subject, &merged))
}

/// Area of a (possibly empty) clipped polygon.
pub fn area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        0.0
    } else {
        polygon_area(poly)
    }
}
