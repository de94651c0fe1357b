//! Convex bodies and axis-aligned windows.
//!
//! A [`ConvexBody`] is closed: boundary points count as inside. Balls and
//! boxes exist in any dimension `d >= 2`; ellipses and polygons are planar.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Volume of the unit ball in `R^d` (`kappa_0 = 1`, `kappa_1 = 2`, `kappa_2 = pi`).
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * PI / d as f64,
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Axis-aligned box `[lower, upper]` used as a sampling or integration domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Window {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidWindow("zero-dimensional window".into()));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidWindow(format!(
                    "axis {i}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Cube of half-width `half` centred at `center`.
    pub fn cube(center: &[f64], half: f64) -> Result<Self> {
        Self::new(
            center.iter().map(|c| c - half).collect(),
            center.iter().map(|c| c + half).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i)).product()
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    pub fn contains_window(&self, other: &Window) -> bool {
        self.dim() == other.dim() && self.contains(&other.lower) && self.contains(&other.upper)
    }

    /// Grows the box by `margin` on every side.
    pub fn inflate(&self, margin: f64) -> Result<Self> {
        Self::new(
            self.lower.iter().map(|v| v - margin).collect(),
            self.upper.iter().map(|v| v + margin).collect(),
        )
    }

    /// Smallest box containing both windows.
    pub fn union(&self, other: &Window) -> Result<Self> {
        Self::new(
            self.lower
                .iter()
                .zip(&other.lower)
                .map(|(a, b)| a.min(*b))
                .collect(),
            self.upper
                .iter()
                .zip(&other.upper)
                .map(|(a, b)| a.max(*b))
                .collect(),
        )
    }

    /// Intersection, or `None` when the boxes do not overlap in a set of positive volume.
    pub fn intersection(&self, other: &Window) -> Option<Self> {
        Self::new(
            self.lower
                .iter()
                .zip(&other.lower)
                .map(|(a, b)| a.max(*b))
                .collect(),
            self.upper
                .iter()
                .zip(&other.upper)
                .map(|(a, b)| a.min(*b))
                .collect(),
        )
        .ok()
    }

    /// Maps a point of the unit cube onto the window.
    pub fn from_unit(&self, u: &[f64], out: &mut [f64]) {
        for i in 0..self.dim() {
            out[i] = self.lower[i] + u[i] * self.side(i);
        }
    }
}

/// The approximated set `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ConvexBody {
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Box {
        center: Vec<f64>,
        half_widths: Vec<f64>,
    },
    Ellipse {
        center: [f64; 2],
        a: f64,
        b: f64,
    },
    Polygon {
        vertices: Vec<[f64; 2]>,
    },
}

/// Relative tolerance for rejecting collinear consecutive polygon vertices.
const COLLINEAR_TOL: f64 = 1e-12;
/// Absolute distance below which consecutive polygon vertices are merged.
const DEDUP_TOL: f64 = 1e-14;

impl ConvexBody {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let body = ConvexBody::Ball { center, radius };
        body.validate()?;
        Ok(body)
    }

    pub fn axis_box(center: Vec<f64>, half_widths: Vec<f64>) -> Result<Self> {
        let body = ConvexBody::Box {
            center,
            half_widths,
        };
        body.validate()?;
        Ok(body)
    }

    pub fn ellipse(center: [f64; 2], a: f64, b: f64) -> Result<Self> {
        let body = ConvexBody::Ellipse { center, a, b };
        body.validate()?;
        Ok(body)
    }

    /// Counterclockwise convex polygon. Consecutive duplicates are merged first.
    pub fn polygon(vertices: Vec<[f64; 2]>) -> Result<Self> {
        let mut dedup: Vec<[f64; 2]> = Vec::with_capacity(vertices.len());
        for v in vertices {
            if let Some(last) = dedup.last() {
                if (v[0] - last[0]).hypot(v[1] - last[1]) <= DEDUP_TOL {
                    continue;
                }
            }
            dedup.push(v);
        }
        while dedup.len() > 1 {
            let (first, last) = (dedup[0], dedup[dedup.len() - 1]);
            if (first[0] - last[0]).hypot(first[1] - last[1]) <= DEDUP_TOL {
                dedup.pop();
            } else {
                break;
            }
        }
        let body = ConvexBody::Polygon { vertices: dedup };
        body.validate()?;
        Ok(body)
    }

    /// Checks every structural invariant. Bodies built through serde must call this.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidBody(format!("{name} must be positive, got {v}")))
            }
        };
        let finite = |name: &str, xs: &[f64]| {
            if xs.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(Error::InvalidBody(format!("{name} must be finite")))
            }
        };
        match self {
            ConvexBody::Ball { center, radius } => {
                if center.len() < 2 {
                    return Err(Error::InvalidBody("dimension must be at least 2".into()));
                }
                finite("center", center)?;
                positive("radius", *radius)
            }
            ConvexBody::Box {
                center,
                half_widths,
            } => {
                if center.len() < 2 {
                    return Err(Error::InvalidBody("dimension must be at least 2".into()));
                }
                if center.len() != half_widths.len() {
                    return Err(Error::DimensionMismatch {
                        expected: center.len(),
                        got: half_widths.len(),
                    });
                }
                finite("center", center)?;
                half_widths
                    .iter()
                    .try_for_each(|h| positive("half_widths", *h))
            }
            ConvexBody::Ellipse { center, a, b } => {
                finite("center", center)?;
                positive("a", *a)?;
                positive("b", *b)
            }
            ConvexBody::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return Err(Error::InvalidBody(format!(
                        "polygon needs at least 3 distinct vertices, got {}",
                        vertices.len()
                    )));
                }
                if vertices.iter().any(|v| !(v[0].is_finite() && v[1].is_finite())) {
                    return Err(Error::InvalidBody("polygon vertices must be finite".into()));
                }
                let n = vertices.len();
                for i in 0..n {
                    let p = vertices[i];
                    let q = vertices[(i + 1) % n];
                    let r = vertices[(i + 2) % n];
                    let e1 = [q[0] - p[0], q[1] - p[1]];
                    let e2 = [r[0] - q[0], r[1] - q[1]];
                    let cross = e1[0] * e2[1] - e1[1] * e2[0];
                    let scale = e1[0].hypot(e1[1]) * e2[0].hypot(e2[1]);
                    if cross.abs() < COLLINEAR_TOL * scale {
                        return Err(Error::InvalidBody(format!(
                            "polygon vertices {i}..{} are collinear",
                            (i + 2) % n
                        )));
                    }
                    if cross < 0.0 {
                        return Err(Error::InvalidBody(
                            "polygon must be convex and counterclockwise".into(),
                        ));
                    }
                }
                // A star polygon can turn left at every vertex; total turning must be 2*pi.
                let turning: f64 = (0..n)
                    .map(|i| {
                        let p = vertices[i];
                        let q = vertices[(i + 1) % n];
                        let r = vertices[(i + 2) % n];
                        let e1 = [q[0] - p[0], q[1] - p[1]];
                        let e2 = [r[0] - q[0], r[1] - q[1]];
                        (e1[0] * e2[1] - e1[1] * e2[0]).atan2(e1[0] * e2[0] + e1[1] * e2[1])
                    })
                    .sum();
                if (turning - 2.0 * PI).abs() > 1e-6 {
                    return Err(Error::InvalidBody("polygon is not simple".into()));
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexBody::Ball { center, .. } | ConvexBody::Box { center, .. } => center.len(),
            ConvexBody::Ellipse { .. } | ConvexBody::Polygon { .. } => 2,
        }
    }

    pub fn shape_name(&self) -> &'static str {
        match self {
            ConvexBody::Ball { .. } => "ball",
            ConvexBody::Box { .. } => "box",
            ConvexBody::Ellipse { .. } => "ellipse",
            ConvexBody::Polygon { .. } => "polygon",
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            ConvexBody::Ball { center, radius } => {
                unit_ball_volume(center.len()) * radius.powi(center.len() as i32)
            }
            ConvexBody::Box { half_widths, .. } => half_widths.iter().map(|h| 2.0 * h).product(),
            ConvexBody::Ellipse { a, b, .. } => PI * a * b,
            ConvexBody::Polygon { vertices } => polygon_area(vertices),
        }
    }

    /// `[V_0, ..., V_d]`.
    pub fn intrinsic_volumes(&self) -> Vec<f64> {
        match self {
            ConvexBody::Ball { center, radius } => {
                let d = center.len();
                (0..=d)
                    .map(|i| {
                        binomial(d, i) * unit_ball_volume(d) / unit_ball_volume(d - i)
                            * radius.powi(i as i32)
                    })
                    .collect()
            }
            ConvexBody::Box { half_widths, .. } => {
                // Elementary symmetric polynomials of the side lengths.
                let mut e = vec![0.0; half_widths.len() + 1];
                e[0] = 1.0;
                for (k, h) in half_widths.iter().enumerate() {
                    let side = 2.0 * h;
                    for i in (1..=k + 1).rev() {
                        e[i] += e[i - 1] * side;
                    }
                }
                e
            }
            ConvexBody::Ellipse { a, b, .. } => {
                vec![1.0, 0.5 * ellipse_perimeter(*a, *b), PI * a * b]
            }
            ConvexBody::Polygon { vertices } => {
                let n = vertices.len();
                let perimeter: f64 = (0..n)
                    .map(|i| {
                        let p = vertices[i];
                        let q = vertices[(i + 1) % n];
                        (q[0] - p[0]).hypot(q[1] - p[1])
                    })
                    .sum();
                vec![1.0, 0.5 * perimeter, polygon_area(vertices)]
            }
        }
    }

    /// Closed-set membership.
    pub fn contains(&self, y: &[f64]) -> bool {
        match self {
            ConvexBody::Ball { center, radius } => {
                let d2: f64 = y.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                d2 <= radius * radius
            }
            ConvexBody::Box {
                center,
                half_widths,
            } => y
                .iter()
                .zip(center.iter().zip(half_widths))
                .all(|(v, (c, h))| (v - c).abs() <= *h),
            ConvexBody::Ellipse { center, a, b } => {
                let u = (y[0] - center[0]) / a;
                let v = (y[1] - center[1]) / b;
                u * u + v * v <= 1.0
            }
            ConvexBody::Polygon { vertices } => {
                let n = vertices.len();
                (0..n).all(|i| {
                    let p = vertices[i];
                    let q = vertices[(i + 1) % n];
                    (q[0] - p[0]) * (y[1] - p[1]) - (q[1] - p[1]) * (y[0] - p[0]) >= 0.0
                })
            }
        }
    }

    /// Euclidean distance from `y` to the boundary, for `y` on either side.
    pub fn boundary_distance(&self, y: &[f64]) -> f64 {
        match self {
            ConvexBody::Ball { center, radius } => {
                let d2: f64 = y.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                (d2.sqrt() - radius).abs()
            }
            ConvexBody::Box {
                center,
                half_widths,
            } => {
                let mut outside2 = 0.0;
                let mut inside_gap = f64::INFINITY;
                for ((v, c), h) in y.iter().zip(center).zip(half_widths) {
                    let excess = (v - c).abs() - h;
                    if excess > 0.0 {
                        outside2 += excess * excess;
                    }
                    inside_gap = inside_gap.min(-excess);
                }
                if outside2 > 0.0 {
                    outside2.sqrt()
                } else {
                    inside_gap.max(0.0)
                }
            }
            ConvexBody::Ellipse { center, a, b } => {
                ellipse_boundary_distance(*a, *b, y[0] - center[0], y[1] - center[1])
            }
            ConvexBody::Polygon { vertices } => {
                let n = vertices.len();
                (0..n)
                    .map(|i| segment_distance(vertices[i], vertices[(i + 1) % n], [y[0], y[1]]))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Radius of the largest inscribed ball.
    pub fn inradius(&self) -> f64 {
        match self {
            ConvexBody::Ball { radius, .. } => *radius,
            ConvexBody::Box { half_widths, .. } => {
                half_widths.iter().copied().fold(f64::INFINITY, f64::min)
            }
            ConvexBody::Ellipse { a, b, .. } => a.min(*b),
            ConvexBody::Polygon { vertices } => polygon_inradius(vertices),
        }
    }

    /// Axis-aligned bounding box.
    pub fn bounding_window(&self) -> Window {
        let (lower, upper) = match self {
            ConvexBody::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            ConvexBody::Box {
                center,
                half_widths,
            } => (
                center.iter().zip(half_widths).map(|(c, h)| c - h).collect(),
                center.iter().zip(half_widths).map(|(c, h)| c + h).collect(),
            ),
            ConvexBody::Ellipse { center, a, b } => (
                vec![center[0] - a, center[1] - b],
                vec![center[0] + a, center[1] + b],
            ),
            ConvexBody::Polygon { vertices } => {
                let mut lo = vec![f64::INFINITY; 2];
                let mut hi = vec![f64::NEG_INFINITY; 2];
                for v in vertices {
                    for i in 0..2 {
                        lo[i] = lo[i].min(v[i]);
                        hi[i] = hi[i].max(v[i]);
                    }
                }
                (lo, hi)
            }
        };
        Window::new(lower, upper).expect("valid body has a nondegenerate bounding box")
    }

    /// Bounding box of `K` inflated by `margin` on every side.
    pub fn dilated_window(&self, margin: f64) -> Result<Window> {
        if !(margin >= 0.0 && margin.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "margin must be finite and nonnegative, got {margin}"
            )));
        }
        self.bounding_window().inflate(margin)
    }

    /// The homothetic copy `r K = { r x : x in K }`.
    pub fn scaled(&self, r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {r}")));
        }
        let body = match self {
            ConvexBody::Ball { center, radius } => ConvexBody::Ball {
                center: center.iter().map(|c| c * r).collect(),
                radius: radius * r,
            },
            ConvexBody::Box {
                center,
                half_widths,
            } => ConvexBody::Box {
                center: center.iter().map(|c| c * r).collect(),
                half_widths: half_widths.iter().map(|h| h * r).collect(),
            },
            ConvexBody::Ellipse { center, a, b } => ConvexBody::Ellipse {
                center: [center[0] * r, center[1] * r],
                a: a * r,
                b: b * r,
            },
            ConvexBody::Polygon { vertices } => ConvexBody::Polygon {
                vertices: vertices.iter().map(|v| [v[0] * r, v[1] * r]).collect(),
            },
        };
        body.validate()?;
        Ok(body)
    }

    /// Volume of the parallel body `K + B(0, r)` by the Steiner formula.
    pub fn parallel_volume(&self, r: f64) -> f64 {
        let d = self.dim();
        self.intrinsic_volumes()
            .iter()
            .enumerate()
            .map(|(i, v)| unit_ball_volume(d - i) * v * r.powi((d - i) as i32))
            .sum()
    }
}

/// Shoelace area of a counterclockwise polygon (negative when clockwise).
pub fn polygon_area(vertices: &[[f64; 2]]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    // Relative to the first vertex: avoids cancellation for small polygons far from the origin.
    let o = vertices[0];
    0.5 * (1..n - 1)
        .map(|i| {
            let p = [vertices[i][0] - o[0], vertices[i][1] - o[1]];
            let q = [vertices[i + 1][0] - o[0], vertices[i + 1][1] - o[1]];
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
}

pub(crate) fn segment_distance(p: [f64; 2], q: [f64; 2], y: [f64; 2]) -> f64 {
    let e = [q[0] - p[0], q[1] - p[1]];
    let w = [y[0] - p[0], y[1] - p[1]];
    let len2 = e[0] * e[0] + e[1] * e[1];
    let t = ((w[0] * e[0] + w[1] * e[1]) / len2).clamp(0.0, 1.0);
    (w[0] - t * e[0]).hypot(w[1] - t * e[1])
}

/// Ellipse perimeter via the arithmetic-geometric mean.
pub fn ellipse_perimeter(a: f64, b: f64) -> f64 {
    let (mut an, mut bn) = (a.max(b), a.min(b));
    let mut c2 = an * an - bn * bn;
    let mut sum = 0.5 * c2;
    let mut pow = 0.5;
    for _ in 0..64 {
        if c2 <= 1e-17 * a.max(b) * a.max(b) {
            break;
        }
        let cn = 0.5 * (an - bn);
        let (na, nb) = (0.5 * (an + bn), (an * bn).sqrt());
        an = na;
        bn = nb;
        pow *= 2.0;
        c2 = cn * cn;
        sum += pow * c2;
    }
    2.0 * PI / an * (a.max(b).powi(2) - sum)
}

/// Distance from `(x, y)` (relative to the centre) to the boundary of the
/// axis-aligned ellipse with semi-axes `a`, `b`.
fn ellipse_boundary_distance(a: f64, b: f64, x: f64, y: f64) -> f64 {
    // Reduce to the first quadrant with e0 >= e1.
    let (e0, e1, y0, y1) = if a >= b {
        (a, b, x.abs(), y.abs())
    } else {
        (b, a, y.abs(), x.abs())
    };
    let (x0, x1) = closest_on_ellipse(e0, e1, y0, y1);
    (y0 - x0).hypot(y1 - x1)
}

/// Closest boundary point of `(x/e0)^2 + (y/e1)^2 = 1` to `(y0, y1)` with
/// `e0 >= e1 > 0`, `y0, y1 >= 0`. Solves the Lagrange condition in the
/// multiplier `t` by safeguarded Newton.
fn closest_on_ellipse(e0: f64, e1: f64, y0: f64, y1: f64) -> (f64, f64) {
    if y1 > 0.0 {
        if y0 > 0.0 {
            let f = |t: f64| {
                let r0 = e0 * y0 / (t + e0 * e0);
                let r1 = e1 * y1 / (t + e1 * e1);
                let val = r0 * r0 + r1 * r1 - 1.0;
                let der = -2.0 * (r0 * r0 / (t + e0 * e0) + r1 * r1 / (t + e1 * e1));
                (val, der)
            };
            // F is decreasing and convex on (-e1^2, inf); bracket the root.
            let mut lo = -e1 * e1 + e1 * y1;
            let mut hi = -e1 * e1 + (e0 * e0 * y0 * y0 + e1 * e1 * y1 * y1).sqrt();
            let mut t = lo;
            for _ in 0..60 {
                let (val, der) = f(t);
                if val.abs() <= 1e-12 {
                    break;
                }
                if val > 0.0 {
                    lo = t;
                } else {
                    hi = t;
                }
                let newton = t - val / der;
                t = if newton > lo && newton < hi {
                    newton
                } else {
                    0.5 * (lo + hi)
                };
                if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
                    break;
                }
            }
            let x0 = e0 * e0 * y0 / (t + e0 * e0);
            let x1 = e1 * e1 * y1 / (t + e1 * e1);
            (x0, x1)
        } else {
            (0.0, e1)
        }
    } else {
        let denom = e0 * e0 - e1 * e1;
        if e0 * y0 < denom {
            let xde0 = e0 * y0 / denom;
            let x0 = e0 * xde0;
            let x1 = e1 * (1.0 - xde0 * xde0).max(0.0).sqrt();
            (x0, x1)
        } else {
            (e0, 0.0)
        }
    }
}

/// Largest inscribed circle of a convex polygon, by bisection on the
/// emptiness of the inward offset polygon.
fn polygon_inradius(vertices: &[[f64; 2]]) -> f64 {
    let bbox = {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for v in vertices {
            for i in 0..2 {
                lo[i] = lo[i].min(v[i]);
                hi[i] = hi[i].max(v[i]);
            }
        }
        (hi[0] - lo[0]).min(hi[1] - lo[1])
    };
    let mut lo = 0.0;
    let mut hi = 0.5 * bbox;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let inner = crate::exact2d::clip::inner_parallel_polygon(vertices, mid);
        if !inner.is_empty() && polygon_area(&inner) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * bbox {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_disk() -> ConvexBody {
        ConvexBody::ball(vec![0.0, 0.0], 1.0).unwrap()
    }

    fn unit_square() -> ConvexBody {
        ConvexBody::axis_box(vec![0.0, 0.0], vec![0.5, 0.5]).unwrap()
    }

    fn triangle() -> ConvexBody {
        ConvexBody::polygon(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap()
    }

    #[test]
    fn kappa_values() {
        assert_eq!(unit_ball_volume(1), 2.0);
        assert_relative_eq!(unit_ball_volume(2), PI, epsilon = 1e-15);
        assert_relative_eq!(unit_ball_volume(3), 4.0 * PI / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn volumes() {
        assert_relative_eq!(unit_square().volume(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(unit_disk().volume(), PI, epsilon = 1e-15);
        assert_relative_eq!(triangle().volume(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn intrinsic_volume_examples() {
        let sq = unit_square().intrinsic_volumes();
        assert_eq!(sq.len(), 3);
        for (got, want) in sq.iter().zip([1.0, 2.0, 1.0]) {
            assert_relative_eq!(*got, want, epsilon = 1e-14);
        }
        let disk = unit_disk().intrinsic_volumes();
        for (got, want) in disk.iter().zip([1.0, PI, PI]) {
            assert_relative_eq!(*got, want, epsilon = 1e-14);
        }
        let ball3 = ConvexBody::ball(vec![0.0; 3], 1.0).unwrap().intrinsic_volumes();
        assert_relative_eq!(ball3[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(ball3[2], 2.0 * PI, epsilon = 1e-14);
        assert_relative_eq!(ball3[3], 4.0 * PI / 3.0, epsilon = 1e-14);
        // Mean width of the unit ball is 2, V_1 = d kappa_d / (2 kappa_{d-1}) * 2 = 4.
        assert_relative_eq!(ball3[1], 4.0, epsilon = 1e-14);
    }

    #[test]
    fn ball_top_intrinsic_volumes_any_dimension() {
        for d in 2..=6 {
            let r = 1.7;
            let v = ConvexBody::ball(vec![0.0; d], r).unwrap().intrinsic_volumes();
            let surface = d as f64 * unit_ball_volume(d) * r.powi(d as i32 - 1);
            assert_relative_eq!(v[d], unit_ball_volume(d) * r.powi(d as i32), max_relative = 1e-14);
            assert_relative_eq!(v[d - 1], 0.5 * surface, max_relative = 1e-14);
            assert_relative_eq!(v[0], 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn box_intrinsic_volumes_3d() {
        let b = ConvexBody::axis_box(vec![0.0; 3], vec![0.5, 1.0, 1.5]).unwrap();
        let v = b.intrinsic_volumes();
        // sides 1, 2, 3
        assert_eq!(v, vec![1.0, 6.0, 11.0, 6.0]);
    }

    #[test]
    fn ellipse_perimeter_matches_quadrature() {
        for &(a, b) in &[(1.0, 1.0), (2.0, 1.0), (1.0, 0.1), (3.0, 2.5), (0.3, 5.0)] {
            // Periodic trapezoid rule converges geometrically for smooth integrands.
            let n = 20_000;
            let h = 2.0 * PI / n as f64;
            let quad: f64 = (0..n)
                .map(|k| {
                    let t = k as f64 * h;
                    (a * a * t.sin().powi(2) + b * b * t.cos().powi(2)).sqrt()
                })
                .sum::<f64>()
                * h;
            assert_relative_eq!(ellipse_perimeter(a, b), quad, max_relative = 1e-12);
        }
    }

    #[test]
    fn membership_examples() {
        let disk = unit_disk();
        assert!(disk.contains(&[0.0, 0.0]));
        assert!(disk.contains(&[1.0, 0.0]));
        assert!(!disk.contains(&[1.0001, 0.0]));
        let tri = triangle();
        assert!(tri.contains(&[0.5, 0.5]));
        assert!(tri.contains(&[0.0, 0.0]));
        assert!(!tri.contains(&[0.6, 0.6]));
    }

    #[test]
    fn boundary_distance_examples() {
        let disk = unit_disk();
        assert_relative_eq!(disk.boundary_distance(&[0.0, 0.0]), 1.0);
        assert_relative_eq!(disk.boundary_distance(&[2.0, 0.0]), 1.0);
        assert_relative_eq!(unit_square().boundary_distance(&[0.0, 0.0]), 0.5);
        assert_relative_eq!(unit_square().boundary_distance(&[1.5, 1.5]), 2f64.sqrt());
        let e = ConvexBody::ellipse([0.0, 0.0], 2.0, 1.0).unwrap();
        assert_relative_eq!(e.boundary_distance(&[0.0, 0.0]), 1.0, epsilon = 1e-12);
        assert_relative_eq!(e.boundary_distance(&[3.0, 0.0]), 1.0, epsilon = 1e-12);
        assert_relative_eq!(e.boundary_distance(&[0.0, -3.0]), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn ellipse_distance_matches_dense_boundary_scan() {
        let e = ConvexBody::ellipse([0.3, -0.2], 1.5, 0.6).unwrap();
        let n = 200_000;
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                [0.3 + 1.5 * t.cos(), -0.2 + 0.6 * t.sin()]
            })
            .collect();
        for y in [[0.3, -0.2], [1.0, 0.1], [2.5, 1.0], [-0.9, -0.5], [0.31, 0.0], [1.2, -0.2]] {
            let brute = pts
                .iter()
                .map(|p| (p[0] - y[0]).hypot(p[1] - y[1]))
                .fold(f64::INFINITY, f64::min);
            let got = e.boundary_distance(&y);
            assert!(got <= brute + 1e-12, "{y:?}: {got} > {brute}");
            assert!(brute - got < 1e-9, "{y:?}: {got} vs {brute}");
        }
    }

    #[test]
    fn inradius_examples() {
        assert_relative_eq!(unit_disk().inradius(), 1.0);
        let b = ConvexBody::axis_box(vec![0.0, 0.0], vec![0.5, 0.25]).unwrap();
        assert_relative_eq!(b.inradius(), 0.25);
        assert_relative_eq!(triangle().inradius(), (2.0 - 2f64.sqrt()) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn triangle_inradius_matches_grid_oracle() {
        // max over a dense grid of the distance to the boundary, restricted to interior points
        let tri = triangle();
        let n = 600;
        let mut best: f64 = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                let y = [i as f64 / n as f64, j as f64 / n as f64];
                if tri.contains(&y) {
                    best = best.max(tri.boundary_distance(&y));
                }
            }
        }
        assert!((tri.inradius() - best).abs() < 2.0 / n as f64);
        assert!(tri.inradius() >= best - 1e-12);
    }

    #[test]
    fn dilated_window_examples() {
        let w = unit_disk().dilated_window(0.5).unwrap();
        assert_eq!(w.lower(), &[-1.5, -1.5]);
        assert_eq!(w.upper(), &[1.5, 1.5]);
        let w = unit_square().dilated_window(0.0).unwrap();
        assert_eq!(w.lower(), &[-0.5, -0.5]);
        assert_eq!(w.upper(), &[0.5, 0.5]);
        let w = triangle().dilated_window(1.0).unwrap();
        assert_eq!(w.lower(), &[-1.0, -1.0]);
        assert_eq!(w.upper(), &[2.0, 2.0]);
        assert!(unit_disk().dilated_window(-1.0).is_err());
    }

    #[test]
    fn invalid_bodies_rejected() {
        assert!(ConvexBody::ball(vec![0.0, 0.0], -1.0).is_err());
        assert!(ConvexBody::ball(vec![0.0], 1.0).is_err());
        assert!(ConvexBody::axis_box(vec![0.0, 0.0], vec![1.0, 0.0]).is_err());
        assert!(ConvexBody::polygon(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]).is_err());
        // clockwise
        assert!(ConvexBody::polygon(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).is_err());
        // collinear middle vertex
        assert!(ConvexBody::polygon(vec![[0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [0.0, 1.0]]).is_err());
        // duplicate vertices are merged
        let p = ConvexBody::polygon(vec![[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_relative_eq!(p.volume(), 0.5);
        assert!(Window::new(vec![0.0, 0.0], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn steiner_polynomial_for_ball() {
        let b = ConvexBody::ball(vec![0.0; 3], 1.0).unwrap();
        assert_relative_eq!(b.parallel_volume(0.5), unit_ball_volume(3) * 1.5f64.powi(3), max_relative = 1e-14);
    }
}
