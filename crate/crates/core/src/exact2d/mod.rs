//! Exact planar Poisson-Voronoi approximation.
//!
//! Cells are built by clipping the window with the bisectors of each site's
//! Delaunay neighbours. The triangulation itself comes from `spade`, whose
//! orientation and in-circle predicates are adaptive-precision.

pub mod clip;

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::Serialize;
use spade::{DelaunayTriangulation, HasPosition, Point2, Triangulation as _};

use crate::error::{Error, Result};
use crate::geometry::{ConvexBody, Window};
use crate::process::PointSample;
use clip::{area, clip_halfplane, intersection_area, HalfPlane, Polygon};

/// Sites closer than this are merged; the lowest index is kept.
pub const DEDUP_DISTANCE: f64 = 1e-14;

/// Vertex count of the polygons that bracket a curved body.
pub const CURVE_SEGMENTS: usize = 4096;

#[derive(Debug, Clone, Copy)]
struct Site {
    pos: Point2<f64>,
    id: usize,
}

impl HasPosition for Site {
    type Scalar = f64;

    fn position(&self) -> Point2<f64> {
        self.pos
    }
}

/// Delaunay triangulation of a planar site set.
#[derive(Debug, Clone)]
pub struct Triangulation {
    pub sites: Vec<[f64; 2]>,
    /// Counterclockwise site-index triples.
    pub triangles: Vec<[usize; 3]>,
    /// Sorted Delaunay neighbours per site (empty for merged duplicates).
    pub adjacency: Vec<Vec<usize>>,
    pub hull_size: usize,
}

/// Index of the representative of each site after merging near-duplicates.
fn dedup_representatives(sites: &[[f64; 2]]) -> Vec<usize> {
    let key = |v: f64| (v / DEDUP_DISTANCE).floor() as i64;
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut rep: Vec<usize> = (0..sites.len()).collect();
    for (i, s) in sites.iter().enumerate() {
        let (kx, ky) = (key(s[0]), key(s[1]));
        let mut found = None;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = buckets.get(&(kx + dx, ky + dy)) {
                    for &j in list {
                        let t = sites[j];
                        if (t[0] - s[0]).hypot(t[1] - s[1]) <= DEDUP_DISTANCE {
                            found = Some(j);
                            break 'search;
                        }
                    }
                }
            }
        }
        match found {
            Some(j) => rep[i] = j,
            None => buckets.entry((kx, ky)).or_default().push(i),
        }
    }
    rep
}

fn build_spade(sites: &[[f64; 2]], rep: &[usize]) -> Result<DelaunayTriangulation<Site>> {
    let vertices: Vec<Site> = sites
        .iter()
        .enumerate()
        .filter(|(i, _)| rep[*i] == *i)
        .map(|(id, s)| Site {
            pos: Point2::new(s[0], s[1]),
            id,
        })
        .collect();
    DelaunayTriangulation::bulk_load(vertices)
        .map_err(|e| Error::InvalidArgument(format!("triangulation input rejected: {e:?}")))
}

fn neighbours(tri: &DelaunayTriangulation<Site>, n: usize) -> Vec<Vec<usize>> {
    let mut adjacency = vec![Vec::new(); n];
    for v in tri.vertices() {
        let own = v.data().id;
        let mut list: Vec<usize> = v.out_edges().map(|e| e.to().data().id).collect();
        list.sort_unstable();
        list.dedup();
        adjacency[own] = list;
    }
    adjacency
}

/// Delaunay triangulation. Fails when the sites are all collinear.
pub fn delaunay(sites: &[[f64; 2]]) -> Result<Triangulation> {
    let rep = dedup_representatives(sites);
    let distinct = rep.iter().enumerate().filter(|(i, r)| *i == **r).count();
    if distinct < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: distinct,
        });
    }
    let tri = build_spade(sites, &rep)?;
    let triangles: Vec<[usize; 3]> = tri
        .inner_faces()
        .map(|f| {
            let [a, b, c] = f.vertices();
            [a.data().id, b.data().id, c.data().id]
        })
        .collect();
    if triangles.is_empty() {
        return Err(Error::AllCollinear);
    }
    Ok(Triangulation {
        sites: sites.to_vec(),
        triangles,
        adjacency: neighbours(&tri, sites.len()),
        hull_size: tri.convex_hull_size(),
    })
}

/// Voronoi cell of one nucleus, clipped to a window.
#[derive(Debug, Clone, Serialize)]
pub struct ClippedCell {
    pub nucleus: usize,
    /// Counterclockwise; empty when the cell misses the window.
    pub polygon: Polygon,
    pub touches_window_boundary: bool,
}

impl ClippedCell {
    pub fn area(&self) -> f64 {
        area(&self.polygon)
    }
}

fn window_polygon(clip: &Window) -> Polygon {
    let (lo, hi) = (clip.lower(), clip.upper());
    vec![[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]]
}

/// Lazily builds clipped cells from Delaunay adjacency.
struct CellBuilder<'a> {
    sites: &'a [[f64; 2]],
    rep: Vec<usize>,
    adjacency: Vec<Vec<usize>>,
    window: Polygon,
    clip: &'a Window,
}

impl<'a> CellBuilder<'a> {
    fn new(sites: &'a [[f64; 2]], clip: &'a Window) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::EmptySample);
        }
        if clip.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: clip.dim(),
            });
        }
        let rep = dedup_representatives(sites);
        let reps: Vec<usize> = (0..sites.len()).filter(|&i| rep[i] == i).collect();
        let adjacency = match reps.len() {
            // One or two distinct sites need no triangulation.
            1 => vec![Vec::new(); sites.len()],
            2 => {
                let mut adj = vec![Vec::new(); sites.len()];
                adj[reps[0]].push(reps[1]);
                adj[reps[1]].push(reps[0]);
                adj
            }
            _ => neighbours(&build_spade(sites, &rep)?, sites.len()),
        };
        Ok(Self {
            sites,
            rep,
            adjacency,
            window: window_polygon(clip),
            clip,
        })
    }

    fn cell(&self, i: usize) -> ClippedCell {
        if self.rep[i] != i {
            return ClippedCell {
                nucleus: i,
                polygon: Vec::new(),
                touches_window_boundary: false,
            };
        }
        let own = self.sites[i];
        let mut poly = self.window.clone();
        for &j in &self.adjacency[i] {
            if poly.is_empty() {
                break;
            }
            poly = clip_halfplane(&poly, &HalfPlane::bisector(own, self.sites[j]));
        }
        let (lo, hi) = (self.clip.lower(), self.clip.upper());
        let tol = 1e-12 * (self.clip.side(0) + self.clip.side(1));
        let touches = poly.iter().any(|v| {
            (v[0] - lo[0]).abs() <= tol
                || (v[0] - hi[0]).abs() <= tol
                || (v[1] - lo[1]).abs() <= tol
                || (v[1] - hi[1]).abs() <= tol
        });
        ClippedCell {
            nucleus: i,
            polygon: poly,
            touches_window_boundary: touches,
        }
    }
}

/// All Voronoi cells of `sites`, each intersected with `clip`.
pub fn voronoi_cells_clipped(sites: &[[f64; 2]], clip: &Window) -> Result<Vec<ClippedCell>> {
    let builder = CellBuilder::new(sites, clip)?;
    Ok((0..sites.len()).map(|i| builder.cell(i)).collect())
}

fn sample_sites(sample: &PointSample) -> Result<Vec<[f64; 2]>> {
    if sample.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: sample.dim(),
        });
    }
    Ok(sample.points().map(|p| [p[0], p[1]]).collect())
}

/// Polygons bracketing `K`: inscribed and circumscribed (identical for polygonal bodies).
#[derive(Debug, Clone)]
pub struct BodyPolygons {
    pub inner: Polygon,
    pub outer: Polygon,
}

impl BodyPolygons {
    pub fn new(body: &ConvexBody) -> Result<Self> {
        let regular = |center: [f64; 2], ax: f64, ay: f64| {
            let n = CURVE_SEGMENTS;
            let grow = 1.0 / (PI / n as f64).cos();
            let ring = |scale: f64| -> Polygon {
                (0..n)
                    .map(|k| {
                        let t = 2.0 * PI * k as f64 / n as f64;
                        [center[0] + scale * ax * t.cos(), center[1] + scale * ay * t.sin()]
                    })
                    .collect()
            };
            // The affine image of a circle's inscribed/circumscribed pair brackets the ellipse.
            Self {
                inner: ring(1.0),
                outer: ring(grow),
            }
        };
        match body {
            ConvexBody::Ball { center, radius } if center.len() == 2 => {
                Ok(regular([center[0], center[1]], *radius, *radius))
            }
            ConvexBody::Ellipse { center, a, b } => Ok(regular(*center, *a, *b)),
            ConvexBody::Box {
                center,
                half_widths,
            } if center.len() == 2 => {
                let (c, h) = (center, half_widths);
                let p = vec![
                    [c[0] - h[0], c[1] - h[1]],
                    [c[0] + h[0], c[1] - h[1]],
                    [c[0] + h[0], c[1] + h[1]],
                    [c[0] - h[0], c[1] + h[1]],
                ];
                Ok(Self {
                    inner: p.clone(),
                    outer: p,
                })
            }
            ConvexBody::Polygon { vertices } => Ok(Self {
                inner: vertices.clone(),
                outer: vertices.clone(),
            }),
            _ => Err(Error::Unsupported(format!(
                "exact planar oracle needs a 2-D body, got {}-D {}",
                body.dim(),
                body.shape_name()
            ))),
        }
    }
}

/// Exact PV(K) and symmetric-difference areas of one realization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactPv {
    pub pv_area: f64,
    /// Midpoint of the bracket below.
    pub symdiff_area: f64,
    pub symdiff_lower: f64,
    pub symdiff_upper: f64,
    /// `sum of cell areas - clip area`, relative to the clip area.
    pub covering_error: f64,
    pub n_cells: usize,
    pub no_nucleus_in_body: bool,
    pub no_nucleus_outside_body: bool,
}

impl ExactPv {
    pub fn degenerate(&self) -> bool {
        self.no_nucleus_in_body || self.no_nucleus_outside_body
    }
}

fn cell_side(body: &ConvexBody, nucleus: [f64; 2], cell: &[[f64; 2]]) -> Option<bool> {
    let reach2 = cell
        .iter()
        .map(|v| (v[0] - nucleus[0]).powi(2) + (v[1] - nucleus[1]).powi(2))
        .fold(0.0, f64::max);
    let gap = body.boundary_distance(&nucleus);
    (gap * gap >= reach2).then(|| body.contains(&nucleus))
}

/// Exact PV(K) and Vol(A(K) symdiff K) over the clip window.
pub fn pv_exact(body: &ConvexBody, sample: &PointSample, clip: &Window) -> Result<ExactPv> {
    let sites = sample_sites(sample)?;
    let polys = BodyPolygons::new(body)?;
    let builder = CellBuilder::new(&sites, clip)?;
    let mut out = ExactPv {
        pv_area: 0.0,
        symdiff_area: 0.0,
        symdiff_lower: 0.0,
        symdiff_upper: 0.0,
        covering_error: 0.0,
        n_cells: sites.len(),
        no_nucleus_in_body: true,
        no_nucleus_outside_body: true,
    };
    let mut covered = 0.0;
    for (i, &nucleus) in sites.iter().enumerate() {
        let cell = builder.cell(i);
        let a = cell.area();
        covered += a;
        let inside = body.contains(&nucleus);
        if inside {
            out.no_nucleus_in_body = false;
            out.pv_area += a;
        } else {
            out.no_nucleus_outside_body = false;
        }
        if a == 0.0 {
            continue;
        }
        match cell_side(body, nucleus, &cell.polygon) {
            Some(_) => {}
            None => {
                let lo = intersection_area(&cell.polygon, &polys.inner);
                let hi = intersection_area(&cell.polygon, &polys.outer);
                if inside {
                    out.symdiff_lower += (a - hi).max(0.0);
                    out.symdiff_upper += (a - lo).max(0.0);
                } else {
                    out.symdiff_lower += lo;
                    out.symdiff_upper += hi;
                }
            }
        }
    }
    out.symdiff_area = 0.5 * (out.symdiff_lower + out.symdiff_upper);
    out.covering_error = (covered - clip.volume()) / clip.volume();
    Ok(out)
}

/// PV(K) alone: only the cells of nuclei in `K` are built.
pub fn pv_exact_area(body: &ConvexBody, sample: &PointSample, clip: &Window) -> Result<f64> {
    let sites = sample_sites(sample)?;
    let inside: Vec<usize> = (0..sites.len()).filter(|&i| body.contains(&sites[i])).collect();
    if inside.is_empty() {
        return Ok(0.0);
    }
    let builder = CellBuilder::new(&sites, clip)?;
    Ok(inside.iter().map(|&i| builder.cell(i).area()).sum())
}

/// Per-cell record of the optional geometry dump.
#[derive(Debug, Clone, Serialize)]
pub struct DumpCell {
    pub nucleus: usize,
    pub site: [f64; 2],
    pub polygon: Polygon,
    pub area: f64,
    pub nucleus_in_body: bool,
    pub touches_window_boundary: bool,
}

/// Geometry of one realization for external plotting.
#[derive(Debug, Clone, Serialize)]
pub struct GeometryDump {
    pub clip_lower: [f64; 2],
    pub clip_upper: [f64; 2],
    pub sites: Vec<[f64; 2]>,
    pub cells: Vec<DumpCell>,
    pub result: ExactPv,
}

pub fn geometry_dump(body: &ConvexBody, sample: &PointSample, clip: &Window) -> Result<GeometryDump> {
    let sites = sample_sites(sample)?;
    let cells = voronoi_cells_clipped(&sites, clip)?
        .into_iter()
        .map(|c| DumpCell {
            nucleus: c.nucleus,
            site: sites[c.nucleus],
            area: c.area(),
            nucleus_in_body: body.contains(&sites[c.nucleus]),
            touches_window_boundary: c.touches_window_boundary,
            polygon: c.polygon,
        })
        .collect();
    Ok(GeometryDump {
        clip_lower: [clip.lower()[0], clip.lower()[1]],
        clip_upper: [clip.upper()[0], clip.upper()[1]],
        result: pv_exact(body, sample, clip)?,
        sites,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_window() -> Window {
        Window::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    fn sample(points: &[[f64; 2]], window: Window) -> PointSample {
        let pts: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
        PointSample::from_points(&pts, window, 1.0).unwrap()
    }

    #[test]
    fn three_points_one_triangle() {
        let t = delaunay(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(t.triangles.len(), 1);
        assert_eq!(t.hull_size, 3);
    }

    #[test]
    fn four_convex_points_two_triangles() {
        let t = delaunay(&[[0.0, 0.0], [1.0, 0.1], [1.1, 1.0], [0.0, 0.9]]).unwrap();
        assert_eq!(t.triangles.len(), 2);
    }

    #[test]
    fn collinear_and_tiny_inputs_rejected() {
        assert_eq!(
            delaunay(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).unwrap_err(),
            Error::AllCollinear
        );
        assert!(matches!(
            delaunay(&[[0.0, 0.0], [1.0, 1.0]]),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn two_sites_split_at_bisector() {
        let cells = voronoi_cells_clipped(&[[0.25, 0.5], [0.75, 0.5]], &unit_window()).unwrap();
        assert_eq!(cells.len(), 2);
        assert_relative_eq!(cells[0].area(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(cells[1].area(), 0.5, epsilon = 1e-15);
        assert!(cells[0].polygon.iter().all(|v| v[0] <= 0.5 + 1e-15));
    }

    #[test]
    fn single_site_owns_window() {
        let cells = voronoi_cells_clipped(&[[0.3, 0.3]], &unit_window()).unwrap();
        assert_relative_eq!(cells[0].area(), 1.0, epsilon = 1e-15);
        assert!(cells[0].touches_window_boundary);
    }

    #[test]
    fn collinear_sites_give_slabs() {
        let sites: Vec<[f64; 2]> = (0..5).map(|i| [0.1 + 0.2 * i as f64, 0.5]).collect();
        let cells = voronoi_cells_clipped(&sites, &unit_window()).unwrap();
        for c in &cells {
            assert_relative_eq!(c.area(), 0.2, epsilon = 1e-14);
        }
    }

    #[test]
    fn duplicate_sites_get_empty_cells() {
        let cells =
            voronoi_cells_clipped(&[[0.2, 0.2], [0.8, 0.8], [0.2, 0.2], [0.5, 0.1]], &unit_window())
                .unwrap();
        assert!(cells[2].polygon.is_empty());
        let total: f64 = cells.iter().map(|c| c.area()).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn pv_exact_examples() {
        let left = ConvexBody::axis_box(vec![0.25, 0.5], vec![0.25, 0.5]).unwrap();
        let s = sample(&[[0.25, 0.5], [0.75, 0.5]], unit_window());
        let r = pv_exact(&left, &s, &unit_window()).unwrap();
        assert_relative_eq!(r.pv_area, 0.5, epsilon = 1e-15);
        assert!(r.symdiff_area.abs() < 1e-15);

        // K equals the clip window and every nucleus lies inside.
        let whole = ConvexBody::axis_box(vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
        let s = sample(&[[0.2, 0.3], [0.7, 0.6], [0.4, 0.9]], unit_window());
        let r = pv_exact(&whole, &s, &unit_window()).unwrap();
        assert_relative_eq!(r.pv_area, 1.0, epsilon = 1e-14);
        assert!(r.symdiff_area.abs() < 1e-14);
        assert!(r.no_nucleus_outside_body);

        // No nucleus in K.
        let far = ConvexBody::ball(vec![5.0, 5.0], 0.5).unwrap();
        let w = Window::new(vec![0.0, 0.0], vec![6.0, 6.0]).unwrap();
        let s = sample(&[[0.2, 0.3], [0.7, 0.6]], w.clone());
        let r = pv_exact(&far, &s, &w).unwrap();
        assert_eq!(r.pv_area, 0.0);
        assert!(r.no_nucleus_in_body);
        assert_relative_eq!(r.symdiff_area, far.volume(), max_relative = 1e-5);
        assert!(r.symdiff_lower <= far.volume() && far.volume() <= r.symdiff_upper);
    }

    #[test]
    fn curved_bracket_contains_area() {
        let disk = ConvexBody::ball(vec![0.0, 0.0], 1.0).unwrap();
        let p = BodyPolygons::new(&disk).unwrap();
        assert!(area(&p.inner) < PI && PI < area(&p.outer));
        assert!(area(&p.outer) - area(&p.inner) < 1e-5);
        let e = ConvexBody::ellipse([0.1, 0.2], 2.0, 0.5).unwrap();
        let p = BodyPolygons::new(&e).unwrap();
        assert!(area(&p.inner) < e.volume() && e.volume() < area(&p.outer));
        assert!(BodyPolygons::new(&ConvexBody::ball(vec![0.0; 3], 1.0).unwrap()).is_err());
    }
}
