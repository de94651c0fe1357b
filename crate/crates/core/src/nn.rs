//! Exact nearest-neighbour queries over a point sample.
//!
//! A uniform grid with about two points per cell, searched in Chebyshev rings
//! around the query's (clamped) cell. The search stops only once every
//! unvisited cell is provably farther than the current best, so results are
//! identical to a linear scan, including the lowest-index tie-break.

use crate::error::{Error, Result};
use crate::geometry::Window;
use crate::process::PointSample;

/// Below this many points the index is a flat scan.
pub const FLAT_SCAN_THRESHOLD: usize = 64;
/// Higher dimensions always use the flat scan.
pub const MAX_GRID_DIM: usize = 16;

/// Squared Euclidean distance. Every distance reported by this module is
/// `squared_distance(a, b).sqrt()`.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
fn better(d2: f64, idx: usize, best_d2: f64, best_idx: usize) -> bool {
    d2 < best_d2 || (d2 == best_d2 && idx < best_idx)
}

/// Linear-scan oracle over a flat coordinate buffer.
pub fn nearest_bruteforce(coords: &[f64], dim: usize, y: &[f64]) -> Result<(usize, f64)> {
    if coords.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, p) in coords.chunks_exact(dim).enumerate() {
        let d2 = squared_distance(p, y);
        if better(d2, i, best.1, best.0) {
            best = (i, d2);
        }
    }
    Ok((best.0, best.1.sqrt()))
}

#[derive(Debug, Clone)]
struct Grid {
    origin: Vec<f64>,
    cell: f64,
    counts: Vec<usize>,
    strides: Vec<usize>,
    /// CSR offsets into `sorted`, one slot per cell plus a terminator.
    start: Vec<usize>,
    /// Point coordinates reordered by cell.
    sorted: Vec<f64>,
    /// Original index of each reordered point.
    ids: Vec<usize>,
}

/// Read-only nearest-neighbour structure.
#[derive(Debug, Clone)]
pub struct NnIndex {
    coords: Vec<f64>,
    dim: usize,
    window: Window,
    grid: Option<Grid>,
}

impl NnIndex {
    pub fn build(sample: &PointSample) -> Result<Self> {
        Self::from_coords(sample.coords().to_vec(), sample.dim(), sample.window().clone())
    }

    /// Builds over raw coordinates. Points may lie outside `window`; the
    /// window only sets the grid geometry.
    pub fn from_coords(coords: Vec<f64>, dim: usize, window: Window) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::EmptySample);
        }
        if window.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: window.dim(),
                got: dim,
            });
        }
        let n = coords.len() / dim;
        let grid = (n >= FLAT_SCAN_THRESHOLD && dim <= MAX_GRID_DIM).then(|| Grid::build(&coords, dim, &window));
        Ok(Self {
            coords,
            dim,
            window,
            grid,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// Nearest point index and its distance.
    pub fn nearest(&self, y: &[f64]) -> (usize, f64) {
        let (i, d2) = self.nearest_squared(y);
        (i, d2.sqrt())
    }

    /// Nearest point index and squared distance.
    pub fn nearest_squared(&self, y: &[f64]) -> (usize, f64) {
        match &self.grid {
            Some(grid) => grid.nearest(y, self.dim),
            None => {
                let mut best = (usize::MAX, f64::INFINITY);
                for (i, p) in self.coords.chunks_exact(self.dim).enumerate() {
                    let d2 = squared_distance(p, y);
                    if better(d2, i, best.1, best.0) {
                        best = (i, d2);
                    }
                }
                best
            }
        }
    }
}

impl Grid {
    fn build(coords: &[f64], dim: usize, window: &Window) -> Self {
        let n = coords.len() / dim;
        let cell = (2.0 * window.volume() / n as f64).powf(1.0 / dim as f64);
        let counts: Vec<usize> = (0..dim)
            .map(|i| ((window.side(i) / cell).ceil() as usize).max(1))
            .collect();
        let mut strides = vec![1usize; dim];
        for i in 1..dim {
            strides[i] = strides[i - 1] * counts[i - 1];
        }
        let total = strides[dim - 1] * counts[dim - 1];
        let origin = window.lower().to_vec();

        let mut grid = Grid {
            origin,
            cell,
            counts,
            strides,
            start: vec![0; total + 1],
            sorted: Vec::with_capacity(coords.len()),
            ids: Vec::with_capacity(n),
        };
        let cell_of: Vec<usize> = coords
            .chunks_exact(dim)
            .map(|p| grid.flat_cell(p))
            .collect();
        for &c in &cell_of {
            grid.start[c + 1] += 1;
        }
        for c in 0..total {
            grid.start[c + 1] += grid.start[c];
        }
        let mut fill = grid.start.clone();
        grid.sorted.resize(coords.len(), 0.0);
        grid.ids.resize(n, 0);
        for (i, &c) in cell_of.iter().enumerate() {
            let slot = fill[c];
            fill[c] += 1;
            grid.ids[slot] = i;
            grid.sorted[slot * dim..(slot + 1) * dim].copy_from_slice(&coords[i * dim..(i + 1) * dim]);
        }
        grid
    }

    #[inline]
    fn axis_cell(&self, axis: usize, v: f64) -> usize {
        let t = ((v - self.origin[axis]) / self.cell).floor();
        if t <= 0.0 {
            0
        } else {
            (t as usize).min(self.counts[axis] - 1)
        }
    }

    fn flat_cell(&self, p: &[f64]) -> usize {
        p.iter()
            .enumerate()
            .map(|(axis, v)| self.axis_cell(axis, *v) * self.strides[axis])
            .sum()
    }

    /// Scans the points of cells `first..=last` along axis 0, which are
    /// contiguous in `sorted`.
    #[inline]
    fn scan_row(&self, first: usize, last: usize, y: &[f64], dim: usize, best: &mut (usize, f64)) {
        let (s0, s1) = (self.start[first], self.start[last + 1]);
        let pts = &self.sorted[s0 * dim..s1 * dim];
        let ids = &self.ids[s0..s1];
        match dim {
            2 => {
                for (p, &id) in pts.chunks_exact(2).zip(ids) {
                    let d2 = (p[0] - y[0]) * (p[0] - y[0]) + (p[1] - y[1]) * (p[1] - y[1]);
                    if better(d2, id, best.1, best.0) {
                        *best = (id, d2);
                    }
                }
            }
            3 => {
                for (p, &id) in pts.chunks_exact(3).zip(ids) {
                    let d2 = (p[0] - y[0]) * (p[0] - y[0])
                        + (p[1] - y[1]) * (p[1] - y[1])
                        + (p[2] - y[2]) * (p[2] - y[2]);
                    if better(d2, id, best.1, best.0) {
                        *best = (id, d2);
                    }
                }
            }
            _ => {
                for (p, &id) in pts.chunks_exact(dim).zip(ids) {
                    let d2 = squared_distance(p, y);
                    if better(d2, id, best.1, best.0) {
                        *best = (id, d2);
                    }
                }
            }
        }
    }

    fn nearest(&self, y: &[f64], dim: usize) -> (usize, f64) {
        let mut home = [0usize; MAX_GRID_DIM];
        let home = &mut home[..dim];
        for (axis, h) in home.iter_mut().enumerate() {
            *h = self.axis_cell(axis, y[axis]);
        }
        let mut best = (usize::MAX, f64::INFINITY);
        let mut k = 0usize;
        loop {
            self.scan_ring(home, k, y, dim, &mut best);

            // Distance from y to the nearest unvisited cell.
            let mut bound = f64::INFINITY;
            for axis in 0..dim {
                let h = home[axis];
                if h > k {
                    let face = self.origin[axis] + (h - k) as f64 * self.cell;
                    bound = bound.min(y[axis] - face);
                }
                if h + k + 1 < self.counts[axis] {
                    let face = self.origin[axis] + (h + k + 1) as f64 * self.cell;
                    bound = bound.min(face - y[axis]);
                }
            }
            if bound == f64::INFINITY {
                return best;
            }
            let bound = bound.max(0.0);
            if best.1 < bound * bound {
                return best;
            }
            k += 1;
        }
    }

    /// Visits every in-grid cell whose Chebyshev offset from `home` is exactly
    /// `k`, one axis-0 row at a time.
    fn scan_ring(&self, home: &[usize], k: usize, y: &[f64], dim: usize, best: &mut (usize, f64)) {
        let k = k as isize;
        let mut lo = [0isize; MAX_GRID_DIM];
        let mut hi = [0isize; MAX_GRID_DIM];
        for a in 0..dim {
            lo[a] = (-k).max(-(home[a] as isize));
            hi[a] = k.min(self.counts[a] as isize - 1 - home[a] as isize);
            if lo[a] > hi[a] {
                return;
            }
        }
        let (lo, hi) = (&lo[..dim], &hi[..dim]);
        let h0 = home[0] as isize;
        let mut offset = [0isize; MAX_GRID_DIM];
        let offset = &mut offset[..dim];
        offset.copy_from_slice(lo);
        loop {
            let base: usize = (1..dim)
                .map(|a| (home[a] as isize + offset[a]) as usize * self.strides[a])
                .sum();
            if k > 0 && (1..dim).all(|a| offset[a].abs() < k) {
                // Interior row: only its two end cells lie on the shell.
                if lo[0] == -k {
                    let c = base + (h0 - k) as usize;
                    self.scan_row(c, c, y, dim, best);
                }
                if hi[0] == k {
                    let c = base + (h0 + k) as usize;
                    self.scan_row(c, c, y, dim, best);
                }
            } else {
                self.scan_row(base + (h0 + lo[0]) as usize, base + (h0 + hi[0]) as usize, y, dim, best);
            }
            if !advance(offset, lo, hi) {
                return;
            }
        }
    }
}

/// Odometer over axes `1..`, fastest at the last axis. Returns false when exhausted.
fn advance(offset: &mut [isize], lo: &[isize], hi: &[isize]) -> bool {
    for a in (1..offset.len()).rev() {
        if offset[a] < hi[a] {
            offset[a] += 1;
            return true;
        }
        offset[a] = lo[a];
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{sample_poisson, RngStream};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn window2() -> Window {
        Window::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn single_point_answers_everything() {
        let idx = NnIndex::from_coords(vec![0.0, 0.0], 2, Window::cube(&[0.0, 0.0], 1.0).unwrap())
            .unwrap();
        assert_eq!(idx.nearest(&[3.0, 4.0]), (0, 5.0));
        assert_eq!(idx.nearest(&[-100.0, 0.5]).0, 0);
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        let w = Window::new(vec![-1.0, -1.0], vec![3.0, 1.0]).unwrap();
        let idx = NnIndex::from_coords(vec![0.0, 0.0, 2.0, 0.0], 2, w).unwrap();
        assert_eq!(idx.nearest(&[1.0, 0.0]), (0, 1.0));
        assert_eq!(
            nearest_bruteforce(&[0.0, 0.0, 2.0, 0.0], 2, &[1.0, 0.0]).unwrap(),
            (0, 1.0)
        );
    }

    #[test]
    fn empty_inputs_error() {
        assert_eq!(
            NnIndex::from_coords(vec![], 2, window2()).unwrap_err(),
            Error::EmptySample
        );
        assert_eq!(nearest_bruteforce(&[], 2, &[0.0, 0.0]).unwrap_err(), Error::EmptySample);
    }

    #[test]
    fn grid_ties_resolved_like_bruteforce() {
        // Integer lattice: many exact ties among grid neighbours.
        let mut coords = Vec::new();
        for i in 0..12 {
            for j in 0..12 {
                coords.extend_from_slice(&[i as f64, j as f64]);
            }
        }
        let w = Window::new(vec![0.0, 0.0], vec![11.0, 11.0]).unwrap();
        let idx = NnIndex::from_coords(coords.clone(), 2, w).unwrap();
        for y in [[0.5, 0.5], [3.5, 7.0], [10.5, 10.5], [-3.0, 5.5], [5.5, 20.0]] {
            assert_eq!(idx.nearest(&y), nearest_bruteforce(&coords, 2, &y).unwrap(), "{y:?}");
        }
    }

    #[test]
    fn matches_bruteforce_on_random_points() {
        let s = sample_poisson(&window2(), 500.0, RngStream::new(3, 0)).unwrap();
        let idx = NnIndex::build(&s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let y = [rng.random_range(-1.0..2.0), rng.random_range(-1.0..2.0)];
            assert_eq!(idx.nearest(&y), nearest_bruteforce(s.coords(), 2, &y).unwrap());
        }
    }

    #[test]
    fn matches_bruteforce_in_3d_and_4d() {
        for d in [3usize, 4] {
            let w = Window::new(vec![0.0; d], vec![1.0; d]).unwrap();
            let s = sample_poisson(&w, 800.0, RngStream::new(5, d as u64)).unwrap();
            let idx = NnIndex::build(&s).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
            for _ in 0..2000 {
                let y: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..1.5)).collect();
                assert_eq!(idx.nearest(&y), nearest_bruteforce(s.coords(), d, &y).unwrap());
            }
        }
    }
}
