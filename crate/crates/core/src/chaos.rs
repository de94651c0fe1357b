//! Difference operators of PV(K) and nested Monte Carlo estimates of the
//! first two chaos kernels.
//!
//! Insertions are virtual: a query `y` is reassigned to an inserted point `x`
//! only when `|y - x|` is strictly below the nearest-neighbour distance in
//! `eta`, so existing points win ties. All terms of one difference share the
//! same `eta` and the same query points.
//!
//! Each outer realization samples `eta` on a cube around the evaluation
//! point(s) only. A query `y` can change assignment only if `x` is at least
//! as close to `y` as its current nucleus, which is farther than the margin
//! base with probability below the leak budget.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{choose_margins, Margins, DEFAULT_EPSILON};
use crate::geometry::{unit_ball_volume, ConvexBody, Window};
use crate::nn::{squared_distance, NnIndex};
use crate::process::{derive_stream, role, sample_poisson, RngStream};

pub const DEFAULT_N_QUERY: usize = 4096;
/// Outer realizations per evaluation point are indexed below this.
const OUTER_SLOTS: u64 = 1 << 24;
/// Candidate draws used to measure the volume of the sampling shell.
const MIN_SHELL_DRAWS: usize = 1 << 18;

/// Sampling settings shared by the kernel estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub lambda: f64,
    pub n_outer: usize,
    pub n_query: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl KernelSpec {
    pub fn new(lambda: f64, n_outer: usize, seed: u64) -> Self {
        Self {
            lambda,
            n_outer,
            n_query: DEFAULT_N_QUERY,
            epsilon: DEFAULT_EPSILON,
            seed,
        }
    }

    fn streams(&self, key: u64, k: usize) -> Result<(RngStream, RngStream)> {
        if key >= u64::MAX / OUTER_SLOTS / 16 || k as u64 >= OUTER_SLOTS {
            return Err(Error::InvalidArgument(format!(
                "kernel stream slot ({key}, {k}) out of range"
            )));
        }
        let rep = key * OUTER_SLOTS + k as u64;
        Ok((
            derive_stream(self.seed, rep, role::CHAOS_PROCESS)?,
            derive_stream(self.seed, rep, role::CHAOS_QUERY)?,
        ))
    }
}

/// Estimate of `f_1(x)` or `f_2(x1, x2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimate {
    pub order: usize,
    pub points: Vec<Vec<f64>>,
    pub estimate: f64,
    pub stderr: f64,
    pub n_outer: usize,
}

/// One difference with its query-sampling standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Difference {
    pub value: f64,
    pub stderr: f64,
}

struct Assign<'a> {
    body: &'a ConvexBody,
    index: Option<&'a NnIndex>,
}

impl Assign<'_> {
    /// Squared distance to `eta` and whether the current nucleus lies in `K`.
    fn current(&self, y: &[f64]) -> (f64, bool) {
        match self.index {
            Some(idx) => {
                let (i, d2) = idx.nearest_squared(y);
                (d2, self.body.contains(idx.point(i)))
            }
            None => (f64::INFINITY, false),
        }
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0) / n).sqrt())
}

/// Drives `n_query` uniform queries over `window` and integrates `term`.
fn integrate(window: &Window, n_query: usize, rng: RngStream, mut term: impl FnMut(&[f64]) -> f64) -> Difference {
    let dim = window.dim();
    let mut gen = rng.generator();
    let mut u = vec![0.0; dim];
    let mut y = vec![0.0; dim];
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n_query {
        for v in u.iter_mut() {
            *v = gen.random();
        }
        window.from_unit(&u, &mut y);
        let t = term(&y);
        s += t;
        s2 += t * t;
    }
    let n = n_query as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0);
    let vol = window.volume();
    Difference {
        value: vol * mean,
        stderr: vol * (var / n).sqrt(),
    }
}

/// `D_x PV = PV(eta + x) - PV(eta)` integrated over `query`.
///
/// `index` is `None` for an empty `eta`.
pub fn add_one_cost(
    body: &ConvexBody,
    index: Option<&NnIndex>,
    x: &[f64],
    query: &Window,
    n_query: usize,
    rng: RngStream,
) -> Difference {
    let a = Assign { body, index };
    let x_in = body.contains(x);
    integrate(query, n_query, rng, |y| {
        let (d2, z_in) = a.current(y);
        let new_in = if squared_distance(y, x) < d2 { x_in } else { z_in };
        new_in as u8 as f64 - z_in as u8 as f64
    })
}

/// `D_{x1,x2} PV`, the four-term alternating sum, integrated over `query`.
pub fn second_difference(
    body: &ConvexBody,
    index: Option<&NnIndex>,
    x1: &[f64],
    x2: &[f64],
    query: &Window,
    n_query: usize,
    rng: RngStream,
) -> Difference {
    let a = Assign { body, index };
    let in1 = body.contains(x1);
    let in2 = body.contains(x2);
    integrate(query, n_query, rng, |y| {
        let (d0, z_in) = a.current(y);
        let d1 = squared_distance(y, x1);
        let d2 = squared_distance(y, x2);
        let f1 = if d1 < d0 { in1 } else { z_in };
        let f2 = if d2 < d0 { in2 } else { z_in };
        let f12 = if d1 < d0 && d1 <= d2 {
            in1
        } else if d2 < d0 && d2 < d1 {
            in2
        } else {
            z_in
        };
        let v = |b: bool| b as u8 as f64;
        v(f12) - v(f1) - v(f2) + v(z_in)
    })
}

fn local_cube(points: &[&[f64]], half: f64) -> Result<Window> {
    let mut w = Window::cube(points[0], half)?;
    for p in &points[1..] {
        w = w.union(&Window::cube(p, half)?)?;
    }
    Ok(w)
}

fn check_point(body: &ConvexBody, x: &[f64]) -> Result<()> {
    if x.len() != body.dim() {
        return Err(Error::DimensionMismatch {
            expected: body.dim(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("evaluation point {x:?} is not finite")));
    }
    Ok(())
}

fn outer_average(
    spec: &KernelSpec,
    key: u64,
    process: &Window,
    query: Option<&Window>,
    diff: impl Fn(Option<&NnIndex>, &Window, RngStream) -> f64 + Sync,
) -> Result<(f64, f64)> {
    if spec.n_outer < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: spec.n_outer,
        });
    }
    let Some(query) = query else {
        return Ok((0.0, 0.0));
    };
    let values: Vec<f64> = (0..spec.n_outer)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let (ps, qs) = spec.streams(key, k)?;
            let sample = sample_poisson(process, spec.lambda, ps)?;
            let index = if sample.is_empty() {
                None
            } else {
                Some(NnIndex::build(&sample)?)
            };
            Ok(diff(index.as_ref(), query, qs))
        })
        .collect::<Result<_>>()?;
    Ok(mean_and_stderr(&values))
}

/// `f_1(x) = E D_x PV`, averaged over `n_outer` realizations of `eta`.
///
/// `key` selects the random streams; equal keys reuse the same realizations.
pub fn estimate_f1(body: &ConvexBody, x: &[f64], spec: &KernelSpec, key: u64) -> Result<KernelEstimate> {
    check_point(body, x)?;
    let m = choose_margins(body, spec.lambda, spec.epsilon)?;
    let process = local_cube(&[x], m.process)?;
    let query = local_cube(&[x], m.outer)?;
    let (estimate, stderr) = outer_average(spec, key, &process, Some(&query), |idx, q, rng| {
        add_one_cost(body, idx, x, q, spec.n_query, rng).value
    })?;
    Ok(KernelEstimate {
        order: 1,
        points: vec![x.to_vec()],
        estimate,
        stderr,
        n_outer: spec.n_outer,
    })
}

/// `f_2(x1, x2) = E D_{x1,x2} PV / 2`.
///
/// Symmetric in its arguments bit for bit: windows and streams do not depend
/// on the order of the points.
pub fn estimate_f2(
    body: &ConvexBody,
    x1: &[f64],
    x2: &[f64],
    spec: &KernelSpec,
    key: u64,
) -> Result<KernelEstimate> {
    check_point(body, x1)?;
    check_point(body, x2)?;
    if x1 == x2 {
        return Err(Error::InvalidArgument("second-order kernel needs distinct points".into()));
    }
    let m = choose_margins(body, spec.lambda, spec.epsilon)?;
    // Sort so that union and intersection are computed in a fixed order.
    let (a, b) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
    let process = local_cube(&[a, b], m.process)?;
    let query = Window::cube(a, m.outer)?.intersection(&Window::cube(b, m.outer)?);
    let (estimate, stderr) = outer_average(spec, key, &process, query.as_ref(), |idx, q, rng| {
        0.5 * second_difference(body, idx, a, b, q, spec.n_query, rng).value
    })?;
    Ok(KernelEstimate {
        order: 2,
        points: vec![x1.to_vec(), x2.to_vec()],
        estimate,
        stderr,
        n_outer: spec.n_outer,
    })
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Envelope `|f_n| <= exp(-lambda kappa_d r^d) / ((n-1)! lambda)`, with `r`
/// the radius of the smallest ball containing the points.
pub fn envelope_radius(n: usize, lambda: f64, dim: usize, r: f64) -> f64 {
    (-lambda * unit_ball_volume(dim) * r.powi(dim as i32)).exp() / (factorial(n - 1) * lambda)
}

/// Envelope `|f_n| <= 2 exp(-lambda kappa_d delta^d / 8^d) / (n! lambda)`,
/// valid when the centre of the smallest enclosing ball is at distance
/// `delta > 8 r` from the boundary. `None` when that condition fails.
pub fn envelope_boundary(n: usize, lambda: f64, dim: usize, r: f64, delta: f64) -> Option<f64> {
    (delta > 8.0 * r).then(|| {
        let t = (delta / 8.0).powi(dim as i32);
        2.0 * (-lambda * unit_ball_volume(dim) * t).exp() / (factorial(n) * lambda)
    })
}

/// `kappa_d^2 / 8^d * exp(-2 (4^d - 2^-d) kappa_d) * (1 - exp(-2^-d kappa_d))^2`.
pub fn lower_bound_constant(dim: usize) -> f64 {
    let k = unit_ball_volume(dim);
    let d = dim as i32;
    let two_inv = 2f64.powi(-d);
    k * k / 8f64.powi(d) * (-2.0 * (4f64.powi(d) - two_inv) * k).exp() * (1.0 - (-two_inv * k).exp()).powi(2)
}

/// Lower bound on `lambda * integral f_1^2`:
/// `C * kappa_1 * V_{d-1}(K) * lambda^(-1-1/d)`, valid for `lambda >= (2 / r_K)^d`.
pub fn first_chaos_lower_bound(body: &ConvexBody, lambda: f64) -> f64 {
    let d = body.dim();
    let v = body.intrinsic_volumes();
    lower_bound_constant(d) * 2.0 * v[d - 1] * lambda.powf(-1.0 - 1.0 / d as f64)
}

/// Smallest intensity at which [`first_chaos_lower_bound`] applies.
pub fn lower_bound_threshold(body: &ConvexBody) -> f64 {
    (2.0 / body.inradius()).powi(body.dim() as i32)
}

/// One row of a first-order kernel scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub x: Vec<f64>,
    pub f1_hat: f64,
    pub stderr: f64,
    pub bound_43: f64,
    pub bound_44: Option<f64>,
    pub inside: bool,
}

impl KernelRow {
    /// Sign and both envelopes hold within `z` standard errors.
    pub fn consistent(&self, z: f64) -> bool {
        let slack = z * self.stderr;
        let sign = if self.inside {
            self.f1_hat >= -slack
        } else {
            self.f1_hat <= slack
        };
        let env43 = self.f1_hat.abs() <= self.bound_43 + slack;
        let env44 = self.bound_44.is_none_or(|b| self.f1_hat.abs() <= b + slack);
        sign && env43 && env44
    }
}

/// `f_1` at each point, with its envelopes. Point `j` uses stream key `j`.
pub fn kernel_scan(body: &ConvexBody, points: &[Vec<f64>], spec: &KernelSpec) -> Result<Vec<KernelRow>> {
    let d = body.dim();
    points
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let e = estimate_f1(body, x, spec, j as u64)?;
            Ok(KernelRow {
                x: x.clone(),
                f1_hat: e.estimate,
                stderr: e.stderr,
                bound_43: envelope_radius(1, spec.lambda, d, 0.0),
                bound_44: envelope_boundary(1, spec.lambda, d, 0.0, body.boundary_distance(x)),
                inside: body.contains(x),
            })
        })
        .collect()
}

/// One row of a second-order kernel probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub f2_hat: f64,
    pub stderr: f64,
    pub bound_43: f64,
    pub bound_44: Option<f64>,
}

impl PairRow {
    pub fn consistent(&self, z: f64) -> bool {
        let slack = z * self.stderr;
        let a = self.f2_hat.abs();
        a <= self.bound_43 + slack && self.bound_44.is_none_or(|b| a <= b + slack)
    }
}

/// `f_2` at each pair, with its envelopes. Pair `j` uses stream key `j`.
pub fn f2_probe(body: &ConvexBody, pairs: &[(Vec<f64>, Vec<f64>)], spec: &KernelSpec) -> Result<Vec<PairRow>> {
    let d = body.dim();
    pairs
        .iter()
        .enumerate()
        .map(|(j, (x1, x2))| {
            let e = estimate_f2(body, x1, x2, spec, j as u64)?;
            let r = squared_distance(x1, x2).sqrt() / 2.0;
            let mid: Vec<f64> = x1.iter().zip(x2).map(|(a, b)| 0.5 * (a + b)).collect();
            Ok(PairRow {
                x1: x1.clone(),
                x2: x2.clone(),
                f2_hat: e.estimate,
                stderr: e.stderr,
                bound_43: envelope_radius(2, spec.lambda, d, r),
                bound_44: envelope_boundary(2, spec.lambda, d, r, body.boundary_distance(&mid)),
            })
        })
        .collect()
}

/// Random pairs with midpoints uniform in `region` and separations uniform
/// in `[0, max_separation]`.
pub fn random_pairs(
    region: &Window,
    max_separation: f64,
    count: usize,
    rng: RngStream,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let d = region.dim();
    let mut gen = rng.generator();
    let mut u = vec![0.0; d];
    (0..count)
        .map(|_| {
            let mut mid = vec![0.0; d];
            for v in u.iter_mut() {
                *v = gen.random();
            }
            region.from_unit(&u, &mut mid);
            let mut dir: Vec<f64> = (0..d).map(|_| gen.sample(rand_distr::StandardNormal)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let half = 0.5 * max_separation * gen.random::<f64>().max(1e-9);
            dir.iter_mut().for_each(|v| *v *= half / norm);
            let x1 = mid.iter().zip(&dir).map(|(m, v)| m - v).collect();
            let x2 = mid.iter().zip(&dir).map(|(m, v)| m + v).collect();
            (x1, x2)
        })
        .collect()
}

/// `lambda * integral f_1^2`, the first term of the chaos expansion of Var PV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstChaosNorm {
    pub value: f64,
    pub stderr: f64,
    /// Evaluation points lie within this distance of the boundary.
    pub support_radius: f64,
    pub shell_volume: f64,
    pub n_eval: usize,
    pub lower_bound: f64,
    pub lower_bound_applies: bool,
}

/// Estimates `lambda * integral f_1(x)^2 dx` by sampling `x` uniformly in the
/// shell of points within `support_radius = m_out` of the boundary, outside
/// of which `f_1` is negligible at the leak budget. Each squared estimate is
/// debiased by its own squared standard error.
pub fn first_chaos_norm(body: &ConvexBody, n_eval: usize, spec: &KernelSpec) -> Result<FirstChaosNorm> {
    if n_eval < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n_eval });
    }
    let Margins { outer, .. } = choose_margins(body, spec.lambda, spec.epsilon)?;
    let window = body.dilated_window(outer)?;
    let d = body.dim();
    let mut gen = derive_stream(spec.seed, 0, role::CHAOS_EVAL_POINTS)?.generator();
    let mut u = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut accepted = Vec::with_capacity(n_eval);
    let (mut drawn, mut hits) = (0usize, 0usize);
    while accepted.len() < n_eval || drawn < MIN_SHELL_DRAWS {
        for v in u.iter_mut() {
            *v = gen.random();
        }
        window.from_unit(&u, &mut x);
        drawn += 1;
        if body.boundary_distance(&x) <= outer {
            hits += 1;
            if accepted.len() < n_eval {
                accepted.push(x.clone());
            }
        }
    }
    let shell_volume = window.volume() * hits as f64 / drawn as f64;

    let terms: Vec<f64> = accepted
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let e = estimate_f1(body, x, spec, j as u64)?;
            Ok(spec.lambda * shell_volume * (e.estimate.powi(2) - e.stderr.powi(2)))
        })
        .collect::<Result<_>>()?;
    let (value, stderr) = mean_and_stderr(&terms);
    Ok(FirstChaosNorm {
        value,
        stderr,
        support_radius: outer,
        shell_volume,
        n_eval,
        lower_bound: first_chaos_lower_bound(body, spec.lambda),
        lower_bound_applies: spec.lambda >= lower_bound_threshold(body),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::EstimatorWindows;
    use approx::assert_relative_eq;

    fn disk() -> ConvexBody {
        ConvexBody::ball(vec![0.0, 0.0], 1.0).unwrap()
    }

    #[test]
    fn coincident_insertion_is_exactly_zero() {
        let body = disk();
        let w = EstimatorWindows::new(&body, 500.0, 1e-6).unwrap();
        let s = sample_poisson(&w.process, 500.0, RngStream::new(3, 0)).unwrap();
        let idx = NnIndex::build(&s).unwrap();
        for i in [0, s.len() / 2, s.len() - 1] {
            let x = s.point(i).to_vec();
            let q = Window::cube(&x, 0.2).unwrap();
            let d = add_one_cost(&body, Some(&idx), &x, &q, 5000, RngStream::new(3, 1));
            assert_eq!(d.value, 0.0);
            assert_eq!(d.stderr, 0.0);
        }
    }

    #[test]
    fn sign_holds_for_every_query_set() {
        let body = disk();
        let w = EstimatorWindows::new(&body, 300.0, 1e-6).unwrap();
        let s = sample_poisson(&w.process, 300.0, RngStream::new(4, 0)).unwrap();
        let idx = NnIndex::build(&s).unwrap();
        for (k, x) in [[0.97, 0.0], [0.0, -0.99], [1.03, 0.02], [-0.5, 0.9]].iter().enumerate() {
            let q = Window::cube(x, 0.3).unwrap();
            let d = add_one_cost(&body, Some(&idx), x, &q, 4000, RngStream::new(4, k as u64 + 1));
            if body.contains(x) {
                assert!(d.value >= 0.0);
            } else {
                assert!(d.value <= 0.0);
            }
        }
    }

    #[test]
    fn deep_interior_kernel_vanishes() {
        let body = disk();
        let spec = KernelSpec::new(1000.0, 8, 5);
        let e = estimate_f1(&body, &[0.0, 0.0], &spec, 0).unwrap();
        assert_eq!(e.estimate, 0.0);
    }

    #[test]
    fn near_boundary_kernel_is_nonzero_and_bounded() {
        let body = disk();
        let spec = KernelSpec::new(1000.0, 64, 5);
        let e = estimate_f1(&body, &[0.99, 0.0], &spec, 0).unwrap();
        assert!(e.estimate > 0.0);
        assert!(e.estimate <= 1.0 / 1000.0 + 4.0 * e.stderr);
        let o = estimate_f1(&body, &[1.01, 0.0], &spec, 1).unwrap();
        assert!(o.estimate < 0.0);
    }

    #[test]
    fn second_kernel_symmetric() {
        let body = disk();
        let spec = KernelSpec::new(500.0, 16, 9);
        let a = estimate_f2(&body, &[0.95, 0.01], &[1.0, -0.02], &spec, 3).unwrap();
        let b = estimate_f2(&body, &[1.0, -0.02], &[0.95, 0.01], &spec, 3).unwrap();
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.stderr, b.stderr);
        assert!(estimate_f2(&body, &[0.5, 0.5], &[0.5, 0.5], &spec, 0).is_err());
    }

    #[test]
    fn distant_pair_kernel_is_zero() {
        let body = disk();
        let spec = KernelSpec::new(1000.0, 4, 1);
        let e = estimate_f2(&body, &[1.0, 0.0], &[-1.0, 0.0], &spec, 0).unwrap();
        assert_eq!((e.estimate, e.stderr), (0.0, 0.0));
    }

    #[test]
    fn envelopes() {
        assert_relative_eq!(envelope_radius(1, 1000.0, 2, 0.0), 1e-3);
        assert_relative_eq!(
            envelope_radius(2, 100.0, 2, 0.1),
            (-100.0 * std::f64::consts::PI * 0.01f64).exp() / 100.0
        );
        assert_eq!(envelope_boundary(2, 100.0, 2, 0.1, 0.8), None);
        assert_relative_eq!(
            envelope_boundary(2, 100.0, 2, 0.1, 1.6).unwrap(),
            (-100.0 * std::f64::consts::PI * 0.04f64).exp() / 100.0
        );
        assert_relative_eq!(envelope_boundary(1, 10.0, 2, 0.0, 0.0 + 1e-300).unwrap(), 0.2);
    }

    #[test]
    fn lower_bound_constant_value() {
        let k = std::f64::consts::PI;
        let expected = k * k / 64.0 * (-2.0 * (16.0 - 0.25) * k).exp() * (1.0 - (-0.25 * k).exp()).powi(2);
        assert_relative_eq!(lower_bound_constant(2), expected, max_relative = 1e-14);
        assert!(lower_bound_constant(2) > 0.0 && lower_bound_constant(2) < 1e-40);
        let body = disk();
        assert_relative_eq!(lower_bound_threshold(&body), 4.0);
    }
}
