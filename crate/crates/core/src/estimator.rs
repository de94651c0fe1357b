//! Monte Carlo evaluation of `PV(K) = Vol{ y : z(y, eta) in K }` and of the
//! symmetric difference `Vol(A(K) symdiff K)` for one realization.
//!
//! The process lives on `W_proc` and queries on `W_out`, with
//! `K subset W_out subset W_proc`. Margins come from [`choose_margins`]: the
//! nucleus of a query point lies farther than `m` away with probability
//! `exp(-lambda kappa_d m^d)`, so a margin of order `(log(1/eps) / lambda)^(1/d)`
//! keeps the truncation error at the `eps` level.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{unit_ball_volume, ConvexBody, Window};
use crate::nn::NnIndex;
use crate::process::{PointSample, RngStream};

pub const DEFAULT_EPSILON: f64 = 1e-6;
/// Default queries per expected nucleus in `K`.
pub const DEFAULT_QUERY_FACTOR: f64 = 64.0;
/// Floor on the query count, so tiny bodies still get a usable estimate.
pub const MIN_QUERIES: usize = 1024;

/// Window margins for a given intensity and leak budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    /// `(ln(C_leak / eps) / (lambda kappa_d))^(1/d)`.
    pub base: f64,
    /// `2 * base`: integration window margin around `K`.
    pub outer: f64,
    /// `outer + base`: process window margin around `K`.
    pub process: f64,
    pub epsilon: f64,
}

pub fn choose_margins(body: &ConvexBody, lambda: f64, epsilon: f64) -> Result<Margins> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidIntensity(lambda));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "leak budget must lie in (0, 1), got {epsilon}"
        )));
    }
    let d = body.dim();
    let c_leak = (lambda * body.parallel_volume(1.0)).max(1.0);
    let base = ((c_leak / epsilon).ln() / (lambda * unit_ball_volume(d))).powf(1.0 / d as f64);
    Ok(Margins {
        base,
        outer: 2.0 * base,
        process: 3.0 * base,
        epsilon,
    })
}

/// Integration and process windows around `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorWindows {
    pub outer: Window,
    pub process: Window,
    pub margins: Margins,
}

impl EstimatorWindows {
    pub fn new(body: &ConvexBody, lambda: f64, epsilon: f64) -> Result<Self> {
        let margins = choose_margins(body, lambda, epsilon)?;
        Self::with_margins(body, margins)
    }

    pub fn with_margins(body: &ConvexBody, margins: Margins) -> Result<Self> {
        Ok(Self {
            outer: body.dilated_window(margins.outer)?,
            process: body.dilated_window(margins.process)?,
            margins,
        })
    }

    /// Both margins multiplied by `factor`, e.g. for truncation-bias checks.
    pub fn scaled(body: &ConvexBody, lambda: f64, epsilon: f64, factor: f64) -> Result<Self> {
        let m = choose_margins(body, lambda, epsilon)?;
        Self::with_margins(
            body,
            Margins {
                base: m.base * factor,
                outer: m.outer * factor,
                process: m.process * factor,
                epsilon,
            },
        )
    }
}

/// How query points are placed in `W_out`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryScheme {
    /// i.i.d. uniform queries, `value = Vol(W_out) * fraction assigned to K`.
    Plain,
    /// One uniform query per cell of a regular grid over `W_out`.
    Jittered,
    /// i.i.d. uniform queries estimating `Vol(K) + integral of [z(y) in K] - [y in K]`.
    /// The integrand vanishes unless `y` lies within `base` of the boundary
    /// or has no process point within `base`; the nearest-neighbour search is
    /// skipped for queries deeper than `base` on either side.
    ControlVariate,
}

/// Query count and placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub scheme: QueryScheme,
    pub n_query: usize,
}

impl QueryPlan {
    /// `max(factor * lambda * Vol(K), MIN_QUERIES)` queries.
    pub fn scaled(scheme: QueryScheme, factor: f64, lambda: f64, body: &ConvexBody) -> Self {
        let n = (factor * lambda * body.volume()).ceil();
        Self {
            scheme,
            n_query: (n as usize).max(MIN_QUERIES),
        }
    }
}

/// Which degenerate configuration a realization hit, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    None,
    /// `eta ∩ K` is empty: `PV(K) = 0`.
    NoNucleusInBody,
    /// `eta ∩ K^C` is empty: every query is assigned to `K`.
    NoNucleusOutsideBody,
}

impl Degeneracy {
    pub fn of(body: &ConvexBody, sample: &PointSample) -> Self {
        let mut any_in = false;
        let mut any_out = false;
        for p in sample.points() {
            if body.contains(p) {
                any_in = true;
            } else {
                any_out = true;
            }
            if any_in && any_out {
                return Degeneracy::None;
            }
        }
        if !any_in {
            Degeneracy::NoNucleusInBody
        } else {
            Degeneracy::NoNucleusOutsideBody
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Degeneracy::None => 0,
            Degeneracy::NoNucleusInBody => 1,
            Degeneracy::NoNucleusOutsideBody => 2,
        }
    }

    pub fn is_degenerate(self) -> bool {
        self != Degeneracy::None
    }
}

/// One estimated volume with its query-sampling error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvEstimate {
    pub value: f64,
    /// Standard error of the query sampling only (not across realizations).
    pub mc_stderr: f64,
    pub n_query: usize,
    pub windows: EstimatorWindows,
    pub degeneracy: Degeneracy,
}

/// PV(K) and symmetric difference from one shared query set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationEstimate {
    pub pv: PvEstimate,
    pub symdiff: PvEstimate,
}

struct Tally {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Tally {
    fn new() -> Self {
        Self {
            n: 0,
            sum: 0.0,
            sum_sq: 0.0,
        }
    }

    fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Standard error of the mean (population variance over n).
    fn stderr(&self) -> f64 {
        let n = self.n as f64;
        let m = self.mean();
        ((self.sum_sq / n - m * m).max(0.0) / n).sqrt()
    }
}

/// Uniform query generator for a plan over a window.
fn for_each_query(
    window: &Window,
    plan: &QueryPlan,
    rng: RngStream,
    mut visit: impl FnMut(&[f64]),
) -> usize {
    let dim = window.dim();
    let mut gen = rng.generator();
    let mut y = vec![0.0; dim];
    let mut u = vec![0.0; dim];
    match plan.scheme {
        QueryScheme::Plain | QueryScheme::ControlVariate => {
            for _ in 0..plan.n_query {
                for v in u.iter_mut() {
                    *v = gen.random();
                }
                window.from_unit(&u, &mut y);
                visit(&y);
            }
            plan.n_query
        }
        QueryScheme::Jittered => {
            let per_axis = ((plan.n_query as f64).powf(1.0 / dim as f64).floor() as usize).max(1);
            let total = per_axis.pow(dim as u32);
            let mut cell = vec![0usize; dim];
            for _ in 0..total {
                for a in 0..dim {
                    let j: f64 = gen.random();
                    u[a] = (cell[a] as f64 + j) / per_axis as f64;
                }
                window.from_unit(&u, &mut y);
                visit(&y);
                for c in cell.iter_mut() {
                    *c += 1;
                    if *c < per_axis {
                        break;
                    }
                    *c = 0;
                }
            }
            total
        }
    }
}

/// Estimates PV(K) and the symmetric difference with one query set.
///
/// `sample` must cover `windows.process`. Degenerate realizations return
/// their exact value (`0` or `Vol(W_out)` for PV) with zero standard error.
pub fn estimate_realization(
    body: &ConvexBody,
    sample: &PointSample,
    index: Option<&NnIndex>,
    windows: &EstimatorWindows,
    plan: &QueryPlan,
    rng: RngStream,
) -> Result<RealizationEstimate> {
    if sample.dim() != body.dim() {
        return Err(Error::DimensionMismatch {
            expected: body.dim(),
            got: sample.dim(),
        });
    }
    let degeneracy = Degeneracy::of(body, sample);
    let w_out = windows.outer.volume();
    let volume = body.volume();
    let wrap = |value: f64, mc_stderr: f64, n_query: usize| PvEstimate {
        value,
        mc_stderr,
        n_query,
        windows: windows.clone(),
        degeneracy,
    };

    match degeneracy {
        Degeneracy::NoNucleusInBody => {
            // Nothing is assigned to K; the symmetric difference is K itself.
            return Ok(RealizationEstimate {
                pv: wrap(0.0, 0.0, 0),
                symdiff: wrap(volume, 0.0, 0),
            });
        }
        Degeneracy::NoNucleusOutsideBody => {
            return Ok(RealizationEstimate {
                pv: wrap(w_out, 0.0, 0),
                symdiff: wrap(w_out - volume, 0.0, 0),
            });
        }
        Degeneracy::None => {}
    }
    let index = index.ok_or(Error::EmptySample)?;

    let mut pv = Tally::new();
    let mut sd = Tally::new();
    let shell = windows.margins.base;
    let n = for_each_query(&windows.outer, plan, rng, |y| {
        let y_in = body.contains(y);
        let assigned = |y: &[f64]| {
            let (i, _) = index.nearest_squared(y);
            body.contains(index.point(i))
        };
        match plan.scheme {
            QueryScheme::Plain | QueryScheme::Jittered => {
                let z_in = assigned(y);
                pv.push(z_in as u8 as f64);
                sd.push((z_in != y_in) as u8 as f64);
            }
            QueryScheme::ControlVariate => {
                let g = if body.boundary_distance(y) > shell {
                    0.0
                } else {
                    assigned(y) as u8 as f64 - y_in as u8 as f64
                };
                pv.push(g);
                sd.push(g.abs());
            }
        }
    });

    let pv_value = match plan.scheme {
        QueryScheme::ControlVariate => volume + w_out * pv.mean(),
        _ => w_out * pv.mean(),
    };
    Ok(RealizationEstimate {
        pv: wrap(pv_value.clamp(0.0, w_out), w_out * pv.stderr(), n),
        symdiff: wrap(w_out * sd.mean(), w_out * sd.stderr(), n),
    })
}

/// PV(K) for one realization.
pub fn estimate_pv(
    body: &ConvexBody,
    sample: &PointSample,
    index: Option<&NnIndex>,
    windows: &EstimatorWindows,
    plan: &QueryPlan,
    rng: RngStream,
) -> Result<PvEstimate> {
    estimate_realization(body, sample, index, windows, plan, rng).map(|r| r.pv)
}

/// `Vol(A(K) symdiff K)` for one realization.
pub fn estimate_symdiff(
    body: &ConvexBody,
    sample: &PointSample,
    index: Option<&NnIndex>,
    windows: &EstimatorWindows,
    plan: &QueryPlan,
    rng: RngStream,
) -> Result<PvEstimate> {
    estimate_realization(body, sample, index, windows, plan, rng).map(|r| r.symdiff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::sample_poisson;
    use approx::assert_relative_eq;

    fn disk() -> ConvexBody {
        ConvexBody::ball(vec![0.0, 0.0], 1.0).unwrap()
    }

    #[test]
    fn margins_formula() {
        let body = disk();
        let m = choose_margins(&body, 1000.0, 1e-6).unwrap();
        let c_leak = 1000.0 * std::f64::consts::PI * 4.0;
        let expected = 2.0 * ((c_leak * 1e6).ln() / (1000.0 * std::f64::consts::PI)).sqrt();
        assert_relative_eq!(m.outer, expected, max_relative = 1e-12);
        assert_relative_eq!(m.process, 1.5 * expected, max_relative = 1e-12);
    }

    #[test]
    fn margins_shrink_with_intensity_and_budget() {
        let body = disk();
        // With C_leak pinned at 1 (tiny lambda * Vol), margins vanish as eps -> 1.
        let small = ConvexBody::ball(vec![0.0, 0.0], 0.01).unwrap();
        let lam = 0.1 / small.parallel_volume(1.0);
        let mut last = f64::INFINITY;
        for eps in [1e-9, 1e-6, 1e-3, 0.1, 0.5, 0.9, 0.999_999] {
            let m = choose_margins(&small, lam, eps).unwrap();
            assert!(m.outer < last);
            last = m.outer;
        }
        assert!(last < 1e-2 * choose_margins(&small, lam, 0.5).unwrap().outer);

        // Doubling lambda scales by 2^(-1/d) up to the change in ln(C_leak / eps).
        let a = choose_margins(&body, 1000.0, 1e-6).unwrap();
        let b = choose_margins(&body, 2000.0, 1e-6).unwrap();
        let c_a = 1000.0 * body.parallel_volume(1.0);
        let c_b = 2000.0 * body.parallel_volume(1.0);
        let ratio = b.outer / a.outer;
        let log_ratio = ((c_b / 1e-6).ln() / (c_a / 1e-6).ln()).sqrt();
        assert_relative_eq!(ratio, 2f64.powf(-0.5) * log_ratio, max_relative = 1e-12);
        assert!(choose_margins(&body, 1000.0, 1.0).is_err());
        assert!(choose_margins(&body, 0.0, 0.5).is_err());
    }

    #[test]
    fn single_nucleus_inside_is_degenerate_full_window() {
        let body = disk();
        let windows = EstimatorWindows::new(&body, 1000.0, 1e-6).unwrap();
        let s = PointSample::from_points(&[vec![0.0, 0.0]], windows.process.clone(), 1000.0).unwrap();
        let idx = NnIndex::build(&s).unwrap();
        for scheme in [QueryScheme::Plain, QueryScheme::ControlVariate, QueryScheme::Jittered] {
            let plan = QueryPlan { scheme, n_query: 1000 };
            let e = estimate_pv(&body, &s, Some(&idx), &windows, &plan, RngStream::new(1, 1)).unwrap();
            assert_eq!(e.degeneracy, Degeneracy::NoNucleusOutsideBody);
            assert_eq!(e.value, windows.outer.volume());
        }
    }

    #[test]
    fn no_nucleus_in_body_gives_zero() {
        let body = disk();
        let windows = EstimatorWindows::new(&body, 1000.0, 1e-6).unwrap();
        let far = windows.process.upper().to_vec();
        let s = PointSample::from_points(&[far], windows.process.clone(), 1000.0).unwrap();
        let idx = NnIndex::build(&s).unwrap();
        let plan = QueryPlan {
            scheme: QueryScheme::Plain,
            n_query: 500,
        };
        let r = estimate_realization(&body, &s, Some(&idx), &windows, &plan, RngStream::new(1, 1))
            .unwrap();
        assert_eq!(r.pv.value, 0.0);
        assert_eq!(r.pv.degeneracy, Degeneracy::NoNucleusInBody);
    }

    #[test]
    fn no_misassignment_far_from_body() {
        let body = disk();
        let outer = Window::new(vec![5.0, 5.0], vec![6.0, 6.0]).unwrap();
        let s = sample_poisson(&outer, 100.0, RngStream::new(2, 0)).unwrap();
        let idx = NnIndex::build(&s).unwrap();
        let mut hits = 0;
        for_each_query(&outer, &QueryPlan { scheme: QueryScheme::Plain, n_query: 1000 }, RngStream::new(3, 0), |y| {
            let (i, _) = idx.nearest(y);
            if body.contains(idx.point(i)) != body.contains(y) {
                hits += 1;
            }
        });
        assert_eq!(hits, 0);
    }

    #[test]
    fn identical_streams_identical_values() {
        let body = disk();
        let windows = EstimatorWindows::new(&body, 500.0, 1e-6).unwrap();
        let s = sample_poisson(&windows.process, 500.0, RngStream::new(4, 0)).unwrap();
        let idx = NnIndex::build(&s).unwrap();
        let plan = QueryPlan::scaled(QueryScheme::ControlVariate, 8.0, 500.0, &body);
        let a = estimate_realization(&body, &s, Some(&idx), &windows, &plan, RngStream::new(4, 1)).unwrap();
        let b = estimate_realization(&body, &s, Some(&idx), &windows, &plan, RngStream::new(4, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn schemes_agree_on_one_realization() {
        let body = disk();
        let windows = EstimatorWindows::new(&body, 300.0, 1e-6).unwrap();
        let s = sample_poisson(&windows.process, 300.0, RngStream::new(5, 0)).unwrap();
        let idx = NnIndex::build(&s).unwrap();
        let est = |scheme| {
            let plan = QueryPlan { scheme, n_query: 400_000 };
            estimate_realization(&body, &s, Some(&idx), &windows, &plan, RngStream::new(5, 1)).unwrap()
        };
        let plain = est(QueryScheme::Plain);
        let cv = est(QueryScheme::ControlVariate);
        let jit = est(QueryScheme::Jittered);
        let tol = |a: &PvEstimate, b: &PvEstimate| 4.0 * (a.mc_stderr.powi(2) + b.mc_stderr.powi(2)).sqrt();
        assert!((plain.pv.value - cv.pv.value).abs() <= tol(&plain.pv, &cv.pv));
        assert!((plain.pv.value - jit.pv.value).abs() <= tol(&plain.pv, &jit.pv));
        assert!((plain.symdiff.value - cv.symdiff.value).abs() <= tol(&plain.symdiff, &cv.symdiff));
        assert!(cv.pv.mc_stderr < plain.pv.mc_stderr);
    }

    #[test]
    fn query_plan_floor() {
        let tiny = ConvexBody::ball(vec![0.0, 0.0], 0.001).unwrap();
        assert_eq!(QueryPlan::scaled(QueryScheme::Plain, 64.0, 10.0, &tiny).n_query, MIN_QUERIES);
        let plan = QueryPlan::scaled(QueryScheme::Plain, 64.0, 1000.0, &disk());
        assert_eq!(plan.n_query, (64_000.0 * std::f64::consts::PI).ceil() as usize);
    }
}
