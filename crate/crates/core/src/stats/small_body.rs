//! Variance of PV(r K) at fixed intensity as `r` shrinks.
//!
//! Realizations with no nucleus in `r K` are expected here and count as
//! `PV = 0`; campaign preconditions on `lambda * Vol` do not apply.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::campaign::{replicate, replication_id, EstimatorChoice};
use super::{jackknife_variance_se, log_log_fit, mean_variance, ScalingFit};
use crate::chaos::lower_bound_threshold;
use crate::error::{Error, Result};
use crate::estimator::QueryScheme;
use crate::geometry::ConvexBody;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallBodyConfig {
    pub base: ConvexBody,
    /// Strictly decreasing scale factors.
    pub radii: Vec<f64>,
    pub lambda: f64,
    pub replications: usize,
    pub estimator: EstimatorChoice,
    pub scheme: QueryScheme,
    pub query_factor: f64,
    pub epsilon: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallBodyRow {
    pub r: f64,
    pub mean: f64,
    pub var: f64,
    pub var_se: f64,
    /// `V_{d-1}(r K)`.
    pub v_dm1: f64,
    pub expected_in_body: f64,
    pub n_nonzero: usize,
    pub n_degenerate: usize,
    /// Whether `lambda >= (2 / r_K)^d` holds for `r K`.
    pub lower_bound_applies: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallBodyTable {
    pub rows: Vec<SmallBodyRow>,
    /// Log-log slope of the variance over `r <= 10 r_min`.
    pub var_slope: Option<ScalingFit>,
    pub var_slope_points: usize,
    /// Log-log slope of `V_{d-1}(r K)` over all rows.
    pub v_dm1_slope: ScalingFit,
}

pub fn small_body_experiment(config: &SmallBodyConfig) -> Result<SmallBodyTable> {
    config.base.validate()?;
    let radii = &config.radii;
    if radii.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: radii.len(),
        });
    }
    if radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "scale grid must be positive and strictly decreasing, got {radii:?}"
        )));
    }
    if config.replications < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: config.replications,
        });
    }
    if config.estimator == EstimatorChoice::Exact2d && config.base.dim() != 2 {
        return Err(Error::Unsupported("exact estimator needs d = 2".into()));
    }
    let bodies: Vec<ConvexBody> = radii.iter().map(|&r| config.base.scaled(r)).collect::<Result<_>>()?;
    let d = config.base.dim();
    let n = config.replications;

    let jobs: Vec<(usize, usize)> = (0..radii.len()).flat_map(|i| (0..n).map(move |k| (i, k))).collect();
    let rows: Vec<_> = jobs
        .par_iter()
        .map(|&(i, k)| {
            replicate(
                &bodies[i],
                config.lambda,
                replication_id(i, k),
                k,
                config.estimator,
                config.scheme,
                config.query_factor,
                config.epsilon,
                config.seed,
            )
        })
        .collect::<Result<_>>()?;

    let table: Vec<SmallBodyRow> = bodies
        .iter()
        .enumerate()
        .map(|(i, body)| {
            let chunk = &rows[i * n..(i + 1) * n];
            let values: Vec<f64> = chunk.iter().map(|r| r.pv).collect();
            let (mean, var) = mean_variance(&values)?;
            Ok(SmallBodyRow {
                r: radii[i],
                mean,
                var,
                var_se: jackknife_variance_se(&values)?,
                v_dm1: body.intrinsic_volumes()[d - 1],
                expected_in_body: config.lambda * body.volume(),
                n_nonzero: values.iter().filter(|v| **v != 0.0).count(),
                n_degenerate: chunk.iter().filter(|r| r.degenerate_flag != 0).count(),
                lower_bound_applies: config.lambda >= lower_bound_threshold(body),
            })
        })
        .collect::<Result<_>>()?;

    let r_min = radii[radii.len() - 1];
    let decade: Vec<&SmallBodyRow> = table
        .iter()
        .filter(|row| row.r <= 10.0 * r_min * (1.0 + 1e-12) && row.var > 0.0)
        .collect();
    let var_slope = (decade.len() >= 2)
        .then(|| {
            let x: Vec<f64> = decade.iter().map(|row| row.r.ln()).collect();
            let y: Vec<f64> = decade.iter().map(|row| row.var.ln()).collect();
            log_log_fit(&x, &y).ok()
        })
        .flatten();
    let x: Vec<f64> = table.iter().map(|row| row.r.ln()).collect();
    let y: Vec<f64> = table.iter().map(|row| row.v_dm1.ln()).collect();
    Ok(SmallBodyTable {
        var_slope_points: decade.len(),
        var_slope,
        v_dm1_slope: log_log_fit(&x, &y)?,
        rows: table,
    })
}
