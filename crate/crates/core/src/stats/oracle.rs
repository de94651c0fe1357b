//! Monte Carlo estimates against the exact planar computation on the same
//! realizations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate_realization, Degeneracy, EstimatorWindows, QueryPlan, QueryScheme};
use crate::exact2d::pv_exact;
use crate::geometry::ConvexBody;
use crate::nn::NnIndex;
use crate::process::{derive_stream, role, sample_poisson};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub replication: usize,
    pub lambda: f64,
    pub pv_exact: f64,
    pub pv_mc: f64,
    pub mc_stderr: f64,
    /// `(pv_mc - pv_exact) / mc_stderr`; zero when both agree exactly.
    pub z: f64,
    pub symdiff_exact: f64,
    pub symdiff_lower: f64,
    pub symdiff_upper: f64,
    pub symdiff_mc: f64,
    pub symdiff_mc_stderr: f64,
    pub covering_error: f64,
    pub n_points: usize,
    pub degenerate_flag: u8,
}

/// Settings shared by every realization of an oracle comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub body: ConvexBody,
    pub lambda: f64,
    pub replications: usize,
    pub scheme: QueryScheme,
    pub query_factor: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Realization `r` uses replication id `stream_offset + r`.
    pub stream_offset: u64,
}

/// Compares both estimators realization by realization. With
/// `stream_offset = i << 32` the realizations are those of a campaign's
/// grid point `i`.
pub fn oracle_comparison(config: &OracleConfig) -> Result<Vec<OracleRow>> {
    let body = &config.body;
    if body.dim() != 2 {
        return Err(Error::Unsupported(format!(
            "exact comparison needs d = 2, got d = {}",
            body.dim()
        )));
    }
    let windows = EstimatorWindows::new(body, config.lambda, config.epsilon)?;
    let plan = QueryPlan::scaled(config.scheme, config.query_factor, config.lambda, body);
    (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let id = config.stream_offset + r as u64;
            let sample = sample_poisson(&windows.process, config.lambda, derive_stream(config.seed, id, role::PROCESS)?)?;
            if sample.is_empty() {
                return Err(Error::EmptySample);
            }
            let index = NnIndex::build(&sample)?;
            let qs = derive_stream(config.seed, id, role::QUERY)?;
            let mc = estimate_realization(body, &sample, Some(&index), &windows, &plan, qs)?;
            let ex = pv_exact(body, &sample, &windows.outer)?;
            let diff = mc.pv.value - ex.pv_area;
            let z = if diff == 0.0 {
                0.0
            } else {
                diff / mc.pv.mc_stderr
            };
            Ok(OracleRow {
                replication: r,
                lambda: config.lambda,
                pv_exact: ex.pv_area,
                pv_mc: mc.pv.value,
                mc_stderr: mc.pv.mc_stderr,
                z,
                symdiff_exact: ex.symdiff_area,
                symdiff_lower: ex.symdiff_lower,
                symdiff_upper: ex.symdiff_upper,
                symdiff_mc: mc.symdiff.value,
                symdiff_mc_stderr: mc.symdiff.mc_stderr,
                covering_error: ex.covering_error,
                n_points: sample.len(),
                degenerate_flag: Degeneracy::of(body, &sample).code(),
            })
        })
        .collect()
}
