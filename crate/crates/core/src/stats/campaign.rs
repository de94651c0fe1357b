use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_scaling, jackknife_variance_se, ks_normal, mean_variance, moments, standardize, KsResult, ScalingFit};
use crate::error::{Error, Result};
use crate::estimator::{estimate_realization, Degeneracy, EstimatorWindows, QueryPlan, QueryScheme};
use crate::exact2d::pv_exact;
use crate::geometry::{unit_ball_volume, ConvexBody};
use crate::nn::NnIndex;
use crate::process::{derive_stream, role, sample_poisson};

pub const SCHEMA: &str = "pv-lab/1";
/// Campaigns require `lambda * Vol(K)` at least this large.
pub const MIN_EXPECTED_IN_BODY: f64 = 20.0;
/// Replication id of replication `k` at intensity-grid index `i`: `(i << 32) + k`.
pub fn replication_id(grid_index: usize, replication: usize) -> u64 {
    ((grid_index as u64) << 32) + replication as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorChoice {
    Mc,
    Exact2d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub body: ConvexBody,
    pub lambdas: Vec<f64>,
    pub replications: usize,
    pub estimator: EstimatorChoice,
    pub scheme: QueryScheme,
    /// Queries per expected nucleus in `K`.
    pub query_factor: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        self.body.validate()?;
        if self.replications < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: self.replications,
            });
        }
        if self.lambdas.is_empty() {
            return Err(Error::InvalidArgument("intensity grid is empty".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidIntensity(*l));
        }
        let vol = self.body.volume();
        let lmin = self.lambdas.iter().copied().fold(f64::INFINITY, f64::min);
        if lmin * vol < MIN_EXPECTED_IN_BODY {
            return Err(Error::InvalidArgument(format!(
                "lambda * Vol(K) = {} is below {MIN_EXPECTED_IN_BODY}; use the small-body experiment for this regime",
                lmin * vol
            )));
        }
        if self.estimator == EstimatorChoice::Exact2d && self.body.dim() != 2 {
            return Err(Error::Unsupported(format!(
                "exact estimator needs d = 2, got d = {}",
                self.body.dim()
            )));
        }
        if !(self.query_factor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "query factor must be positive, got {}",
                self.query_factor
            )));
        }
        Ok(())
    }

    /// FNV-1a hash of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).unwrap_or_default();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub replication: usize,
    pub lambda: f64,
    pub pv: f64,
    pub symdiff: f64,
    pub mc_stderr: f64,
    pub n_points: usize,
    /// 0 regular, 1 no nucleus in `K`, 2 no nucleus outside `K`.
    pub degenerate_flag: u8,
    pub seed: u64,
    /// Stream of the process sample; queries use `stream + 1`.
    pub stream: u64,
}

/// One replication at intensity `lambda` under replication id `rep_id`.
pub fn replicate(
    body: &ConvexBody,
    lambda: f64,
    rep_id: u64,
    replication: usize,
    estimator: EstimatorChoice,
    scheme: QueryScheme,
    query_factor: f64,
    epsilon: f64,
    seed: u64,
) -> Result<ReplicationRow> {
    let windows = EstimatorWindows::new(body, lambda, epsilon)?;
    let ps = derive_stream(seed, rep_id, role::PROCESS)?;
    let sample = sample_poisson(&windows.process, lambda, ps)?;
    let degeneracy = Degeneracy::of(body, &sample);
    let (pv, symdiff, mc_stderr) = match estimator {
        EstimatorChoice::Mc => {
            let index = if sample.is_empty() {
                None
            } else {
                Some(NnIndex::build(&sample)?)
            };
            let plan = QueryPlan::scaled(scheme, query_factor, lambda, body);
            let qs = derive_stream(seed, rep_id, role::QUERY)?;
            let r = estimate_realization(body, &sample, index.as_ref(), &windows, &plan, qs)?;
            (r.pv.value, r.symdiff.value, r.pv.mc_stderr)
        }
        EstimatorChoice::Exact2d => {
            if sample.is_empty() {
                (0.0, body.volume(), 0.0)
            } else {
                let e = pv_exact(body, &sample, &windows.outer)?;
                (e.pv_area, e.symdiff_area, 0.0)
            }
        }
    };
    Ok(ReplicationRow {
        replication,
        lambda,
        pv,
        symdiff,
        mc_stderr,
        n_points: sample.len(),
        degenerate_flag: degeneracy.code(),
        seed,
        stream: ps.stream,
    })
}

/// Per-intensity statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSummary {
    pub lambda: f64,
    pub replications: usize,
    pub mean: f64,
    /// Standard error of the grand mean.
    pub mean_se: f64,
    /// `(mean - Vol(K)) / mean_se`.
    pub z_mean: f64,
    /// Unbiased sample variance of the PV values.
    pub var: f64,
    pub var_se: f64,
    /// Mean squared query-sampling error of one replication.
    pub mc_var: f64,
    /// `var - mc_var`: the variance of PV itself.
    pub var_pv: f64,
    pub skew: Option<f64>,
    pub kurt: Option<f64>,
    /// Self-standardized values against N(0, 1).
    pub ks: Option<KsResult>,
    #[serde(rename = "ks_D")]
    pub ks_d: Option<f64>,
    pub ks_p: Option<f64>,
    /// Values standardized by `Vol(K)` and `sqrt(var_pv)`.
    pub ks_raw: Option<KsResult>,
    pub n_degenerate: usize,
    pub mean_symdiff: f64,
}

/// `var_pv` against the intensity shapes of the two-sided variance bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeReport {
    /// `var_pv * lambda^(1 + 1/d)` per grid point.
    pub scaled_var: Vec<f64>,
    /// max / min of `scaled_var`.
    pub scaled_var_spread: f64,
    /// `var_pv / sum_i kappa_{d-i} V_i(K) lambda^(-2 + i/d)` per grid point.
    pub upper_constant: Vec<f64>,
    pub upper_constant_spread: f64,
}

impl ShapeReport {
    fn new(body: &ConvexBody, lambdas: &[f64], var: &[f64]) -> Self {
        let d = body.dim();
        let v = body.intrinsic_volumes();
        let scaled: Vec<f64> = lambdas
            .iter()
            .zip(var)
            .map(|(l, s)| s * l.powf(1.0 + 1.0 / d as f64))
            .collect();
        let upper: Vec<f64> = lambdas
            .iter()
            .zip(var)
            .map(|(l, s)| {
                let shape: f64 = (0..d)
                    .map(|i| unit_ball_volume(d - i) * v[i] * l.powf(-2.0 + i as f64 / d as f64))
                    .sum();
                s / shape
            })
            .collect();
        let spread = |x: &[f64]| {
            let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
            hi / lo
        };
        Self {
            scaled_var_spread: spread(&scaled),
            upper_constant_spread: spread(&upper),
            scaled_var: scaled,
            upper_constant: upper,
        }
    }
}

/// The `summary.json` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub schema: String,
    pub seed: u64,
    pub fingerprint: String,
    pub volume: f64,
    pub per_lambda: Vec<LambdaSummary>,
    /// Fit of `var_pv` on the intensity grid.
    pub fit: Option<ScalingFit>,
    /// Fit of the raw sample variance.
    pub fit_raw: Option<ScalingFit>,
    pub shape: Option<ShapeReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub config: CampaignConfig,
    /// Rows grouped by intensity, replications in order.
    pub rows: Vec<ReplicationRow>,
    pub summary: CampaignSummary,
}

impl CampaignResult {
    pub fn values(&self, lambda_index: usize) -> Vec<f64> {
        let r = self.config.replications;
        self.rows[lambda_index * r..(lambda_index + 1) * r]
            .iter()
            .map(|row| row.pv)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        Ok(())
    }
}

fn summarize(body: &ConvexBody, lambda: f64, rows: &[ReplicationRow]) -> Result<LambdaSummary> {
    let values: Vec<f64> = rows.iter().map(|r| r.pv).collect();
    let n = values.len();
    let (mean, var) = mean_variance(&values)?;
    let vol = body.volume();
    let mean_se = (var / n as f64).sqrt();
    let mc_var = rows.iter().map(|r| r.mc_stderr.powi(2)).sum::<f64>() / n as f64;
    let var_pv = var - mc_var;
    let m = moments(&values).ok();
    let sd = var.sqrt();
    let ks = (sd > 0.0)
        .then(|| ks_normal(&standardize(&values, mean, sd)).ok())
        .flatten();
    let ks_raw = (var_pv > 0.0)
        .then(|| ks_normal(&standardize(&values, vol, var_pv.sqrt())).ok())
        .flatten();
    Ok(LambdaSummary {
        lambda,
        replications: n,
        mean,
        mean_se,
        z_mean: if mean_se > 0.0 { (mean - vol) / mean_se } else { 0.0 },
        var,
        var_se: jackknife_variance_se(&values).unwrap_or(f64::NAN),
        mc_var,
        var_pv,
        skew: m.map(|m| m.skewness),
        kurt: m.map(|m| m.excess_kurtosis),
        ks_d: ks.map(|k| k.d),
        ks_p: ks.map(|k| k.p),
        ks,
        ks_raw,
        n_degenerate: rows.iter().filter(|r| r.degenerate_flag != 0).count(),
        mean_symdiff: rows.iter().map(|r| r.symdiff).sum::<f64>() / n as f64,
    })
}

/// Runs `replications` independent realizations at every intensity.
///
/// Replication `r` at grid index `i` uses replication id `(i << 32) + r`, so
/// results do not depend on thread count or scheduling.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignResult> {
    config.validate()?;
    let r = config.replications;
    let jobs: Vec<(usize, usize)> = (0..config.lambdas.len())
        .flat_map(|i| (0..r).map(move |k| (i, k)))
        .collect();
    let rows: Vec<ReplicationRow> = jobs
        .par_iter()
        .map(|&(i, k)| {
            replicate(
                &config.body,
                config.lambdas[i],
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

    let per_lambda: Vec<LambdaSummary> = config
        .lambdas
        .iter()
        .enumerate()
        .map(|(i, &l)| summarize(&config.body, l, &rows[i * r..(i + 1) * r]))
        .collect::<Result<_>>()?;
    let var_pv: Vec<f64> = per_lambda.iter().map(|s| s.var_pv).collect();
    let var_raw: Vec<f64> = per_lambda.iter().map(|s| s.var).collect();
    let fit = fit_scaling(&config.lambdas, &var_pv).ok();
    let fit_raw = fit_scaling(&config.lambdas, &var_raw).ok();
    let shape = var_pv
        .iter()
        .all(|v| *v > 0.0)
        .then(|| ShapeReport::new(&config.body, &config.lambdas, &var_pv));
    let summary = CampaignSummary {
        schema: SCHEMA.to_string(),
        seed: config.seed,
        fingerprint: config.fingerprint(),
        volume: config.body.volume(),
        per_lambda,
        fit,
        fit_raw,
        shape,
    };
    Ok(CampaignResult {
        config: config.clone(),
        rows,
        summary,
    })
}
