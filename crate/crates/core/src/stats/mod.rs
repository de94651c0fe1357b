//! Summary statistics, the normality test and the scaling fit used to check
//! campaign output.

mod campaign;
mod oracle;
mod small_body;

pub use campaign::{
    replicate, replication_id, run_campaign, CampaignConfig, CampaignResult, CampaignSummary, EstimatorChoice,
    LambdaSummary, ReplicationRow, ShapeReport, MIN_EXPECTED_IN_BODY, SCHEMA,
};
pub use oracle::{oracle_comparison, OracleConfig, OracleRow};
pub use small_body::{small_body_experiment, SmallBodyConfig, SmallBodyRow, SmallBodyTable};

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};

/// Mean and unbiased (n - 1) variance.
pub fn mean_variance(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: values.len(),
        });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok((mean, ss / (n - 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Adjusted Fisher-Pearson coefficient `G1`.
    pub skewness: f64,
    /// Bias-adjusted sample excess kurtosis `G2`.
    pub excess_kurtosis: f64,
}

/// Population central moments `(m2, m3, m4)`.
fn central_moments(values: &[f64], mean: f64) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in values {
        let c = v - mean;
        let c2 = c * c;
        m2 += c2;
        m3 += c2 * c;
        m4 += c2 * c2;
    }
    (m2 / n, m3 / n, m4 / n)
}

pub fn moments(values: &[f64]) -> Result<Moments> {
    if values.len() < 4 {
        return Err(Error::TooFewSamples {
            needed: 4,
            got: values.len(),
        });
    }
    let n = values.len() as f64;
    let (mean, variance) = mean_variance(values)?;
    let (m2, m3, m4) = central_moments(values, mean);
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        let g1 = m3 / m2.powf(1.5);
        let g2 = m4 / (m2 * m2) - 3.0;
        (
            g1 * (n * (n - 1.0)).sqrt() / (n - 2.0),
            ((n + 1.0) * g2 + 6.0) * (n - 1.0) / ((n - 2.0) * (n - 3.0)),
        )
    } else {
        (0.0, 0.0)
    };
    Ok(Moments {
        mean,
        variance,
        skewness,
        excess_kurtosis,
    })
}

/// Jackknife standard error of the unbiased sample variance.
pub fn jackknife_variance_se(values: &[f64]) -> Result<f64> {
    if values.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: values.len(),
        });
    }
    let n = values.len() as f64;
    let (mean, _) = mean_variance(values)?;
    let s1: f64 = values.iter().map(|v| v - mean).sum();
    let s2: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let m = n - 1.0;
    let loo: Vec<f64> = values
        .iter()
        .map(|v| {
            let c = v - mean;
            let a = s1 - c;
            ((s2 - c * c) - a * a / m) / (m - 1.0)
        })
        .collect();
    let bar = loo.iter().sum::<f64>() / n;
    Ok(((n - 1.0) / n * loo.iter().map(|v| (v - bar).powi(2)).sum::<f64>()).sqrt())
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `P(K > t)` for the limiting Kolmogorov distribution.
pub fn kolmogorov_survival(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 1.18 {
        // Theta-function form converges fast for small t.
        let c = (2.0 * std::f64::consts::PI).sqrt() / t;
        let e = -std::f64::consts::PI.powi(2) / (8.0 * t * t);
        let s: f64 = (1..=8).map(|k| ((2 * k - 1) as f64).powi(2) * e).map(f64::exp).sum();
        (1.0 - c * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * t * t).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    #[serde(rename = "D")]
    pub d: f64,
    pub p: f64,
    pub n: usize,
}

/// One-sample Kolmogorov-Smirnov test against the standard normal.
///
/// The p-value uses the limiting distribution at `(sqrt(n) + 0.12 + 0.11 / sqrt(n)) D`.
/// When the values were standardized with estimated mean and deviation the
/// p-value is conservative.
pub fn ks_normal(values: &[f64]) -> Result<KsResult> {
    if values.len() < 50 {
        return Err(Error::TooFewSamples {
            needed: 50,
            got: values.len(),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        let f = normal_cdf(v);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    Ok(KsResult {
        d,
        p: kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d),
        n: sorted.len(),
    })
}

/// `(v - center) / scale` for each value.
pub fn standardize(values: &[f64], center: f64, scale: f64) -> Vec<f64> {
    values.iter().map(|v| (v - center) / scale).collect()
}

/// Least-squares fit of `log(variance) = intercept + slope * log(lambda)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_se: f64,
}

pub fn fit_scaling(lambdas: &[f64], variances: &[f64]) -> Result<ScalingFit> {
    if lambdas.len() != variances.len() {
        return Err(Error::InvalidArgument(format!(
            "{} grid points but {} variances",
            lambdas.len(),
            variances.len()
        )));
    }
    if lambdas.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: lambdas.len(),
        });
    }
    if let Some(i) = variances.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::NonPositiveVariance(i));
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::InvalidIntensity(*l));
    }
    let x: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let y: Vec<f64> = variances.iter().map(|v| v.ln()).collect();
    log_log_fit(&x, &y)
}

/// Ordinary least squares of `y` on `x`.
pub(crate) fn log_log_fit(x: &[f64], y: &[f64]) -> Result<ScalingFit> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("fit needs at least two distinct abscissae".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_se = if x.len() > 2 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(ScalingFit {
        slope,
        intercept,
        r2,
        slope_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    use statrs::function::erf::erfc_inv;

    fn probit(p: f64) -> f64 {
        -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
    }

    #[test]
    fn two_point_variance() {
        assert_eq!(mean_variance(&[-1.0, 1.0]).unwrap(), (0.0, 2.0));
        assert!(mean_variance(&[1.0]).is_err());
        assert!(moments(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn symmetric_data_has_zero_skew() {
        let v = [-3.0, -1.0, -0.5, 0.0, 0.5, 1.0, 3.0];
        let m = moments(&v).unwrap();
        assert!(m.mean.abs() < 1e-15);
        assert!(m.skewness.abs() < 1e-14);
    }

    #[test]
    fn uniform_grid_moments() {
        let n = 101usize;
        let v: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        let m = moments(&v).unwrap();
        let nf = n as f64;
        assert_relative_eq!(m.mean, 51.0);
        assert_relative_eq!(m.variance, nf * (nf + 1.0) / 12.0, max_relative = 1e-13);
        let (m2, _, m4) = central_moments(&v, m.mean);
        let g2 = m4 / (m2 * m2) - 3.0;
        assert_relative_eq!(g2, -6.0 * (nf * nf + 1.0) / (5.0 * (nf * nf - 1.0)), max_relative = 1e-12);
        assert!(m.skewness.abs() < 1e-12);
    }

    #[test]
    fn skewed_data_sign() {
        let v = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 10.0];
        assert!(moments(&v).unwrap().skewness > 1.0);
    }

    #[test]
    fn jackknife_matches_bruteforce() {
        let v = [0.3, 1.7, -0.2, 2.5, 0.9, 1.1, -1.4, 0.05];
        let n = v.len() as f64;
        let loo: Vec<f64> = (0..v.len())
            .map(|i| {
                let rest: Vec<f64> = v.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| *x).collect();
                mean_variance(&rest).unwrap().1
            })
            .collect();
        let bar = loo.iter().sum::<f64>() / n;
        let expected = ((n - 1.0) / n * loo.iter().map(|x| (x - bar).powi(2)).sum::<f64>()).sqrt();
        assert_relative_eq!(jackknife_variance_se(&v).unwrap(), expected, max_relative = 1e-12);
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert_relative_eq!(normal_cdf(1.0), 0.841_344_746_068_542_9, max_relative = 1e-14);
        assert_relative_eq!(normal_cdf(-3.0), 0.001_349_898_031_630_094_6, max_relative = 1e-12);
    }

    #[test]
    fn kolmogorov_branches_agree() {
        for t in [1.1, 1.15, 1.18, 1.2, 1.3] {
            let s: f64 = (1..=100)
                .map(|k| {
                    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                    sign * (-2.0 * (k * k) as f64 * t * t).exp()
                })
                .sum::<f64>()
                * 2.0;
            assert_relative_eq!(kolmogorov_survival(t), s, max_relative = 1e-10);
        }
        assert_relative_eq!(kolmogorov_survival(1.358_098_8), 0.05, max_relative = 1e-5);
        assert_relative_eq!(kolmogorov_survival(0.5), 0.963_945_243_664_875_3, max_relative = 1e-9);
    }

    #[test]
    fn ks_on_exact_quantiles() {
        let n = 1000;
        let v: Vec<f64> = (1..=n).map(|i| probit((i as f64 - 0.5) / n as f64)).collect();
        let r = ks_normal(&v).unwrap();
        assert!(r.d < 0.002);
        assert!(r.p > 0.99);
    }

    #[test]
    fn ks_on_point_mass() {
        let r = ks_normal(&[0.3; 60]).unwrap();
        assert!(r.d >= 0.5);
        assert!(ks_normal(&[0.0; 49]).is_err());
    }

    #[test]
    fn ks_rejects_shifted_sample() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..500)
            .map(|_| StandardNormal.sample(&mut rng))
            .map(|x: f64| x + 0.5)
            .collect();
        assert!(ks_normal(&v).unwrap().p < 1e-6);
    }

    #[test]
    fn planted_exponents_recovered() {
        let lambdas = [250.0, 500.0, 1000.0, 2000.0, 4000.0];
        for exponent in [-1.5, -4.0 / 3.0] {
            let v: Vec<f64> = lambdas.iter().map(|l: &f64| 0.37 * l.powf(exponent)).collect();
            let fit = fit_scaling(&lambdas, &v).unwrap();
            assert!((fit.slope - exponent).abs() < 1e-12);
            assert!((fit.intercept - 0.37f64.ln()).abs() < 1e-10);
            assert!(fit.slope_se < 1e-12);
        }
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(
            fit_scaling(&[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::TooFewSamples { .. })
        ));
        assert_eq!(
            fit_scaling(&[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0]),
            Err(Error::NonPositiveVariance(1))
        );
    }
}
