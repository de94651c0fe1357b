//! Built-in property suite: nearest-neighbour oracle, covering identity,
//! Steiner formula, exact scaling fits and campaign determinism.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::estimator::QueryScheme;
use crate::exact2d::voronoi_cells_clipped;
use crate::geometry::{ConvexBody, Window};
use crate::nn::{nearest_bruteforce, NnIndex};
use crate::process::{derive_stream, role, sample_poisson, RngStream};
use crate::stats::{fit_scaling, run_campaign, CampaignConfig, EstimatorChoice};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn stream(seed: u64, k: u64) -> RngStream {
    derive_stream(seed, k, role::SELFTEST).expect("selftest stream")
}

/// 100 random instances in d = 2 and 3, 1000 queries each, compared with a
/// linear scan for index and distance.
pub fn nn_oracle(seed: u64) -> Check {
    let mut mismatches = 0;
    let mut queries = 0;
    for inst in 0..100u64 {
        let mut rng = stream(seed, inst).generator();
        let d = 2 + (inst % 2) as usize;
        let w = Window::new(vec![0.0; d], vec![1.0; d]).unwrap();
        let lambda = 10f64.powf(rng.random_range(0.0..3.3));
        let Ok(s) = sample_poisson(&w, lambda, stream(seed, 1000 + inst)) else {
            mismatches += 1;
            continue;
        };
        if s.is_empty() {
            continue;
        }
        let idx = NnIndex::build(&s).unwrap();
        for _ in 0..1000 {
            let y: Vec<f64> = (0..d).map(|_| rng.random_range(-0.25..1.25)).collect();
            queries += 1;
            if nearest_bruteforce(s.coords(), d, &y).ok() != Some(idx.nearest(&y)) {
                mismatches += 1;
            }
        }
    }
    Check {
        name: "nn_oracle".into(),
        passed: mismatches == 0,
        detail: format!("{mismatches} mismatches in {queries} queries"),
    }
}

/// Clipped Voronoi cells of 100 random site sets (1 to 5000 sites) tile the
/// window to within 1e-9 relative area.
pub fn covering_identity(seed: u64) -> Check {
    let w = Window::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for inst in 0..100u64 {
        let mut rng = stream(seed, 2000 + inst).generator();
        let n = (10f64.powf(rng.random_range(0.0..5000f64.log10())) as usize).clamp(1, 5000);
        let sites: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
        match voronoi_cells_clipped(&sites, &w) {
            Ok(cells) => {
                let total: f64 = cells.iter().map(|c| c.area()).sum();
                worst = worst.max((total - 1.0).abs());
            }
            Err(_) => failures += 1,
        }
    }
    Check {
        name: "covering_identity".into(),
        passed: failures == 0 && worst <= 1e-9,
        detail: format!("max relative area error {worst:.3e}, {failures} construction failures"),
    }
}

/// Monte Carlo volume of `K + B(0, r)` against the Steiner polynomial for
/// planar bodies at `r` in {0.1, 0.5}, within 4 standard errors.
pub fn steiner_2d(seed: u64) -> Check {
    let bodies = [
        ConvexBody::ball(vec![0.2, -0.1], 0.8).unwrap(),
        ConvexBody::axis_box(vec![0.0, 0.0], vec![1.0, 0.4]).unwrap(),
        ConvexBody::ellipse([0.0, 0.0], 1.2, 0.5).unwrap(),
        ConvexBody::polygon(vec![[0.0, 0.0], [1.5, 0.2], [0.7, 1.1]]).unwrap(),
    ];
    let n = 400_000;
    let mut worst_z: f64 = 0.0;
    let mut k = 0;
    for body in &bodies {
        for r in [0.1, 0.5] {
            let w = body.dilated_window(r).unwrap();
            let mut rng = stream(seed, 3000 + k).generator();
            k += 1;
            let mut y = [0.0; 2];
            let mut hits = 0usize;
            for _ in 0..n {
                w.from_unit(&[rng.random(), rng.random()], &mut y);
                if body.contains(&y) || body.boundary_distance(&y) <= r {
                    hits += 1;
                }
            }
            let p = hits as f64 / n as f64;
            let est = w.volume() * p;
            let se = w.volume() * (p * (1.0 - p) / n as f64).sqrt();
            worst_z = worst_z.max((est - body.parallel_volume(r)).abs() / se);
        }
    }
    Check {
        name: "steiner_2d".into(),
        passed: worst_z <= 4.0,
        detail: format!("max |z| = {worst_z:.2} over {k} cases"),
    }
}

/// Planted power laws are recovered to 1e-12.
pub fn synthetic_fit() -> Check {
    let lambdas = [250.0, 500.0, 1000.0, 2000.0, 4000.0];
    let mut worst: f64 = 0.0;
    for exponent in [-1.5, -4.0 / 3.0, -1.25] {
        let v: Vec<f64> = lambdas.iter().map(|l: &f64| 2.5 * l.powf(exponent)).collect();
        match fit_scaling(&lambdas, &v) {
            Ok(fit) => worst = worst.max((fit.slope - exponent).abs()),
            Err(_) => worst = f64::INFINITY,
        }
    }
    Check {
        name: "synthetic_fit".into(),
        passed: worst <= 1e-12,
        detail: format!("max slope error {worst:.3e}"),
    }
}

/// Two runs of a small campaign produce byte-identical CSV.
pub fn campaign_determinism(seed: u64) -> Check {
    let config = CampaignConfig {
        body: ConvexBody::ball(vec![0.0, 0.0], 1.0).unwrap(),
        lambdas: vec![100.0, 300.0],
        replications: 8,
        estimator: EstimatorChoice::Mc,
        scheme: QueryScheme::ControlVariate,
        query_factor: 16.0,
        epsilon: 1e-6,
        seed,
    };
    let run = || -> crate::Result<Vec<u8>> {
        let mut buf = Vec::new();
        run_campaign(&config)?.write_csv(&mut buf)?;
        Ok(buf)
    };
    let (passed, detail) = match (run(), run()) {
        (Ok(a), Ok(b)) => (a == b, format!("{} bytes per run", a.len())),
        (Err(e), _) | (_, Err(e)) => (false, e.to_string()),
    };
    Check {
        name: "campaign_determinism".into(),
        passed,
        detail,
    }
}

pub fn run_selftest(seed: u64) -> SelftestReport {
    SelftestReport {
        seed,
        checks: vec![
            nn_oracle(seed),
            covering_identity(seed),
            steiner_2d(seed),
            synthetic_fit(),
            campaign_determinism(seed),
        ],
    }
}
