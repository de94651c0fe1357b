use pv_lab::geometry::Window;
use pv_lab::process::{derive_stream, role, sample_poisson, PointSample, RngStream};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn unit_square() -> Window {
    Window::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
}

#[test]
fn counts_have_poisson_dispersion() {
    let w = unit_square();
    let counts: Vec<f64> = (0..100_000u64)
        .map(|k| sample_poisson(&w, 50.0, RngStream::new(3, k)).unwrap().len() as f64)
        .collect();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let ratio = var / mean;
    assert!((0.97..=1.03).contains(&ratio), "dispersion {ratio}");
    assert!((mean - 50.0).abs() < 4.0 * (50.0 / n).sqrt(), "mean {mean}");
}

#[test]
fn large_means_use_the_right_count() {
    let w = Window::new(vec![0.0; 3], vec![2.0, 1.0, 1.0]).unwrap();
    let counts: Vec<f64> = (0..400u64)
        .map(|k| sample_poisson(&w, 5e4, RngStream::new(4, k)).unwrap().len() as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    assert!((mean - 1e5).abs() < 4.0 * (1e5f64 / 400.0).sqrt(), "mean {mean}");
}

#[test]
fn pooled_points_are_uniform() {
    let w = Window::new(vec![-1.0, 2.0], vec![3.0, 4.0]).unwrap();
    let mut bins = [0f64; 16];
    for k in 0..200u64 {
        let s = sample_poisson(&w, 10.0, RngStream::new(5, k)).unwrap();
        for p in s.points() {
            let i = (((p[0] + 1.0) / 4.0 * 4.0) as usize).min(3);
            let j = (((p[1] - 2.0) / 2.0 * 4.0) as usize).min(3);
            bins[4 * i + j] += 1.0;
        }
    }
    let total: f64 = bins.iter().sum();
    let e = total / 16.0;
    let chi2: f64 = bins.iter().map(|o| (o - e).powi(2) / e).sum();
    let p = 1.0 - ChiSquared::new(15.0).unwrap().cdf(chi2);
    assert!(p > 0.001, "chi2 {chi2}, p {p}");
}

#[test]
fn points_lie_in_the_window() {
    let w = Window::new(vec![-0.5, 0.0, 1.0], vec![0.5, 0.1, 3.0]).unwrap();
    let s = sample_poisson(&w, 2000.0, RngStream::new(6, 0)).unwrap();
    assert!(s.len() > 0);
    assert!(s.points().all(|p| w.contains(p)));
    assert_eq!(s.dim(), 3);
}

#[test]
fn same_stream_same_sample_under_any_schedule() {
    let w = unit_square();
    let sample = |k: u64| {
        sample_poisson(&w, 300.0, derive_stream(9, k, role::PROCESS).unwrap())
            .unwrap()
            .coords()
            .to_vec()
    };
    let serial: Vec<Vec<f64>> = (0..64).map(sample).collect();
    let parallel: Vec<Vec<f64>> = (0..64u32).into_par_iter().map(|k| sample(k as u64)).collect();
    assert_eq!(serial, parallel);
    assert_ne!(serial[0], serial[1]);
}

#[test]
fn streams_are_distinct_per_role_and_replication() {
    let mut seen = std::collections::HashSet::new();
    for rep in 0..50 {
        for r in 0..16 {
            assert!(seen.insert(derive_stream(1, rep, r).unwrap().stream));
        }
    }
    assert!(derive_stream(1, 0, 16).is_err());
}

#[test]
fn explicit_points_are_validated() {
    let w = unit_square();
    assert!(PointSample::from_points(&[vec![0.5, 0.5]], w.clone(), 1.0).is_ok());
    assert!(PointSample::from_points(&[vec![0.5, 0.5, 0.5]], w.clone(), 1.0).is_err());
    assert!(sample_poisson(&w, -1.0, RngStream::new(0, 0)).is_err());
    assert!(sample_poisson(&w, f64::NAN, RngStream::new(0, 0)).is_err());
}
