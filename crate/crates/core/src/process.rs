//! Homogeneous Poisson point process on a window, with reproducible streams.
//!
//! Every random draw in the crate comes from a [`RngStream`]: a ChaCha8
//! generator keyed by the master seed and positioned on an independent
//! 64-bit stream. Stream ids are derived as `replication * 16 + role`, so a
//! replication's process points, query points and nested draws never share
//! state and can be regenerated in isolation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Window;

/// Number of distinct roles per replication.
pub const ROLES_PER_REPLICATION: u64 = 16;

/// Stream roles. Values are part of the reproducibility contract.
pub mod role {
    pub const PROCESS: u64 = 0;
    pub const QUERY: u64 = 1;
    pub const CHAOS_PROCESS: u64 = 2;
    pub const CHAOS_QUERY: u64 = 3;
    pub const CHAOS_EVAL_POINTS: u64 = 4;
    pub const PAIRS: u64 = 5;
    pub const SELFTEST: u64 = 15;
}

/// Upper bound on the expected point count of one sample.
pub const MAX_EXPECTED_POINTS: f64 = 2_147_483_648.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Maps `(replication, role)` injectively onto a stream id.
pub fn derive_stream(master: u64, replication: u64, role: u64) -> Result<RngStream> {
    if role >= ROLES_PER_REPLICATION {
        return Err(Error::RoleOutOfRange(role));
    }
    let stream = replication
        .checked_mul(ROLES_PER_REPLICATION)
        .and_then(|s| s.checked_add(role))
        .ok_or_else(|| {
            Error::InvalidArgument(format!("replication {replication} overflows the stream space"))
        })?;
    Ok(RngStream::new(master, stream))
}

/// One realization of the process restricted to a window.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSample {
    coords: Vec<f64>,
    dim: usize,
    window: Window,
    lambda: f64,
    rng: RngStream,
}

impl PointSample {
    /// Wraps explicit points, e.g. hand-built configurations in tests.
    pub fn from_points(points: &[Vec<f64>], window: Window, lambda: f64) -> Result<Self> {
        let dim = window.dim();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if !window.contains(p) {
                return Err(Error::InvalidArgument(format!("point {p:?} lies outside the window")));
            }
            coords.extend_from_slice(p);
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidIntensity(lambda));
        }
        Ok(Self {
            coords,
            dim,
            window,
            lambda,
            rng: RngStream::new(0, 0),
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

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Flat coordinate buffer, `dim` values per point.
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rng_record(&self) -> RngStream {
        self.rng
    }
}

/// Draws `N ~ Poisson(lambda * Vol(window))` i.i.d. uniform points.
pub fn sample_poisson(window: &Window, lambda: f64, rng: RngStream) -> Result<PointSample> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidIntensity(lambda));
    }
    let volume = window.volume();
    let mean = lambda * volume;
    if mean >= MAX_EXPECTED_POINTS {
        return Err(Error::IntensityOverflow { lambda, volume });
    }
    let mut gen = rng.generator();
    let count = Poisson::new(mean)
        .map_err(|e| Error::InvalidArgument(format!("poisson mean {mean}: {e}")))?
        .sample(&mut gen) as usize;
    let dim = window.dim();
    let mut coords = Vec::with_capacity(count * dim);
    for _ in 0..count {
        for axis in 0..dim {
            let u: f64 = gen.random();
            coords.push(window.lower()[axis] + u * window.side(axis));
        }
    }
    Ok(PointSample {
        coords,
        dim,
        window: window.clone(),
        lambda,
        rng,
    })
}
