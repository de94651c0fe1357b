//! Simulation lab for the Poisson-Voronoi approximation of convex bodies.
//!
//! For a homogeneous Poisson process `eta` of intensity `lambda` and a convex
//! body `K`, the approximation `A(K)` is the union of Voronoi cells whose
//! nuclei lie in `K`, and `PV(K) = Vol(A(K))`. The crate estimates `PV(K)`
//! and the symmetric difference by Monte Carlo in any dimension and exactly
//! in the plane, runs replicated campaigns, and estimates the first two
//! chaos kernels of `PV(K)`.

pub mod chaos;
pub mod config;
pub mod error;
pub mod estimator;
pub mod exact2d;
pub mod geometry;
pub mod nn;
pub mod process;
pub mod selftest;
pub mod stats;

pub use error::{Error, Result};
