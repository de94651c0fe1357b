//! Experiment configuration: a flat JSON object describing the body, the
//! intensity grid and per-command settings.
//!
//! Every default is written back into the parsed value, so serializing an
//! [`ExperimentConfig`] yields a document that parses to the same experiment.

use serde::{Deserialize, Serialize};

use crate::estimator::{QueryScheme, DEFAULT_EPSILON, DEFAULT_QUERY_FACTOR};
use crate::geometry::ConvexBody;
use crate::stats::EstimatorChoice;

/// A configuration problem, located by a JSON path such as `lambda[2]`.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Ball,
    Box,
    Ellipse,
    Polygon,
}

/// Line scan of the first-order kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelScanConfig {
    /// Defaults to the body's bounding box extended by 20% along axis 0.
    pub start: Option<Vec<f64>>,
    pub end: Option<Vec<f64>>,
    pub points: usize,
    pub n_outer: usize,
    pub n_query: usize,
}

impl Default for KernelScanConfig {
    fn default() -> Self {
        Self {
            start: None,
            end: None,
            points: 40,
            n_outer: 400,
            n_query: crate::chaos::DEFAULT_N_QUERY,
        }
    }
}

/// Second-order kernel at explicit or random pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct F2ProbeConfig {
    /// Explicit pairs; when empty, `random_pairs` pairs are drawn.
    pub pairs: Vec<[Vec<f64>; 2]>,
    pub random_pairs: usize,
    pub max_separation: f64,
    pub n_outer: usize,
    pub n_query: usize,
}

impl Default for F2ProbeConfig {
    fn default() -> Self {
        Self {
            pairs: Vec::new(),
            random_pairs: 20,
            max_separation: 0.15,
            n_outer: 400,
            n_query: crate::chaos::DEFAULT_N_QUERY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FirstChaosConfig {
    pub n_eval: usize,
    pub n_outer: usize,
    pub n_query: usize,
}

impl Default for FirstChaosConfig {
    fn default() -> Self {
        Self {
            n_eval: 400,
            n_outer: 64,
            n_query: crate::chaos::DEFAULT_N_QUERY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmallBodyParams {
    pub radii: Vec<f64>,
    pub lambda: f64,
    pub replications: usize,
}

impl Default for SmallBodyParams {
    fn default() -> Self {
        Self {
            radii: vec![1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01],
            lambda: 25.0,
            replications: 20_000,
        }
    }
}

fn default_lambda() -> Vec<f64> {
    vec![1000.0]
}

fn default_replications() -> usize {
    100
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_query_factor() -> f64 {
    DEFAULT_QUERY_FACTOR
}

fn default_scheme() -> QueryScheme {
    QueryScheme::ControlVariate
}

fn default_estimator() -> EstimatorChoice {
    EstimatorChoice::Mc
}

fn default_out() -> String {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub shape: Shape,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_widths: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<[f64; 2]>>,
    #[serde(default = "default_lambda")]
    pub lambda: Vec<f64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorChoice,
    #[serde(default = "default_scheme")]
    pub query_scheme: QueryScheme,
    /// Queries per expected nucleus in `K`.
    #[serde(default = "default_query_factor")]
    pub query_factor: f64,
    #[serde(default = "default_out")]
    pub out: String,
    #[serde(default)]
    pub kernel_scan: KernelScanConfig,
    #[serde(default)]
    pub f2_probe: F2ProbeConfig,
    #[serde(default)]
    pub first_chaos: FirstChaosConfig,
    #[serde(default)]
    pub small_body: SmallBodyParams,
}

/// Parses and validates a JSON document, materializing every default.
pub fn parse_config(json: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(json);
    let mut config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::new(if path == "." { "$".into() } else { path }, e.into_inner().to_string())
    })?;
    config.resolve()?;
    Ok(config)
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(path, format!("must be positive and finite, got {v}")))
    }
}

fn at_least(path: &str, v: usize, min: usize) -> Result<(), ConfigError> {
    if v >= min {
        Ok(())
    } else {
        Err(ConfigError::new(path, format!("must be at least {min}, got {v}")))
    }
}

impl ExperimentConfig {
    /// Validates and fills defaults that depend on other fields.
    pub fn resolve(&mut self) -> Result<(), ConfigError> {
        let d = self.dim;
        if d < 2 {
            return Err(ConfigError::new("dim", format!("must be at least 2, got {d}")));
        }
        if matches!(self.shape, Shape::Ellipse | Shape::Polygon) && d != 2 {
            return Err(ConfigError::new(
                "dim",
                format!("unsupported combination: shape {:?} requires dim 2, got {d}", self.shape).to_lowercase(),
            ));
        }
        let require = |name: &str, present: bool| {
            if present {
                Ok(())
            } else {
                Err(ConfigError::new(name, format!("required for shape {:?}", self.shape).to_lowercase()))
            }
        };
        let stray = |name: &str, present: bool| {
            if present {
                Err(ConfigError::new(name, format!("not a parameter of shape {:?}", self.shape).to_lowercase()))
            } else {
                Ok(())
            }
        };
        match self.shape {
            Shape::Ball => {
                require("radius", self.radius.is_some())?;
                positive("radius", self.radius.unwrap_or(0.0))?;
                stray("half_widths", self.half_widths.is_some())?;
                stray("a", self.a.is_some())?;
                stray("b", self.b.is_some())?;
                stray("vertices", self.vertices.is_some())?;
            }
            Shape::Box => {
                require("half_widths", self.half_widths.is_some())?;
                let h = self.half_widths.as_ref().unwrap_or(&Vec::new()).clone();
                if h.len() != d {
                    return Err(ConfigError::new(
                        "half_widths",
                        format!("expected {d} entries, got {}", h.len()),
                    ));
                }
                for (i, v) in h.iter().enumerate() {
                    positive(&format!("half_widths[{i}]"), *v)?;
                }
                stray("radius", self.radius.is_some())?;
                stray("a", self.a.is_some())?;
                stray("b", self.b.is_some())?;
                stray("vertices", self.vertices.is_some())?;
            }
            Shape::Ellipse => {
                require("a", self.a.is_some())?;
                require("b", self.b.is_some())?;
                positive("a", self.a.unwrap_or(0.0))?;
                positive("b", self.b.unwrap_or(0.0))?;
                stray("radius", self.radius.is_some())?;
                stray("half_widths", self.half_widths.is_some())?;
                stray("vertices", self.vertices.is_some())?;
            }
            Shape::Polygon => {
                require("vertices", self.vertices.is_some())?;
                stray("radius", self.radius.is_some())?;
                stray("half_widths", self.half_widths.is_some())?;
                stray("a", self.a.is_some())?;
                stray("b", self.b.is_some())?;
                stray("center", self.center.is_some())?;
            }
        }
        if self.shape != Shape::Polygon {
            let c = self.center.get_or_insert_with(|| vec![0.0; d]);
            if c.len() != d {
                return Err(ConfigError::new("center", format!("expected {d} entries, got {}", c.len())));
            }
            if let Some(i) = c.iter().position(|v| !v.is_finite()) {
                return Err(ConfigError::new(format!("center[{i}]"), "must be finite"));
            }
        }
        let body = self.body_unchecked().map_err(|e| {
            let field = match self.shape {
                Shape::Polygon => "vertices",
                _ => "shape",
            };
            ConfigError::new(field, e.to_string())
        })?;

        if self.lambda.is_empty() {
            return Err(ConfigError::new("lambda", "must list at least one intensity"));
        }
        for (i, l) in self.lambda.iter().enumerate() {
            positive(&format!("lambda[{i}]"), *l)?;
        }
        at_least("replications", self.replications, 2)?;
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(ConfigError::new("epsilon", format!("must lie in (0, 1), got {}", self.epsilon)));
        }
        positive("query_factor", self.query_factor)?;
        if self.estimator == EstimatorChoice::Exact2d && d != 2 {
            return Err(ConfigError::new(
                "estimator",
                format!("unsupported combination: exact2d requires dim 2, got {d}"),
            ));
        }

        let ks = &mut self.kernel_scan;
        let bw = body.bounding_window();
        for (name, slot, pick) in [("kernel_scan.start", &mut ks.start, 0), ("kernel_scan.end", &mut ks.end, 1)] {
            let p = slot.get_or_insert_with(|| {
                let mut p: Vec<f64> = (0..d).map(|a| 0.5 * (bw.lower()[a] + bw.upper()[a])).collect();
                let ext = 0.6 * bw.side(0);
                p[0] += if pick == 0 { -ext } else { ext };
                p
            });
            if p.len() != d || p.iter().any(|v| !v.is_finite()) {
                return Err(ConfigError::new(name, format!("expected {d} finite coordinates")));
            }
        }
        at_least("kernel_scan.points", ks.points, 1)?;
        at_least("kernel_scan.n_outer", ks.n_outer, 2)?;
        at_least("kernel_scan.n_query", ks.n_query, 1)?;

        let fp = &self.f2_probe;
        for (i, pair) in fp.pairs.iter().enumerate() {
            for (j, p) in pair.iter().enumerate() {
                if p.len() != d || p.iter().any(|v| !v.is_finite()) {
                    return Err(ConfigError::new(
                        format!("f2_probe.pairs[{i}][{j}]"),
                        format!("expected {d} finite coordinates"),
                    ));
                }
            }
            if pair[0] == pair[1] {
                return Err(ConfigError::new(format!("f2_probe.pairs[{i}]"), "points must differ"));
            }
        }
        positive("f2_probe.max_separation", fp.max_separation)?;
        at_least("f2_probe.n_outer", fp.n_outer, 2)?;
        at_least("f2_probe.n_query", fp.n_query, 1)?;

        let fc = &self.first_chaos;
        at_least("first_chaos.n_eval", fc.n_eval, 2)?;
        at_least("first_chaos.n_outer", fc.n_outer, 2)?;
        at_least("first_chaos.n_query", fc.n_query, 1)?;

        let sb = &self.small_body;
        at_least("small_body.radii", sb.radii.len(), 2)?;
        for (i, r) in sb.radii.iter().enumerate() {
            positive(&format!("small_body.radii[{i}]"), *r)?;
        }
        if sb.radii.windows(2).any(|w| w[1] >= w[0]) {
            return Err(ConfigError::new("small_body.radii", "must be strictly decreasing"));
        }
        positive("small_body.lambda", sb.lambda)?;
        at_least("small_body.replications", sb.replications, 3)?;
        Ok(())
    }

    fn body_unchecked(&self) -> crate::Result<ConvexBody> {
        let center = || self.center.clone().unwrap_or_else(|| vec![0.0; self.dim]);
        match self.shape {
            Shape::Ball => ConvexBody::ball(center(), self.radius.unwrap_or(0.0)),
            Shape::Box => ConvexBody::axis_box(center(), self.half_widths.clone().unwrap_or_default()),
            Shape::Ellipse => {
                let c = center();
                ConvexBody::ellipse([c[0], c[1]], self.a.unwrap_or(0.0), self.b.unwrap_or(0.0))
            }
            Shape::Polygon => ConvexBody::polygon(self.vertices.clone().unwrap_or_default()),
        }
    }

    /// The body described by a resolved configuration.
    pub fn body(&self) -> ConvexBody {
        self.body_unchecked().expect("resolved configuration describes a valid body")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }
}
