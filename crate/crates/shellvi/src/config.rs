//! Flat key-value experiment configuration.
//!
//! The format is one `key = value` pair per line, `#` comments allowed.
//! Lists are whitespace-separated. Keys and defaults are documented in the
//! README; `chart`, `bounds`, `lambda`, and `mu` are required.

use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::{BuiltinChart, Chart, Edge, GeometryError, HalfSpace, Rect};
use crate::shell::{Lame, ShellError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("missing config key: {0}")]
    MissingKey(&'static str),
    #[error("invalid value for key `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("unknown config key: {0}")]
    UnknownKey(String),
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Shell(#[from] ShellError),
}

/// Parsed experiment configuration with validated invariants: the ε list
/// is strictly decreasing and positive, mesh sizes are at least 2, and the
/// half-space direction is a unit vector.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub chart: BuiltinChart,
    pub bounds: Rect,
    pub swap: bool,
    pub offset: Vector3<f64>,
    pub clamped_edges: Vec<Edge>,
    pub lambda: f64,
    pub mu: f64,
    pub eps: Vec<f64>,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub q: Vector3<f64>,
    /// Constant force components in pair order `(11, 22, 33, 23, 13, 12)`.
    pub force: [f64; 6],
    /// Hypothesis-check grid resolution.
    pub grid: (usize, usize),
    pub kkt_tol: f64,
    pub max_sweeps: usize,
    pub max_active_set_iters: usize,
    pub density_k: Vec<u32>,
    pub seed: u64,
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::InvalidValue {
        key: key.to_string(),
        reason: format!("cannot parse `{v}`"),
    })
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError> {
    v.split_whitespace().map(|tok| parse_num(key, tok)).collect()
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut chart = None;
        let mut bounds = None;
        let mut lambda = None;
        let mut mu = None;
        let mut swap = false;
        let mut offset = Vector3::zeros();
        let mut clamped_edges = vec![Edge::Bottom];
        let mut eps = vec![0.2, 0.1, 0.05, 0.025];
        let mut nx = 16usize;
        let mut ny = 16usize;
        let mut nz = 4usize;
        let mut q = Vector3::new(0.0, 0.0, 1.0);
        let mut force = [0.0; 6];
        let mut grid = (200usize, 200usize);
        let mut kkt_tol = 1e-8;
        let mut max_sweeps = 100_000usize;
        let mut max_active_set_iters = 500usize;
        let mut density_k = vec![4u32, 8, 16, 32];
        let mut seed = 42u64;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::InvalidValue {
                key: format!("line {}", lineno + 1),
                reason: "expected `key = value`".to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "chart" => {
                    chart = Some(BuiltinChart::parse(value).ok_or_else(|| {
                        ConfigError::InvalidValue {
                            key: key.into(),
                            reason: format!(
                                "`{value}` is not one of plate, sphere_cap, cylinder, hyperboloid"
                            ),
                        }
                    })?)
                }
                "bounds" => {
                    let v: Vec<f64> = parse_list(key, value)?;
                    if v.len() != 4 || v[0] >= v[1] || v[2] >= v[3] {
                        return Err(ConfigError::InvalidValue {
                            key: key.into(),
                            reason: "need `y1min y1max y2min y2max` with min < max".into(),
                        });
                    }
                    bounds = Some(Rect::new(v[0], v[1], v[2], v[3]));
                }
                "swap" => swap = parse_num(key, value)?,
                "offset" => {
                    let v: Vec<f64> = parse_list(key, value)?;
                    if v.len() != 3 {
                        return Err(ConfigError::InvalidValue {
                            key: key.into(),
                            reason: "need three components".into(),
                        });
                    }
                    offset = Vector3::new(v[0], v[1], v[2]);
                }
                "clamped_edges" => {
                    let mut edges = Vec::new();
                    for tok in value.split_whitespace() {
                        edges.push(match tok {
                            "bottom" => Edge::Bottom,
                            "top" => Edge::Top,
                            "left" => Edge::Left,
                            "right" => Edge::Right,
                            other => {
                                return Err(ConfigError::InvalidValue {
                                    key: key.into(),
                                    reason: format!("unknown edge `{other}`"),
                                })
                            }
                        });
                    }
                    if edges.is_empty() {
                        return Err(ConfigError::InvalidValue {
                            key: key.into(),
                            reason: "clamped edge set must be non-empty".into(),
                        });
                    }
                    clamped_edges = edges;
                }
                "lambda" => lambda = Some(parse_num(key, value)?),
                "mu" => mu = Some(parse_num(key, value)?),
                "eps" => eps = parse_list(key, value)?,
                "nx" => nx = parse_num(key, value)?,
                "ny" => ny = parse_num(key, value)?,
                "nz" => nz = parse_num(key, value)?,
                "q" => {
                    let v: Vec<f64> = parse_list(key, value)?;
                    if v.len() != 3 {
                        return Err(ConfigError::InvalidValue {
                            key: key.into(),
                            reason: "need three components".into(),
                        });
                    }
                    q = Vector3::new(v[0], v[1], v[2]);
                }
                "f11" => force[0] = parse_num(key, value)?,
                "f22" => force[1] = parse_num(key, value)?,
                "f33" => force[2] = parse_num(key, value)?,
                "f23" => force[3] = parse_num(key, value)?,
                "f13" => force[4] = parse_num(key, value)?,
                "f12" => force[5] = parse_num(key, value)?,
                "grid" => {
                    let v: Vec<usize> = parse_list(key, value)?;
                    if v.len() != 2 {
                        return Err(ConfigError::InvalidValue {
                            key: key.into(),
                            reason: "need two resolutions".into(),
                        });
                    }
                    grid = (v[0], v[1]);
                }
                "kkt_tol" => kkt_tol = parse_num(key, value)?,
                "max_sweeps" => max_sweeps = parse_num(key, value)?,
                "max_active_set_iters" => max_active_set_iters = parse_num(key, value)?,
                "density_k" => density_k = parse_list(key, value)?,
                "seed" => seed = parse_num(key, value)?,
                other => return Err(ConfigError::UnknownKey(other.to_string())),
            }
        }

        let cfg = ExperimentConfig {
            chart: chart.ok_or(ConfigError::MissingKey("chart"))?,
            bounds: bounds.ok_or(ConfigError::MissingKey("bounds"))?,
            swap,
            offset,
            clamped_edges,
            lambda: lambda.ok_or(ConfigError::MissingKey("lambda"))?,
            mu: mu.ok_or(ConfigError::MissingKey("mu"))?,
            eps,
            nx,
            ny,
            nz,
            q,
            force,
            grid,
            kkt_tol,
            max_sweeps,
            max_active_set_iters,
            density_k,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.eps.is_empty() || self.eps.iter().any(|e| *e <= 0.0) {
            return Err(ConfigError::InvalidValue {
                key: "eps".into(),
                reason: "list must be non-empty and positive".into(),
            });
        }
        if self.eps.windows(2).any(|w| w[0] <= w[1]) {
            return Err(ConfigError::InvalidValue {
                key: "eps".into(),
                reason: "list must be strictly decreasing".into(),
            });
        }
        if self.nx < 2 || self.ny < 2 || self.nz < 2 {
            return Err(ConfigError::InvalidValue {
                key: "nx/ny/nz".into(),
                reason: "mesh sizes must be at least 2".into(),
            });
        }
        if self.q.norm() <= 0.0 {
            return Err(ConfigError::InvalidValue {
                key: "q".into(),
                reason: "direction must be nonzero".into(),
            });
        }
        Ok(())
    }

    /// Builds the configured chart (built-in, optional parameter swap,
    /// optional translation).
    pub fn build_chart(&self) -> Result<Chart, ConfigError> {
        let mut chart = Chart::builtin(self.chart, self.bounds, &self.clamped_edges)?;
        if self.swap {
            chart = chart.swap_parameters();
        }
        if self.offset != Vector3::zeros() {
            chart = chart.translated(self.offset);
        }
        Ok(chart)
    }

    pub fn lame(&self) -> Result<Lame, ConfigError> {
        Ok(Lame::new(self.lambda, self.mu)?)
    }

    pub fn half_space(&self) -> Result<HalfSpace, ConfigError> {
        Ok(HalfSpace::new(self.q)?)
    }

    pub fn solver_config(&self) -> crate::solver::SolverConfig {
        crate::solver::SolverConfig {
            kkt_tol: self.kkt_tol,
            max_sweeps: self.max_sweeps,
            max_active_set_iters: self.max_active_set_iters,
            ..Default::default()
        }
    }

    pub fn force_field(&self) -> crate::fem::ForceField {
        crate::fem::ForceField::constants(self.force)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "
# cylinder sweep
chart = cylinder
bounds = 0.1 3.04 0.0 2.0
lambda = 1.0
mu = 1.0
";

    #[test]
    fn parse_minimal_with_defaults() {
        let cfg = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(cfg.chart, BuiltinChart::Cylinder);
        assert_eq!(cfg.eps, vec![0.2, 0.1, 0.05, 0.025]);
        assert_eq!(cfg.nx, 16);
        assert_eq!(cfg.clamped_edges, vec![Edge::Bottom]);
        cfg.build_chart().unwrap();
    }

    #[test]
    fn missing_key_is_reported_by_name() {
        let err = ExperimentConfig::parse("chart = plate\nbounds = 0 1 0 1\nmu = 1").unwrap_err();
        assert!(err.to_string().contains("lambda"), "{err}");
    }

    #[test]
    fn invalid_eps_list_rejected() {
        let text = format!("{BASE}\neps = 0.1 0.2");
        assert!(ExperimentConfig::parse(&text).is_err());
        let text = format!("{BASE}\neps = 0.1 -0.05");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{BASE}\nbogus = 1");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn swap_and_offset_compose() {
        let text = format!("{BASE}\nswap = true\noffset = 0 0 0.5\nclamped_edges = left");
        let cfg = ExperimentConfig::parse(&text).unwrap();
        let chart = cfg.build_chart().unwrap();
        // swapped cylinder over swapped bounds, lifted by 0.5
        let p = chart.position([0.0, std::f64::consts::FRAC_PI_2]);
        assert!((p[2] - 1.5).abs() < 1e-12);
    }
}
