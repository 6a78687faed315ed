//! Run configuration: a TOML file with `[problem]`, `[numerics]` and
//! `[experiment]` tables. Expressions are quoted strings in the expression
//! grammar.

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::diffeo::{DiffeoError, DiffeoSpec, Domain};
use crate::expr::{parse, Expr, ParseError};
use crate::grid::{Grid, GridError};
use crate::problem::{
    assemble, InitialData, NonlinearityWindow, ProblemError, ProblemOptions, TransformedProblem,
};
use crate::solver::{Scheme, StepperConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{field}: {source} (at offset {offset})", offset = source.offset())]
    Expression { field: String, source: ParseError },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Diffeo(#[from] DiffeoError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub dimension: usize,
    /// `"box"` or `"ball"`.
    pub domain: String,
    /// Box side lengths; defaults to the unit cube.
    pub extents: Option<Vec<f64>>,
    /// Ball domains only; the radial reduction is the only supported ball grid.
    #[serde(default = "yes")]
    pub radial: bool,
    pub forward: Vec<String>,
    pub inverse: Vec<String>,
    pub beta: f64,
    #[serde(default = "zero_string")]
    pub f: String,
    /// Expression in `y` or `x`, or `"zero"` / `"random"`.
    #[serde(default = "zero_string")]
    pub initial: String,
    #[serde(default = "one")]
    pub initial_amplitude: f64,
    #[serde(default)]
    pub seed: u64,
    /// Manufactured exact solution for convergence studies.
    pub exact: Option<String>,
    pub window: Option<[f64; 2]>,
    #[serde(default = "half")]
    pub alpha: f64,
    /// Dimension entering the growth cap; defaults to `dimension`.
    pub n: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsSection {
    pub cells: usize,
    pub scheme: String,
    pub dt: f64,
    pub cg_tolerance: f64,
    pub cg_max_iterations: Option<usize>,
    pub snapshot_every: usize,
    pub step_guard: bool,
    pub reassembly_tolerance: f64,
    pub max_steps: usize,
}

impl Default for NumericsSection {
    fn default() -> Self {
        let s = StepperConfig::default();
        NumericsSection {
            cells: 32,
            scheme: s.scheme.label().to_string(),
            dt: s.dt,
            cg_tolerance: s.cg_tolerance,
            cg_max_iterations: None,
            snapshot_every: 0,
            step_guard: true,
            reassembly_tolerance: 0.0,
            max_steps: s.max_steps,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    // hypothesis checks
    pub check_window: [f64; 2],
    pub check_samples: usize,
    pub check_points: usize,
    pub h4_horizon: Option<f64>,
    pub u_range: [f64; 2],
    pub u_samples: usize,
    pub ellipticity_window: Option<[f64; 2]>,
    // transform
    pub sample_times: Vec<f64>,
    // solve
    pub tau: f64,
    pub end: f64,
    pub moving_snapshots: bool,
    // pullback
    pub t_star: f64,
    pub k_max: usize,
    pub base: f64,
    pub horizon: f64,
    pub seeds: Vec<u64>,
    pub radii: Vec<f64>,
    pub drift_gaps: Vec<f64>,
    pub cocycle_split: Option<f64>,
    // mms
    pub mms_cells: Vec<usize>,
    pub mms_dt: f64,
    pub mms_time_cells: usize,
    pub mms_dts: Vec<f64>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            check_window: [-20.0, 20.0],
            check_samples: 201,
            check_points: 4,
            h4_horizon: None,
            u_range: [-10.0, 10.0],
            u_samples: 201,
            ellipticity_window: None,
            sample_times: vec![0.0, 1.0],
            tau: 0.0,
            end: 1.0,
            moving_snapshots: true,
            t_star: 0.0,
            k_max: 5,
            base: 2.0,
            horizon: 10.0,
            seeds: vec![1, 2, 3, 4, 5],
            radii: vec![1.0, 10.0, 100.0],
            drift_gaps: vec![0.5, 1.0, 2.0, 4.0, 8.0],
            cocycle_split: None,
            mms_cells: vec![32, 64, 128, 256],
            mms_dt: 1e-3,
            mms_time_cells: 128,
            mms_dts: vec![0.1, 0.05, 0.025, 0.0125],
        }
    }
}

fn yes() -> bool {
    true
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn zero_string() -> String {
    "0".to_string()
}

pub fn parse_field(field: &str, src: &str) -> Result<Expr, ConfigError> {
    parse(src).map_err(|source| ConfigError::Expression {
        field: field.to_string(),
        source,
    })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.problem;
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(p.beta.is_finite()) {
            return bad("problem.beta must be finite".into());
        }
        if let Some([a, b]) = p.window {
            if !(a < b) {
                return bad("problem.window must be increasing".into());
            }
        }
        let n = &self.numerics;
        if !(n.dt > 0.0 && n.dt.is_finite()) {
            return bad("numerics.dt must be positive".into());
        }
        if !(n.cg_tolerance > 0.0) {
            return bad("numerics.cg_tolerance must be positive".into());
        }
        Scheme::from_label(&n.scheme)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown scheme `{}`", n.scheme)))?;
        let e = &self.experiment;
        if !(e.check_window[0] < e.check_window[1]) || e.check_samples < 8 {
            return bad("experiment.check_window must be increasing with at least 8 samples".into());
        }
        if !(e.base > 1.0) {
            return bad("experiment.base must exceed 1".into());
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<DiffeoSpec, ConfigError> {
        let p = &self.problem;
        let domain = match p.domain.as_str() {
            "box" => Domain::Box {
                extents: p.extents.clone().unwrap_or_else(|| vec![1.0; p.dimension]),
            },
            "ball" => Domain::Ball { radial: p.radial },
            other => return Err(ConfigError::Invalid(format!("unknown domain `{other}`"))),
        };
        let parse_all = |what: &str, srcs: &[String]| -> Result<Vec<Expr>, ConfigError> {
            srcs.iter()
                .enumerate()
                .map(|(i, s)| parse_field(&format!("problem.{what}[{i}]"), s))
                .collect()
        };
        Ok(DiffeoSpec::new(
            p.dimension,
            parse_all("forward", &p.forward)?,
            parse_all("inverse", &p.inverse)?,
            domain,
        )?)
    }

    pub fn nonlinearity(&self) -> Result<Expr, ConfigError> {
        parse_field("problem.f", &self.problem.f)
    }

    pub fn initial(&self, seed_override: Option<u64>) -> Result<InitialData, ConfigError> {
        let p = &self.problem;
        Ok(match p.initial.trim() {
            "zero" => InitialData::Zero,
            "random" => InitialData::Random {
                seed: seed_override.unwrap_or(p.seed),
                amplitude: p.initial_amplitude,
            },
            src => InitialData::Expr(parse_field("problem.initial", src)?),
        })
    }

    pub fn exact(&self) -> Result<Option<Expr>, ConfigError> {
        self.problem
            .exact
            .as_deref()
            .map(|s| parse_field("problem.exact", s))
            .transpose()
    }

    pub fn window(&self) -> (f64, f64) {
        self.problem
            .window
            .map_or((f64::NEG_INFINITY, f64::INFINITY), |[a, b]| (a, b))
    }

    pub fn problem(&self, seed_override: Option<u64>) -> Result<TransformedProblem, ConfigError> {
        let options = ProblemOptions {
            source: None,
            initial: self.initial(seed_override)?,
            window: self.window(),
        };
        Ok(assemble(&self.spec()?, self.problem.beta, self.nonlinearity()?, options)?)
    }

    pub fn grid(&self, spec: &DiffeoSpec) -> Result<Arc<Grid>, ConfigError> {
        Ok(Arc::new(Grid::for_domain(
            spec.domain(),
            spec.dim(),
            self.numerics.cells,
        )?))
    }

    pub fn stepper(&self) -> StepperConfig {
        let n = &self.numerics;
        StepperConfig {
            scheme: Scheme::from_label(&n.scheme).expect("validated"),
            dt: n.dt,
            cg_tolerance: n.cg_tolerance,
            cg_max_iterations: n.cg_max_iterations,
            snapshot_every: n.snapshot_every,
            step_guard: n.step_guard,
            reassembly_tolerance: n.reassembly_tolerance,
            max_steps: n.max_steps,
            full_metrics: true,
        }
    }

    pub fn check_times(&self) -> Vec<f64> {
        let [a, b] = self.experiment.check_window;
        let n = self.experiment.check_samples;
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    pub fn nonlinearity_window(&self) -> NonlinearityWindow {
        let e = &self.experiment;
        NonlinearityWindow {
            t: (e.check_window[0], e.check_window[1]),
            u: (e.u_range[0], e.u_range[1]),
            t_samples: e.check_samples,
            u_samples: e.u_samples,
        }
    }

    pub fn growth_dimension(&self) -> f64 {
        self.problem.n.unwrap_or(self.problem.dimension as f64)
    }
}
