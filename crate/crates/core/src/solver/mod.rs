//! IMEX time integration of the transformed problem: the diffusion part is
//! implicit, the nonlinearity, drift and mixed-derivative terms explicit.
//!
//! Time steps live on the lattice `t_n = n dt` anchored at zero; a run from
//! `tau` to `T` starts with a (possibly shortened) step to the first lattice
//! point after `tau` and ends with a step landing exactly on `T`. Restarting
//! a run at a lattice point therefore reproduces the same arithmetic.

mod cg;
mod mms;

use std::sync::Arc;

use thiserror::Error;

use crate::grid::{
    assemble_operator, boundary_residual, cross_divergence, gradient, integral, norm_h1, norm_l2,
    CsrMatrix, Grid, GridField, SparseOperator,
};
use crate::problem::{ProblemError, TransformedProblem};

pub use cg::{cg_solve, default_iteration_cap, CgError, CgSolution};
pub use mms::{
    manufactured_source, mms_convergence, spatial_convergence, temporal_convergence,
    MmsError, MmsReport, MmsSetup, OrderRow, OrderTable,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    BackwardEuler,
    CrankNicolson,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::BackwardEuler => "backward-euler",
            Scheme::CrankNicolson => "crank-nicolson",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "backward-euler" | "be" => Some(Scheme::BackwardEuler),
            "crank-nicolson" | "cn" => Some(Scheme::CrankNicolson),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepperConfig {
    pub scheme: Scheme,
    pub dt: f64,
    /// Relative residual target of the linear solves.
    pub cg_tolerance: f64,
    /// Iteration cap per solve; `None` means ten times the number of cells.
    pub cg_max_iterations: Option<usize>,
    /// Keep a snapshot every this many steps (the initial and final states
    /// are always kept); zero keeps only those two.
    pub snapshot_every: usize,
    /// Refuse runs with `dt * L > 0.5`, `L` the measured Lipschitz bound.
    pub step_guard: bool,
    /// Reuse the assembled operator while the metric at a probe cell moves
    /// by at most this fraction; zero reassembles at every new time.
    pub reassembly_tolerance: f64,
    /// Cap on the number of steps of a single run.
    pub max_steps: usize,
    /// Record boundary residual and H1 norm each step (costs a gradient).
    pub full_metrics: bool,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            scheme: Scheme::CrankNicolson,
            dt: 1e-2,
            cg_tolerance: 1e-10,
            cg_max_iterations: None,
            snapshot_every: 0,
            step_guard: true,
            reassembly_tolerance: 0.0,
            max_steps: 10_000_000,
            full_metrics: true,
        }
    }
}

impl StepperConfig {
    pub fn with_scheme(mut self, scheme: Scheme, dt: f64) -> Self {
        self.scheme = scheme;
        self.dt = dt;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid stepper configuration: {0}")]
    Config(String),
    #[error("linear solve failed at t={t}: {source}")]
    LinearSolve { t: f64, source: CgError },
    #[error("step guard: dt * L = {product} exceeds 0.5 (dt={dt}, L={lipschitz})")]
    StepGuard { dt: f64, lipschitz: f64, product: f64 },
    #[error("non-finite value at cell {cell}, t={t}")]
    NonFinite { t: f64, cell: usize },
    #[error("run of {steps} steps exceeds the cap of {cap}")]
    StepCap { steps: usize, cap: usize },
    #[error("time interval [{tau}, {end}] is empty or outside the window")]
    Interval { tau: f64, end: f64 },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub l2: f64,
    pub h1: f64,
    pub mass: f64,
    pub boundary_residual: f64,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<(f64, GridField)>,
    pub metrics: Vec<StepRecord>,
}

impl Trajectory {
    pub fn final_state(&self) -> &GridField {
        &self.snapshots.last().expect("trajectory holds the initial state").1
    }

    pub fn final_time(&self) -> f64 {
        self.snapshots.last().expect("trajectory holds the initial state").0
    }

    pub fn steps(&self) -> usize {
        self.metrics.len() - 1
    }
}

/// Step end points for a run from `tau` to `end` on the lattice `n dt`.
pub fn time_nodes(tau: f64, end: f64, dt: f64) -> Vec<f64> {
    let mut nodes = vec![tau];
    let mut k = (tau / dt).floor() as i64 - 1;
    while (k as f64) * dt <= tau {
        k += 1;
    }
    loop {
        let t = k as f64 * dt;
        if t >= end {
            break;
        }
        nodes.push(t);
        k += 1;
    }
    nodes.push(end);
    nodes
}

fn step_count(tau: f64, end: f64, dt: f64) -> usize {
    ((end - tau) / dt).ceil().max(0.0) as usize + 1
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Forcing {
    Full,
    Homogeneous,
}

/// One configured integrator bound to a problem and grid.
struct Stepper<'a> {
    p: &'a TransformedProblem,
    grid: Arc<Grid>,
    cfg: &'a StepperConfig,
    forcing: Forcing,
    mass: Vec<f64>,
    cache: Vec<SparseOperator>,
    probe: Vec<f64>,
    /// Whether the explicit part depends on the state (needs a corrector).
    state_dependent: bool,
}

impl<'a> Stepper<'a> {
    fn new(
        p: &'a TransformedProblem,
        grid: Arc<Grid>,
        cfg: &'a StepperConfig,
        forcing: Forcing,
    ) -> Result<Self, SolverError> {
        if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
            return Err(SolverError::Config(format!("dt must be positive (got {})", cfg.dt)));
        }
        if !(cfg.cg_tolerance > 0.0) {
            return Err(SolverError::Config("CG tolerance must be positive".into()));
        }
        let cross = !p.metric().is_diagonal() && matches!(grid.as_ref(), Grid::Box(_));
        let drift = (0..p.dim()).any(|k| !p.metric().drift_expr(k).is_zero());
        let state_dependent = cross
            || (forcing == Forcing::Full && (drift || p.nonlinearity().depends_on("u")));
        let probe = grid.center(grid.len() / 2);
        Ok(Stepper {
            p,
            mass: grid.volumes(),
            grid,
            cfg,
            forcing,
            cache: Vec::new(),
            probe,
            state_dependent,
        })
    }

    fn operator(&mut self, t: f64) -> Result<SparseOperator, SolverError> {
        let metric = self.p.metric();
        if let Some(op) = self.cache.iter().find(|op| op.time() == t) {
            return Ok(op.clone());
        }
        let reusable = self.cache.last().filter(|op| {
            if !metric.is_time_dependent() {
                return true;
            }
            if self.cfg.reassembly_tolerance <= 0.0 {
                return false;
            }
            let (Ok(old), Ok(new)) = (
                metric.metric_at(op.time(), &self.probe),
                metric.metric_at(t, &self.probe),
            ) else {
                return false;
            };
            (new - &old).amax() <= self.cfg.reassembly_tolerance * old.amax()
        });
        if let Some(op) = reusable {
            return Ok(op.clone());
        }
        let op = assemble_operator(self.p, &self.grid, t)?;
        self.cache.push(op.clone());
        if self.cache.len() > 2 {
            self.cache.remove(0);
        }
        Ok(op)
    }

    /// Explicit right-hand side: mixed-derivative corrections plus, for the
    /// full problem, `F(t, v)`.
    fn explicit(&self, t: f64, v: &[f64]) -> Result<Vec<f64>, SolverError> {
        let mut out = cross_divergence(self.p, &self.grid, t, v)?;
        if self.forcing == Forcing::Full {
            let field = GridField::new(self.grid.clone(), v.to_vec()).map_err(ProblemError::from)?;
            let grad = gradient(&field);
            let f = self.p.eval_nonlinearity(t, &field, &grad)?;
            out.iter_mut().zip(f.values()).for_each(|(o, fi)| *o += fi);
        }
        Ok(out)
    }

    fn solve(&self, matrix: &CsrMatrix, rhs: &[f64], guess: &[f64], t: f64) -> Result<(Vec<f64>, usize), SolverError> {
        let cap = self
            .cfg
            .cg_max_iterations
            .unwrap_or_else(|| default_iteration_cap(rhs.len()));
        let s = cg_solve(matrix, rhs, Some(guess), self.cfg.cg_tolerance, cap)
            .map_err(|source| SolverError::LinearSolve { t, source })?;
        Ok((s.x, s.iterations))
    }

    /// Advance `v` from `ta` to `tb`.
    fn step(&mut self, ta: f64, tb: f64, v: &[f64]) -> Result<(Vec<f64>, usize), SolverError> {
        let h = tb - ta;
        let kb = self.operator(tb)?;
        let (x, iterations) = match self.cfg.scheme {
            Scheme::BackwardEuler => {
                let e = self.explicit(ta, v)?;
                let rhs: Vec<f64> = (0..v.len())
                    .map(|i| self.mass[i] * (v[i] + h * e[i]))
                    .collect();
                let matrix = kb.stiffness().scaled_plus_diagonal(h, &self.mass);
                self.solve(&matrix, &rhs, v, tb)?
            }
            Scheme::CrankNicolson => {
                let ka = self.operator(ta)?;
                let kv = ka.stiffness().mul_vec(v);
                let base: Vec<f64> = (0..v.len())
                    .map(|i| self.mass[i] * v[i] - 0.5 * h * kv[i])
                    .collect();
                let mid = ta + 0.5 * h;
                let matrix = kb.stiffness().scaled_plus_diagonal(0.5 * h, &self.mass);
                let e = self.explicit(mid, v)?;
                let rhs: Vec<f64> = (0..v.len()).map(|i| base[i] + h * self.mass[i] * e[i]).collect();
                let (predicted, mut iterations) = self.solve(&matrix, &rhs, v, tb)?;
                if self.state_dependent {
                    let avg: Vec<f64> = v.iter().zip(&predicted).map(|(a, b)| 0.5 * (a + b)).collect();
                    let e = self.explicit(mid, &avg)?;
                    let rhs: Vec<f64> =
                        (0..v.len()).map(|i| base[i] + h * self.mass[i] * e[i]).collect();
                    let (corrected, more) = self.solve(&matrix, &rhs, &predicted, tb)?;
                    iterations += more;
                    (corrected, iterations)
                } else {
                    (predicted, iterations)
                }
            }
        };
        if let Some(cell) = x.iter().position(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite { t: tb, cell });
        }
        Ok((x, iterations))
    }

    fn record(&self, step: usize, t: f64, v: &GridField, cg_iterations: usize) -> Result<StepRecord, SolverError> {
        let (h1, boundary) = if self.cfg.full_metrics {
            (norm_h1(v), boundary_residual(self.p, t, v)?)
        } else {
            (f64::NAN, f64::NAN)
        };
        Ok(StepRecord {
            step,
            t,
            l2: norm_l2(v),
            h1,
            mass: integral(v),
            boundary_residual: boundary,
            cg_iterations,
        })
    }

    fn guard(&self, tau: f64, end: f64, v: &GridField) -> Result<(), SolverError> {
        if !self.cfg.step_guard || self.forcing == Forcing::Homogeneous {
            return Ok(());
        }
        let samples = (((end - tau) / self.cfg.dt).ceil() as usize).clamp(64, 4096);
        let times: Vec<f64> = (0..=samples)
            .map(|i| tau + (end - tau) * i as f64 / samples as f64)
            .collect();
        let u_bound = 2.0 * v.max_abs().max(1.0);
        let lipschitz = self.p.lipschitz_bound(&self.grid, &times, u_bound)?;
        let product = self.cfg.dt * lipschitz;
        if product > 0.5 {
            return Err(SolverError::StepGuard {
                dt: self.cfg.dt,
                lipschitz,
                product,
            });
        }
        Ok(())
    }

    fn run(&mut self, tau: f64, end: f64, v0: &GridField) -> Result<Trajectory, SolverError> {
        if !(end > tau) || !tau.is_finite() || !end.is_finite() {
            return Err(SolverError::Interval { tau, end });
        }
        let (lo, hi) = self.p.window();
        if tau < lo || end > hi {
            return Err(SolverError::Interval { tau, end });
        }
        let steps = step_count(tau, end, self.cfg.dt);
        if steps > self.cfg.max_steps {
            return Err(SolverError::StepCap {
                steps,
                cap: self.cfg.max_steps,
            });
        }
        if v0.grid().as_ref() != self.grid.as_ref() {
            return Err(ProblemError::from(crate::grid::GridError::Mismatch).into());
        }
        self.guard(tau, end, v0)?;
        let nodes = time_nodes(tau, end, self.cfg.dt);
        let mut metrics = vec![self.record(0, tau, v0, 0)?];
        let mut snapshots = vec![(tau, v0.clone())];
        let mut v = v0.values().to_vec();
        let last = nodes.len() - 1;
        for (n, pair) in nodes.windows(2).enumerate() {
            let (next, iterations) = self.step(pair[0], pair[1], &v)?;
            v = next;
            let field = GridField::new(self.grid.clone(), v.clone()).map_err(ProblemError::from)?;
            metrics.push(self.record(n + 1, pair[1], &field, iterations)?);
            let keep = n + 1 == last
                || (self.cfg.snapshot_every > 0 && (n + 1) % self.cfg.snapshot_every == 0);
            if keep {
                snapshots.push((pair[1], field));
            }
        }
        Ok(Trajectory { snapshots, metrics })
    }
}

/// A single step from `t_n` to `t_n + dt` (the lattice is not consulted).
pub fn step(
    p: &TransformedProblem,
    grid: &Arc<Grid>,
    cfg: &StepperConfig,
    t_n: f64,
    v_n: &GridField,
) -> Result<GridField, SolverError> {
    let mut stepper = Stepper::new(p, grid.clone(), cfg, Forcing::Full)?;
    let (v, _) = stepper.step(t_n, t_n + cfg.dt, v_n.values())?;
    Ok(GridField::new(grid.clone(), v).map_err(ProblemError::from)?)
}

/// `S(T, tau) v_tau` with its per-step metrics.
pub fn run(
    p: &TransformedProblem,
    grid: &Arc<Grid>,
    cfg: &StepperConfig,
    tau: f64,
    end: f64,
    v_tau: &GridField,
) -> Result<Trajectory, SolverError> {
    Stepper::new(p, grid.clone(), cfg, Forcing::Full)?.run(tau, end, v_tau)
}

/// `U(T, tau) v_tau`: the same stepping with `F` switched off (the drift
/// belongs to `F` and is dropped too).
pub fn run_homogeneous(
    p: &TransformedProblem,
    grid: &Arc<Grid>,
    cfg: &StepperConfig,
    tau: f64,
    end: f64,
    v_tau: &GridField,
) -> Result<Trajectory, SolverError> {
    Stepper::new(p, grid.clone(), cfg, Forcing::Homogeneous)?.run(tau, end, v_tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Expr};
    use crate::fixtures;
    use crate::problem::{assemble, ProblemOptions};

    fn constant(grid: &Arc<Grid>, c: f64) -> GridField {
        GridField::new(grid.clone(), vec![c; grid.len()]).unwrap()
    }

    #[test]
    fn lattice_nodes() {
        assert_eq!(time_nodes(0.0, 0.25, 0.1), vec![0.0, 0.1, 0.2, 0.25]);
        let n = time_nodes(0.05, 0.3, 0.1);
        assert_eq!(n[0], 0.05);
        assert_eq!(n[1], 0.1);
        assert_eq!(*n.last().unwrap(), 0.3);
        assert!(n.windows(2).all(|w| w[1] > w[0]));
        let s = 7.0 * 0.1;
        let a = time_nodes(0.0, 1.3, 0.1);
        let b = time_nodes(s, 1.3, 0.1);
        assert_eq!(&a[7..], &b[..]);
    }

    #[test]
    fn constant_mode_backward_euler() {
        let p = assemble(&fixtures::identity_box(2), 1.0, Expr::zero(), ProblemOptions::default()).unwrap();
        let grid = Arc::new(Grid::for_domain(p.spec().domain(), 2, 6).unwrap());
        let cfg = StepperConfig::default().with_scheme(Scheme::BackwardEuler, 0.1);
        let v = step(&p, &grid, &cfg, 0.0, &constant(&grid, 2.0)).unwrap();
        for x in v.values() {
            assert!((x - 2.0 / 1.1).abs() < 1e-12);
        }

        let cfg = StepperConfig::default().with_scheme(Scheme::BackwardEuler, 0.01);
        let traj = run(&p, &grid, &cfg, 0.0, 1.0, &constant(&grid, 1.0)).unwrap();
        let err = (traj.final_state().max_abs() - (-1f64).exp()).abs();
        assert!(err <= 0.6 * 0.01, "{err}");
        assert_eq!(traj.steps(), 100);
    }

    #[test]
    fn zero_stays_zero() {
        let p = assemble(&fixtures::moving_ball(3), 1.0, Expr::zero(), ProblemOptions::default()).unwrap();
        let grid = Arc::new(Grid::for_domain(p.spec().domain(), 3, 16).unwrap());
        let traj = run(&p, &grid, &StepperConfig::default(), -1.0, 1.0, &constant(&grid, 0.0)).unwrap();
        assert!(traj.final_state().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn moving_ball_constant_decays_exponentially() {
        let p = assemble(&fixtures::moving_ball(3), 1.0, Expr::zero(), ProblemOptions::default()).unwrap();
        let grid = Arc::new(Grid::for_domain(p.spec().domain(), 3, 16).unwrap());
        let cfg = StepperConfig::default().with_scheme(Scheme::CrankNicolson, 1e-3);
        let traj = run(&p, &grid, &cfg, 0.0, 2.0, &constant(&grid, 1.0)).unwrap();
        for v in traj.final_state().values() {
            assert!((v - (-2f64).exp()).abs() < 1e-3);
        }
    }

    #[test]
    fn homogeneous_norm_is_monotone() {
        let p = assemble(&fixtures::moving_ball(2), 1.0, parse("sin(u)").unwrap(), ProblemOptions::default())
            .unwrap();
        let grid = Arc::new(Grid::for_domain(p.spec().domain(), 2, 12).unwrap());
        let v0 = GridField::from_fn(grid.clone(), |y| (4.0 * y[0]).cos() + 0.5).unwrap();
        let cfg = StepperConfig::default().with_scheme(Scheme::BackwardEuler, 0.05);
        let traj = run_homogeneous(&p, &grid, &cfg, -1.0, 2.0, &v0).unwrap();
        for w in traj.metrics.windows(2) {
            assert!(w[1].l2 <= w[0].l2 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn restart_reproduces_bits() {
        let p = assemble(&fixtures::moving_ball(3), 1.0, parse("sin(u)+cos(t)").unwrap(), ProblemOptions::default())
            .unwrap();
        let grid = Arc::new(Grid::for_domain(p.spec().domain(), 3, 10).unwrap());
        let v0 = GridField::from_fn(grid.clone(), |y| y[0] * y[0]).unwrap();
        let cfg = StepperConfig::default().with_scheme(Scheme::CrankNicolson, 0.1);
        let s = 12.0 * 0.1;
        let whole = run(&p, &grid, &cfg, 0.35, 2.5, &v0).unwrap();
        let first = run(&p, &grid, &cfg, 0.35, s, &v0).unwrap();
        let second = run(&p, &grid, &cfg, s, 2.5, first.final_state()).unwrap();
        assert_eq!(whole.final_state(), second.final_state());
    }

    #[test]
    fn step_guard_rejects_large_steps() {
        let p = assemble(&fixtures::identity_box(1), 1.0, parse("u^3").unwrap(), ProblemOptions::default())
            .unwrap();
        let grid = Arc::new(Grid::for_domain(p.spec().domain(), 1, 8).unwrap());
        let cfg = StepperConfig::default().with_scheme(Scheme::BackwardEuler, 0.5);
        let err = run(&p, &grid, &cfg, 0.0, 1.0, &constant(&grid, 3.0)).unwrap_err();
        assert!(matches!(err, SolverError::StepGuard { .. }));
    }
}
