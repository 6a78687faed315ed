//! Pullback-dynamics probes: exponential decay of the homogeneous process,
//! drift of the generator, convergence of pullback sequences, an empirical
//! absorbing radius and the discrete process property.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{assemble_operator, norm_h1, norm_l2, Grid, GridField};
use crate::problem::{InitialData, ProblemError, TransformedProblem};
use crate::solver::{
    cg_solve, default_iteration_cap, run, run_homogeneous, time_nodes, CgError, SolverError,
    StepperConfig,
};

/// Norms below this are treated as underflow and left out of decay fits.
pub const NORM_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PullbackError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("linear solve inside the drift norm failed: {0}")]
    LinearSolve(CgError),
    #[error("Lanczos iteration stagnated after {iterations} iterations (estimate {estimate:e})")]
    Stagnation { iterations: usize, estimate: f64 },
    #[error("no seed produced enough samples above the norm floor")]
    EmptyFit,
    #[error("cocycle check needs tau <= s <= t (got {tau}, {s}, {t})")]
    Ordering { tau: f64, s: f64, t: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedDecay {
    /// Fitted rate; `None` for seeds below the norm floor.
    pub rate: Option<f64>,
    pub log_constant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    /// Smallest fitted rate `b` over the seeds.
    pub rate: f64,
    /// Largest fitted `K` in `|U(t, tau) w| <= K e^{-b (t - tau)} |w|`.
    pub constant: f64,
    pub seeds: Vec<SeedDecay>,
    pub skipped: usize,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Fit `log(|U(t, tau) w| / |w|)` against `t - tau` for each seed.
pub fn decay_fit(
    p: &TransformedProblem,
    grid: &Arc<Grid>,
    cfg: &StepperConfig,
    tau: f64,
    horizon: f64,
    seeds: &[GridField],
) -> Result<DecayFit, PullbackError> {
    let fits: Vec<Result<SeedDecay, PullbackError>> = seeds
        .par_iter()
        .map(|w| {
            let w0 = norm_l2(w);
            if w0 <= NORM_FLOOR {
                return Ok(SeedDecay {
                    rate: None,
                    log_constant: None,
                });
            }
            let traj = run_homogeneous(p, grid, cfg, tau, tau + horizon, w)?;
            let (xs, ys): (Vec<f64>, Vec<f64>) = traj
                .metrics
                .iter()
                .filter(|m| m.l2 > NORM_FLOOR)
                .map(|m| (m.t - tau, (m.l2 / w0).ln()))
                .unzip();
            if xs.len() < 2 {
                return Ok(SeedDecay {
                    rate: None,
                    log_constant: None,
                });
            }
            let (slope, intercept) = least_squares(&xs, &ys);
            Ok(SeedDecay {
                rate: Some(-slope),
                log_constant: Some(intercept),
            })
        })
        .collect();
    let seeds = fits.into_iter().collect::<Result<Vec<_>, _>>()?;
    let skipped = seeds.iter().filter(|s| s.rate.is_none()).count();
    let rate = seeds
        .iter()
        .filter_map(|s| s.rate)
        .fold(f64::INFINITY, f64::min);
    let log_k = seeds
        .iter()
        .filter_map(|s| s.log_constant)
        .fold(f64::NEG_INFINITY, f64::max);
    if !rate.is_finite() {
        return Err(PullbackError::EmptyFit);
    }
    Ok(DecayFit {
        rate,
        constant: log_k.exp(),
        seeds,
        skipped,
    })
}

fn mass_dot(m: &[f64], a: &[f64], b: &[f64]) -> f64 {
    m.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * x * y).sum()
}

/// Spectral norm of `(A(t) - A(tau)) A(r)^{-1}` in the mass inner product,
/// from the top Ritz value of `B* B` (relative tolerance `1e-8`).
pub fn drift_norm(
    p: &TransformedProblem,
    grid: &Grid,
    t: f64,
    tau: f64,
    r: f64,
) -> Result<f64, PullbackError> {
    let at = assemble_operator(p, grid, t)?;
    let atau = assemble_operator(p, grid, tau)?;
    let ar = assemble_operator(p, grid, r)?;
    let n = grid.len();
    let mass = ar.mass().to_vec();
    // (K_t - K_tau) applied, then divided by the mass
    let delta = |x: &[f64]| -> Vec<f64> {
        let a = at.stiffness().mul_vec(x);
        let b = atau.stiffness().mul_vec(x);
        a.iter().zip(&b).zip(&mass).map(|((u, v), m)| (u - v) / m).collect()
    };
    let cap = default_iteration_cap(n);
    let inverse = |x: &[f64]| -> Result<Vec<f64>, PullbackError> {
        let rhs: Vec<f64> = x.iter().zip(&mass).map(|(v, m)| v * m).collect();
        cg_solve(ar.stiffness(), &rhs, None, 1e-13, cap)
            .map(|s| s.x)
            .map_err(PullbackError::LinearSolve)
    };
    // Lanczos on B* B, with B* = A(r)^{-1} (A(t) - A(tau)) since each A is
    // mass-self-adjoint; full reorthogonalization in the mass inner product
    let normal = |x: &[f64]| -> Result<Vec<f64>, PullbackError> { inverse(&delta(&delta(&inverse(x)?))) };
    let mut q: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 1013) as f64 / 1013.0).collect();
    let norm = mass_dot(&mass, &q, &q).sqrt();
    q.iter_mut().for_each(|v| *v /= norm);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    let mut estimate = 0.0f64;
    let steps = n.min(200);
    for j in 0..steps {
        let mut w = normal(&q)?;
        alpha.push(mass_dot(&mass, &w, &q));
        basis.push(q.clone());
        for _ in 0..2 {
            for b in &basis {
                let c = mass_dot(&mass, &w, b);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let top = top_eigenvalue(&alpha, &beta).max(0.0).sqrt();
        if top == 0.0 && j == 0 && alpha[0] == 0.0 {
            return Ok(0.0);
        }
        let b = mass_dot(&mass, &w, &w).sqrt();
        if (top - estimate).abs() <= 1e-8 * top || b <= 1e-14 * alpha[0].abs() || j + 1 == steps {
            if j + 1 == steps && (top - estimate).abs() > 1e-8 * top && steps < n {
                return Err(PullbackError::Stagnation {
                    iterations: steps,
                    estimate: top,
                });
            }
            return Ok(top);
        }
        estimate = top;
        beta.push(b);
        q = w.into_iter().map(|x| x / b).collect();
    }
    Ok(estimate)
}

fn top_eigenvalue(alpha: &[f64], beta: &[f64]) -> f64 {
    let m = alpha.len();
    let t = nalgebra::DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    nalgebra::SymmetricEigen::new(t)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftRow {
    pub t: f64,
    pub tau: f64,
    pub r: f64,
    pub norm: f64,
}

/// Drift norms over the gaps `t - tau`, with `r = t`.
pub fn drift_table(
    p: &TransformedProblem,
    grid: &Grid,
    t: f64,
    gaps: &[f64],
) -> Result<Vec<DriftRow>, PullbackError> {
    gaps.iter()
        .map(|g| {
            Ok(DriftRow {
                t,
                tau: t - g,
                r: t,
                norm: drift_norm(p, grid, t, t - g, t)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapSequence {
    /// `tau_k = t* - base^k` for the computed `k`.
    pub taus: Vec<f64>,
    /// `v(t*, tau_k; u0)`.
    pub finals: Vec<GridField>,
    /// `delta_k = |v(t*, tau_k) - v(t*, tau_{k+1})|_{L^2}`.
    pub gaps: Vec<f64>,
    /// Whether `delta_k` decreases for every `k >= 2`.
    pub decreasing: bool,
    /// Requested `k_max` when the step budget cut the ladder short.
    pub truncated_from: Option<usize>,
}

impl GapSequence {
    pub fn last_gap(&self) -> Option<f64> {
        self.gaps.last().copied()
    }

    pub fn final_state(&self) -> &GridField {
        self.finals.last().expect("ladder is nonempty")
    }
}

/// Pullback ladder `tau_k = t* - base^k`, `k = 0..=k_max`, each run from the
/// initial descriptor `u0` sampled at `tau_k`. The ladder is shortened if
/// the total number of steps would exceed `cfg.max_steps`.
pub fn pullback_converge(
    p: &TransformedProblem,
    grid: &Arc<Grid>,
    cfg: &StepperConfig,
    t_star: f64,
    u0: &InitialData,
    k_max: usize,
    base: f64,
) -> Result<GapSequence, PullbackError> {
    let mut taus = Vec::new();
    let mut total = 0usize;
    let mut truncated_from = None;
    for k in 0..=k_max {
        let tau = t_star - base.powi(k as i32);
        let steps = time_nodes(tau, t_star, cfg.dt).len() - 1;
        if total + steps > cfg.max_steps {
            truncated_from = Some(k_max);
            break;
        }
        total += steps;
        taus.push(tau);
    }
    let problem = p.with_initial(u0.clone());
    let finals: Vec<Result<GridField, PullbackError>> = taus
        .par_iter()
        .map(|&tau| {
            let v0 = problem.initial_field(grid, tau)?;
            Ok(run(&problem, grid, cfg, tau, t_star, &v0)?.final_state().clone())
        })
        .collect();
    let finals = finals.into_iter().collect::<Result<Vec<_>, _>>()?;
    let gaps: Vec<f64> = finals
        .windows(2)
        .map(|w| w[0].difference(&w[1]).map(|d| norm_l2(&d)))
        .collect::<Result<_, _>>()
        .map_err(ProblemError::from)?;
    let decreasing = gaps.iter().skip(2).zip(gaps.iter().skip(3)).all(|(a, b)| b < a);
    Ok(GapSequence {
        taus,
        finals,
        gaps,
        decreasing,
        truncated_from,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiusReport {
    /// Largest terminal `H^1` norm over the seed family.
    pub radius: f64,
    pub initial_h1: Vec<f64>,
    pub terminal_h1: Vec<f64>,
}

/// Empirical absorbing radius: terminal `H^1` norms of `v(t*, t* - base^k_max; u0)`
/// over a family of initial data.
pub fn absorbing_radius(
    p: &TransformedProblem,
    grid: &Arc<Grid>,
    cfg: &StepperConfig,
    t_star: f64,
    seeds: &[InitialData],
    k_max: usize,
    base: f64,
) -> Result<RadiusReport, PullbackError> {
    let tau = t_star - base.powi(k_max as i32);
    let results: Vec<Result<(f64, f64), PullbackError>> = seeds
        .par_iter()
        .map(|seed| {
            let problem = p.with_initial(seed.clone());
            let v0 = problem.initial_field(grid, tau)?;
            let traj = run(&problem, grid, cfg, tau, t_star, &v0)?;
            Ok((norm_h1(&v0), norm_h1(traj.final_state())))
        })
        .collect();
    let pairs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let (initial_h1, terminal_h1): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(RadiusReport {
        radius: terminal_h1.iter().copied().fold(0.0, f64::max),
        initial_h1,
        terminal_h1,
    })
}

/// `|S(t, s) S(s, tau) u0 - S(t, tau) u0|_{L^2}`.
pub fn cocycle_check(
    p: &TransformedProblem,
    grid: &Arc<Grid>,
    cfg: &StepperConfig,
    tau: f64,
    s: f64,
    t: f64,
    u0: &GridField,
) -> Result<f64, PullbackError> {
    if !(tau <= s && s <= t) {
        return Err(PullbackError::Ordering { tau, s, t });
    }
    let evolve = |from: f64, to: f64, v: &GridField| -> Result<GridField, PullbackError> {
        if from == to {
            Ok(v.clone())
        } else {
            Ok(run(p, grid, cfg, from, to, v)?.final_state().clone())
        }
    };
    let split = evolve(s, t, &evolve(tau, s, u0)?)?;
    let whole = evolve(tau, t, u0)?;
    Ok(norm_l2(&split.difference(&whole).map_err(ProblemError::from)?))
}

/// `H^1` norm of `S(t, tau) u0 - U(t, tau) u0`, the part of the process
/// generated by the nonlinearity.
pub fn nonlinear_part(
    p: &TransformedProblem,
    grid: &Arc<Grid>,
    cfg: &StepperConfig,
    tau: f64,
    t: f64,
    u0: &GridField,
) -> Result<f64, PullbackError> {
    let s = run(p, grid, cfg, tau, t, u0)?;
    let u = run_homogeneous(p, grid, cfg, tau, t, u0)?;
    let diff = s
        .final_state()
        .difference(u.final_state())
        .map_err(ProblemError::from)?;
    Ok(norm_h1(&diff))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PullbackReport {
    pub decay: DecayFit,
    pub drift: Vec<DriftRow>,
    pub gaps: GapSequence,
    pub radius: RadiusReport,
    pub cocycle_residual: f64,
    pub nonlinear_part_h1: f64,
}
