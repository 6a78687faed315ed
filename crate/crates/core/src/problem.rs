//! The fixed-domain nonautonomous problem
//!
//! ```text
//! v_t - sum_jk d_j(a_jk d_k v) + beta v = f(t, v) - <b, grad v> [+ g(t, y)]   in O
//! n . (M grad v) = 0                                                        on dO
//! v(tau, y) = u_tau(r(tau, y))
//! ```
//!
//! together with sample-based checks of the growth (H2) and sign (H3)
//! conditions on `f`, and the Nemytskii map `F(t, v) = f(t, v) - <b, grad v>`.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::diffeo::{build_metric, x_names, y_names, DiffeoError, DiffeoSpec, Domain, MetricBundle};
use crate::expr::{CompiledExpr, EvalError, Expr};
use crate::grid::{Grid, GridError, GridField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("reaction coefficient beta must be positive (got {0})")]
    Beta(f64),
    #[error("nonlinearity may depend only on t and u; found `{0}`")]
    NonlinearityScope(String),
    #[error("{what} may depend only on t and y1..yd (or x1..xd for initial data); found `{var}`")]
    FieldScope { what: &'static str, var: String },
    #[error("radial reduction needs an isotropic metric and radial drift: {0}")]
    NotIsotropic(String),
    #[error("nonlinearity is not differentiable in u: {0}")]
    NotDifferentiable(EvalError),
    #[error("evaluation failed at cell {cell}, t={t}: {source}")]
    Eval {
        cell: usize,
        t: f64,
        source: EvalError,
    },
    #[error(transparent)]
    Diffeo(#[from] DiffeoError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Initial state at the starting time of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Zero,
    /// Expression in `y1..yd` (the fixed-domain state) or in `x1..xd` (the
    /// moving-domain state `u_tau`, composed with `r(tau, ·)`).
    Expr(Expr),
    /// Independent uniform values in `[-amplitude, amplitude]` per cell.
    Random { seed: u64, amplitude: f64 },
}

#[derive(Debug, Clone)]
pub struct TransformedProblem {
    spec: DiffeoSpec,
    metric: Arc<MetricBundle>,
    beta: f64,
    f: Expr,
    f_c: CompiledExpr,
    source: Option<Expr>,
    source_c: Option<CompiledExpr>,
    initial: InitialData,
    window: (f64, f64),
    radial: bool,
}

pub struct ProblemOptions {
    pub source: Option<Expr>,
    pub initial: InitialData,
    pub window: (f64, f64),
}

impl Default for ProblemOptions {
    fn default() -> Self {
        ProblemOptions {
            source: None,
            initial: InitialData::Zero,
            window: (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

fn slot_names(dim: usize) -> Vec<String> {
    let mut s = vec!["t".to_string()];
    s.extend(y_names(dim));
    s
}

/// Bundle the pulled-back problem. For a ball domain flagged radial, the
/// metric must be isotropic (`M = m(t, |y|) I`) and the drift radial on a
/// sample set, since only the radial profile is discretized.
pub fn assemble(
    spec: &DiffeoSpec,
    beta: f64,
    f: Expr,
    options: ProblemOptions,
) -> Result<TransformedProblem, ProblemError> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(ProblemError::Beta(beta));
    }
    assemble_with_reaction(spec, beta, f, options)
}

/// As [`assemble`] but accepts any finite `beta`, including zero; used for
/// conservation diagnostics.
pub fn assemble_with_reaction(
    spec: &DiffeoSpec,
    beta: f64,
    f: Expr,
    options: ProblemOptions,
) -> Result<TransformedProblem, ProblemError> {
    if let Some(var) = f.free_vars().into_iter().find(|v| v != "t" && v != "u") {
        return Err(ProblemError::NonlinearityScope(var));
    }
    let dim = spec.dim();
    let slots = slot_names(dim);
    let slot_refs: Vec<&str> = slots.iter().map(String::as_str).collect();
    let source_c = match &options.source {
        Some(g) => Some(g.compile(&slot_refs).map_err(|e| match e {
            EvalError::Unbound(var) => ProblemError::FieldScope { what: "source", var },
            other => ProblemError::NotDifferentiable(other),
        })?),
        None => None,
    };
    if let InitialData::Expr(e) = &options.initial {
        let ys = y_names(dim);
        let xs = x_names(dim);
        let vars = e.free_vars();
        let in_y = vars.iter().all(|v| ys.contains(v));
        let in_x = vars.iter().all(|v| xs.contains(v));
        if !(in_y || in_x) {
            let var = vars
                .into_iter()
                .find(|v| !ys.contains(v))
                .unwrap_or_default();
            return Err(ProblemError::FieldScope {
                what: "initial data",
                var,
            });
        }
    }
    let metric = Arc::new(build_metric(spec));
    let radial = matches!(spec.domain(), Domain::Ball { radial: true });
    if radial {
        check_isotropy(&metric, spec, options.window)?;
    }
    Ok(TransformedProblem {
        spec: spec.clone(),
        metric,
        beta,
        f_c: f.compile(&["t", "u"]).expect("scope checked"),
        f,
        source: options.source,
        source_c,
        initial: options.initial,
        window: options.window,
        radial,
    })
}

fn check_isotropy(
    m: &MetricBundle,
    spec: &DiffeoSpec,
    window: (f64, f64),
) -> Result<(), ProblemError> {
    let d = m.dim();
    let lo = if window.0.is_finite() { window.0 } else { -5.0 };
    let hi = if window.1.is_finite() { window.1 } else { 5.0 };
    let points = spec.interior_samples(4);
    for i in 0..=8 {
        let t = lo + (hi - lo) * i as f64 / 8.0;
        for y in &points {
            let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut axis = vec![0.0; d];
            axis[0] = r;
            let a = m.metric_at(t, y)?;
            let a_axis = m.metric_entry(0, 0, t, &axis)?;
            let b = m.drift_at(t, y)?;
            let b_axis = m.drift_entry(0, t, &axis)?;
            for j in 0..d {
                for k in 0..d {
                    let want = if j == k { a_axis } else { 0.0 };
                    if (a[(j, k)] - want).abs() > 1e-10 * (1.0 + want.abs()) {
                        return Err(ProblemError::NotIsotropic(format!(
                            "a_{}{} = {} at t={t}, y={y:?}",
                            j + 1,
                            k + 1,
                            a[(j, k)]
                        )));
                    }
                }
                let want = if r > 0.0 { b_axis * y[j] / r } else { 0.0 };
                if (b[j] - want).abs() > 1e-10 * (1.0 + want.abs()) {
                    return Err(ProblemError::NotIsotropic(format!(
                        "b_{} = {} at t={t}, y={y:?}",
                        j + 1,
                        b[j]
                    )));
                }
            }
        }
    }
    Ok(())
}

impl TransformedProblem {
    pub fn spec(&self) -> &DiffeoSpec {
        &self.spec
    }

    pub fn metric(&self) -> &MetricBundle {
        &self.metric
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn nonlinearity(&self) -> &Expr {
        &self.f
    }

    pub fn source(&self) -> Option<&Expr> {
        self.source.as_ref()
    }

    pub fn initial(&self) -> &InitialData {
        &self.initial
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn is_radial(&self) -> bool {
        self.radial
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// Copy with a different nonlinearity (same geometry and options).
    pub fn with_nonlinearity(&self, f: Expr) -> Result<Self, ProblemError> {
        if let Some(var) = f.free_vars().into_iter().find(|v| v != "t" && v != "u") {
            return Err(ProblemError::NonlinearityScope(var));
        }
        let mut out = self.clone();
        out.f_c = f.compile(&["t", "u"]).expect("scope checked");
        out.f = f;
        Ok(out)
    }

    /// Copy with a different initial-data descriptor.
    pub fn with_initial(&self, initial: InitialData) -> Self {
        let mut out = self.clone();
        out.initial = initial;
        out
    }

    pub fn eval_f(&self, t: f64, u: f64) -> Result<f64, EvalError> {
        self.f_c.eval(&[t, u])
    }

    /// Initial field on `grid` at time `tau`.
    pub fn initial_field(&self, grid: &Arc<Grid>, tau: f64) -> Result<GridField, ProblemError> {
        let n = grid.len();
        let values = match &self.initial {
            InitialData::Zero => vec![0.0; n],
            InitialData::Random { seed, amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..n)
                    .map(|_| amplitude * rng.random_range(-1.0..=1.0))
                    .collect()
            }
            InitialData::Expr(e) => {
                let d = self.dim();
                let xs = x_names(d);
                let in_x = e.free_vars().iter().any(|v| xs.contains(v));
                let field = if in_x {
                    let compose: HashMap<String, Expr> = xs
                        .into_iter()
                        .zip(self.spec.forward().iter().cloned())
                        .collect();
                    e.substitute(&compose)
                } else {
                    e.clone()
                };
                let slots = slot_names(d);
                let slot_refs: Vec<&str> = slots.iter().map(String::as_str).collect();
                let c = field.compile(&slot_refs).expect("scope checked at assembly");
                let mut buf = [0.0; 4];
                buf[0] = tau;
                (0..n)
                    .map(|cell| {
                        buf[1..=d].copy_from_slice(&grid.center(cell));
                        c.eval(&buf).map_err(|source| ProblemError::Eval { cell, t: tau, source })
                    })
                    .collect::<Result<_, _>>()?
            }
        };
        Ok(GridField::new(grid.clone(), values)?)
    }

    /// Largest `|b(t, y)|` over the given times and cell centers.
    pub fn drift_sup(&self, grid: &Grid, times: &[f64]) -> Result<f64, ProblemError> {
        let mut sup = 0.0f64;
        for &t in times {
            for cell in 0..grid.len() {
                let b = self.metric.drift_at(t, &grid.center(cell))?;
                sup = sup.max(b.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
        }
        Ok(sup)
    }

    /// `sup |d_u f|` over `t` in `times`, `|u| <= u_bound`, plus
    /// `sup |b|` — a Lipschitz constant of `F` from discrete `H^1` to `L^2`
    /// on fields bounded by `u_bound` in sup norm.
    pub fn lipschitz_bound(
        &self,
        grid: &Grid,
        times: &[f64],
        u_bound: f64,
    ) -> Result<f64, ProblemError> {
        let fu = self
            .f
            .diff("u")
            .compile(&["t", "u"])
            .expect("scope checked");
        let mut sup = 0.0f64;
        for &t in times {
            for i in 0..=200 {
                let u = -u_bound + 2.0 * u_bound * i as f64 / 200.0;
                let v = fu.eval(&[t, u]).map_err(ProblemError::NotDifferentiable)?;
                sup = sup.max(v.abs());
            }
        }
        Ok(sup + self.drift_sup(grid, times)?)
    }

    /// `F(t, v) = f(t, v) - <b(t, ·), grad v> [+ g(t, ·)]` cellwise.
    pub fn eval_nonlinearity(
        &self,
        t: f64,
        v: &GridField,
        grad: &[GridField],
    ) -> Result<GridField, ProblemError> {
        let grid = v.grid();
        let d = self.dim();
        let mut out = Vec::with_capacity(v.len());
        let mut slots = [0.0; 4];
        slots[0] = t;
        for cell in 0..v.len() {
            let y = grid.center(cell);
            let mut value = self
                .f_c
                .eval(&[t, v.values()[cell]])
                .map_err(|source| ProblemError::Eval { cell, t, source })?;
            for (k, g) in grad.iter().enumerate() {
                let bk = self
                    .metric
                    .drift_entry(k, t, &y)
                    .map_err(ProblemError::Diffeo)?;
                value -= bk * g.values()[cell];
            }
            if let Some(src) = &self.source_c {
                slots[1..=d].copy_from_slice(&y);
                value += src
                    .eval(&slots)
                    .map_err(|source| ProblemError::Eval { cell, t, source })?;
            }
            out.push(value);
        }
        Ok(GridField::new(grid.clone(), out)?)
    }
}

/// `F(t, v)` with the gradient computed on the field's own grid.
pub fn eval_f_field(p: &TransformedProblem, t: f64, v: &GridField) -> Result<GridField, ProblemError> {
    let grad = crate::grid::gradient(v);
    p.eval_nonlinearity(t, v, &grad)
}

/// Rectangle of `(t, u)` samples used by the nonlinearity checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearityWindow {
    pub t: (f64, f64),
    pub u: (f64, f64),
    pub t_samples: usize,
    pub u_samples: usize,
}

impl Default for NonlinearityWindow {
    fn default() -> Self {
        NonlinearityWindow {
            t: (-20.0, 20.0),
            u: (-10.0, 10.0),
            t_samples: 201,
            u_samples: 201,
        }
    }
}

impl NonlinearityWindow {
    fn times(&self) -> impl Iterator<Item = f64> + '_ {
        linspace(self.t.0, self.t.1, self.t_samples)
    }

    fn us(&self) -> impl Iterator<Item = f64> + '_ {
        linspace(self.u.0, self.u.1, self.u_samples)
    }

    fn u_max(&self) -> f64 {
        self.u.0.abs().max(self.u.1.abs())
    }
}

fn linspace(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| {
        if n <= 1 {
            a
        } else {
            a + (b - a) * i as f64 / (n - 1) as f64
        }
    })
}

/// Growth check `|d_u f| <= c (1 + |u|^rho)` with `0 < rho <= cap`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub pass: bool,
    pub c: f64,
    pub rho: f64,
    /// Growth exponent of `sup |d_u f|` measured on the outer half of the window.
    pub measured_exponent: f64,
    /// `4 alpha / (n - 4 alpha)`, infinite when `n <= 4 alpha`.
    pub cap: f64,
    pub alpha: f64,
    pub n: f64,
}

/// Sign check `|f(t, u)| <= k1 |u| + k2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignReport {
    pub pass: bool,
    pub k1: f64,
    pub k2: f64,
    /// Growth exponent of `sup |f|` measured on the outer half of the window.
    pub measured_exponent: f64,
    /// Largest `|f| - k1 |u| - k2` on the samples (nonpositive up to rounding).
    pub residual: f64,
    /// Sample attaining the largest `|f|` when the check fails.
    pub witness: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearityReport {
    pub growth: GrowthReport,
    pub sign: SignReport,
}

fn check_scope(f: &Expr) -> Result<(), ProblemError> {
    match f.free_vars().into_iter().find(|v| v != "t" && v != "u") {
        Some(var) => Err(ProblemError::NonlinearityScope(var)),
        None => Ok(()),
    }
}

/// Sup of `|g(t, u)|` over the window restricted to `|u| <= bound`, with
/// the maximizing sample.
fn windowed_sup(
    g: &CompiledExpr,
    w: &NonlinearityWindow,
    bound: f64,
) -> Result<(f64, (f64, f64)), EvalError> {
    let mut best = (0.0f64, (w.t.0, 0.0));
    for t in w.times() {
        for u in w.us().filter(|u| u.abs() <= bound * (1.0 + 1e-12)) {
            let v = g.eval(&[t, u])?.abs();
            if v > best.0 {
                best = (v, (t, u));
            }
        }
    }
    Ok(best)
}

fn growth_exponent(sup_full: f64, sup_half: f64) -> f64 {
    if sup_full <= 0.0 || sup_half <= 0.0 {
        0.0
    } else {
        ((sup_full / sup_half).ln() / std::f64::consts::LN_2).max(0.0)
    }
}

const EXPONENT_SLACK: f64 = 0.05;

pub fn check_h2(
    f: &Expr,
    window: &NonlinearityWindow,
    alpha: f64,
    n: f64,
) -> Result<GrowthReport, ProblemError> {
    check_scope(f)?;
    let fu = f.diff("u").compile(&["t", "u"]).expect("scope checked");
    let cap = if n > 4.0 * alpha {
        4.0 * alpha / (n - 4.0 * alpha)
    } else {
        f64::INFINITY
    };
    let umax = window.u_max();
    let (full, _) = windowed_sup(&fu, window, umax).map_err(ProblemError::NotDifferentiable)?;
    let (half, _) = windowed_sup(&fu, window, umax / 2.0).map_err(ProblemError::NotDifferentiable)?;
    let measured = growth_exponent(full, half);
    // smallest rung of a 1/64 ladder (relative to a finite cap) covering the measured growth
    let step = if cap.is_finite() { cap / 64.0 } else { 1.0 / 64.0 };
    let rho = ((measured - 1e-9).max(0.0) / step).ceil().max(1.0) * step;
    let rho = if cap.is_finite() && rho > cap && measured <= cap + EXPONENT_SLACK {
        cap
    } else {
        rho
    };
    let mut c = 0.0f64;
    for t in window.times() {
        for u in window.us() {
            let v = fu.eval(&[t, u]).map_err(ProblemError::NotDifferentiable)?;
            c = c.max(v.abs() / (1.0 + u.abs().powf(rho)));
        }
    }
    Ok(GrowthReport {
        pass: rho <= cap && rho > 0.0,
        c,
        rho,
        measured_exponent: measured,
        cap,
        alpha,
        n,
    })
}

pub fn check_h3(f: &Expr, window: &NonlinearityWindow) -> Result<SignReport, ProblemError> {
    check_scope(f)?;
    let fc = f.compile(&["t", "u"]).expect("scope checked");
    let umax = window.u_max();
    let (full, at) = windowed_sup(&fc, window, umax).map_err(ProblemError::NotDifferentiable)?;
    let (half, _) = windowed_sup(&fc, window, umax / 2.0).map_err(ProblemError::NotDifferentiable)?;
    let measured = growth_exponent(full, half);
    let superlinear = measured > 1.0 + EXPONENT_SLACK;
    // bounded-looking f gets k1 = 0; otherwise the secant slope of the envelope
    let k1 = if measured < 0.5 {
        0.0
    } else {
        ((full - half) / (umax / 2.0)).max(0.0)
    };
    let mut k2 = 0.0f64;
    for t in window.times() {
        for u in window.us() {
            let v = fc.eval(&[t, u]).map_err(ProblemError::NotDifferentiable)?;
            k2 = k2.max(v.abs() - k1 * u.abs());
        }
    }
    let mut residual = f64::NEG_INFINITY;
    for t in window.times() {
        for u in window.us() {
            let v = fc.eval(&[t, u]).map_err(ProblemError::NotDifferentiable)?;
            residual = residual.max(v.abs() - k1 * u.abs() - k2);
        }
    }
    let pass = !superlinear && residual <= 1e-9;
    Ok(SignReport {
        pass,
        k1,
        k2,
        measured_exponent: measured,
        residual,
        witness: if pass { None } else { Some(at) },
    })
}

pub fn check_nonlinearity(
    f: &Expr,
    window: &NonlinearityWindow,
    alpha: f64,
    n: f64,
) -> Result<NonlinearityReport, ProblemError> {
    Ok(NonlinearityReport {
        growth: check_h2(f, window, alpha, n)?,
        sign: check_h3(f, window)?,
    })
}
