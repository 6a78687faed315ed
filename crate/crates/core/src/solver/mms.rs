//! Convergence studies by manufactured solutions.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use super::{run, Scheme, SolverError, StepperConfig};
use crate::diffeo::{build_metric, y_names, DiffeoSpec, MetricBundle};
use crate::expr::{Binding, Expr};
use crate::grid::{norm_l2, Grid, GridError, GridField};
use crate::problem::{assemble, InitialData, ProblemError, ProblemOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MmsError {
    #[error("exact solution may depend only on t and y1..yd; found `{0}`")]
    Scope(String),
    #[error("exact solution violates the conormal boundary condition: flux {flux:e} at t={t}, y={y:?}")]
    BoundaryCondition { flux: f64, t: f64, y: Vec<f64> },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Problem template for a manufactured-solution study.
#[derive(Debug, Clone)]
pub struct MmsSetup {
    pub spec: DiffeoSpec,
    pub beta: f64,
    pub f: Expr,
    pub exact: Expr,
    pub start: f64,
    pub end: f64,
}

/// `g = d_t e - sum_jk d_j(a_jk d_k e) + beta e - f(t, e) + <b, grad e>`.
pub fn manufactured_source(m: &MetricBundle, beta: f64, f: &Expr, exact: &Expr) -> Expr {
    let ys = y_names(m.dim());
    let grad: Vec<Expr> = ys.iter().map(|y| exact.diff(y)).collect();
    let mut terms = vec![exact.diff("t"), Expr::mul(Expr::constant(beta), exact.clone())];
    for (j, yj) in ys.iter().enumerate() {
        let flux = Expr::sum((0..m.dim()).map(|k| Expr::mul(m.metric_expr(j, k).clone(), grad[k].clone())));
        terms.push(Expr::neg(flux.diff(yj)));
        terms.push(Expr::mul(m.drift_expr(j).clone(), grad[j].clone()));
    }
    let on_exact: HashMap<String, Expr> = [("u".to_string(), exact.clone())].into();
    terms.push(Expr::neg(f.substitute(&on_exact)));
    Expr::sum(terms).simplify()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderRow {
    /// Cell count for spatial studies, time step for temporal ones.
    pub resolution: f64,
    pub error: f64,
    /// Observed order against the previous row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderTable {
    pub kind: &'static str,
    pub scheme: Scheme,
    pub rows: Vec<OrderRow>,
}

impl OrderTable {
    fn new(kind: &'static str, scheme: Scheme, data: Vec<(f64, f64, f64)>) -> Self {
        // (resolution, mesh quantity h, error)
        let mut rows: Vec<OrderRow> = Vec::with_capacity(data.len());
        for (i, &(resolution, h, error)) in data.iter().enumerate() {
            let order = (i > 0).then(|| {
                let (_, h0, e0) = data[i - 1];
                (e0 / error).ln() / (h0 / h).ln()
            });
            rows.push(OrderRow {
                resolution,
                error,
                order: order.filter(|o| o.is_finite() && error > 1e-13),
            });
        }
        OrderTable { kind, scheme, rows }
    }

    /// Order between the two finest resolutions.
    pub fn final_order(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.order)
    }

    pub fn max_error(&self) -> f64 {
        self.rows.iter().map(|r| r.error).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmsReport {
    pub spatial: OrderTable,
    pub temporal: Vec<OrderTable>,
}

fn at_time(e: &Expr, t: f64) -> Expr {
    let s: HashMap<String, Expr> = [("t".to_string(), Expr::constant(t))].into();
    e.substitute(&s)
}

impl MmsSetup {
    fn check(&self, m: &MetricBundle) -> Result<(), MmsError> {
        let ys = y_names(self.spec.dim());
        if let Some(v) = self.exact.free_vars().into_iter().find(|v| v != "t" && !ys.contains(v)) {
            return Err(MmsError::Scope(v));
        }
        let grad: Vec<Expr> = ys.iter().map(|y| self.exact.diff(y)).collect();
        for i in 0..=4 {
            let t = self.start + (self.end - self.start) * i as f64 / 4.0;
            for (y, n) in self.spec.boundary_samples(4) {
                let mut b = Binding::new().with("t", t);
                for (name, v) in ys.iter().zip(&y) {
                    b.set(name, *v);
                }
                let a = m.metric_at(t, &y).map_err(ProblemError::from)?;
                let mut flux = 0.0;
                for j in 0..ys.len() {
                    for k in 0..ys.len() {
                        let gk = grad[k]
                            .eval(&b)
                            .map_err(|source| ProblemError::Eval { cell: 0, t, source })?;
                        flux += n[j] * a[(j, k)] * gk;
                    }
                }
                if flux.abs() > 1e-8 {
                    return Err(MmsError::BoundaryCondition { flux, t, y });
                }
            }
        }
        Ok(())
    }

    fn run_on(&self, cells: usize, cfg: &StepperConfig) -> Result<(GridField, GridField), MmsError> {
        let m = build_metric(&self.spec);
        let source = manufactured_source(&m, self.beta, &self.f, &self.exact);
        let options = ProblemOptions {
            source: Some(source),
            initial: InitialData::Expr(at_time(&self.exact, self.start)),
            ..ProblemOptions::default()
        };
        let p = assemble(&self.spec, self.beta, self.f.clone(), options)?;
        let grid = Arc::new(Grid::for_domain(self.spec.domain(), self.spec.dim(), cells)?);
        let v0 = p.initial_field(&grid, self.start)?;
        let traj = run(&p, &grid, cfg, self.start, self.end, &v0)?;
        let exact = p
            .with_initial(InitialData::Expr(at_time(&self.exact, self.end)))
            .initial_field(&grid, self.end)?;
        Ok((traj.final_state().clone(), exact))
    }
}

fn stepper(scheme: Scheme, dt: f64) -> StepperConfig {
    StepperConfig {
        full_metrics: false,
        cg_tolerance: 1e-13,
        ..StepperConfig::default().with_scheme(scheme, dt)
    }
}

/// `L^2` error at the end time against the exact solution, per cell count,
/// at a fixed time step.
pub fn spatial_convergence(
    setup: &MmsSetup,
    scheme: Scheme,
    cells: &[usize],
    dt: f64,
) -> Result<OrderTable, MmsError> {
    setup.check(&build_metric(&setup.spec))?;
    let cfg = stepper(scheme, dt);
    let mut data = Vec::new();
    for &n in cells {
        let (v, exact) = setup.run_on(n, &cfg)?;
        data.push((n as f64, 1.0 / n as f64, norm_l2(&v.difference(&exact)?)));
    }
    Ok(OrderTable::new("space", scheme, data))
}

/// Time-discretization error on a fixed grid, per time step. The error is
/// taken against a run on the same grid with an eighth of the finest step,
/// so the spatial error (common to all runs) cancels.
pub fn temporal_convergence(
    setup: &MmsSetup,
    scheme: Scheme,
    cells: usize,
    dts: &[f64],
) -> Result<OrderTable, MmsError> {
    setup.check(&build_metric(&setup.spec))?;
    let finest = dts.iter().copied().fold(f64::INFINITY, f64::min);
    let (reference, _) = setup.run_on(cells, &stepper(scheme, finest / 8.0))?;
    let mut data = Vec::new();
    for &dt in dts {
        let (v, _) = setup.run_on(cells, &stepper(scheme, dt))?;
        data.push((dt, dt, norm_l2(&v.difference(&reference)?)));
    }
    Ok(OrderTable::new("time", scheme, data))
}

/// Spatial study (Crank–Nicolson, step `dt_space`) over `cells`, and
/// temporal studies for both schemes on `time_cells` cells over `dts`.
pub fn mms_convergence(
    setup: &MmsSetup,
    cells: &[usize],
    dt_space: f64,
    time_cells: usize,
    dts: &[f64],
) -> Result<MmsReport, MmsError> {
    Ok(MmsReport {
        spatial: spatial_convergence(setup, Scheme::CrankNicolson, cells, dt_space)?,
        temporal: vec![
            temporal_convergence(setup, Scheme::BackwardEuler, time_cells, dts)?,
            temporal_convergence(setup, Scheme::CrankNicolson, time_cells, dts)?,
        ],
    })
}
