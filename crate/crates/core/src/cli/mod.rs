//! Batch front end: subcommands, report files and exit codes.

pub mod config;
pub mod table;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use log::{info, warn};

use crate::diffeo::{
    build_metric, check_h1, check_h4, ellipticity_probe, hoelder_probe, validate_inverse,
    x_names, y_names, DiffeoSpec, Domain, H4Verdict, MetricBundle,
};
use crate::expr::Expr;
use crate::grid::{write_snapshot, Grid, GridField};
use crate::problem::{check_h2, check_h3, InitialData, TransformedProblem};
use crate::pullback::{
    absorbing_radius, cocycle_check, decay_fit, drift_table, nonlinear_part, pullback_converge,
    PullbackError, PullbackReport,
};
use crate::solver::{
    mms_convergence, run, run_homogeneous, MmsError, MmsReport, MmsSetup, SolverError, Trajectory,
};

pub use config::{ConfigError, RunConfig};
pub use table::{num, Table, TableError};

#[derive(Debug, Parser)]
#[command(name = "movingdom", version, about = "Semilinear heat problems on moving domains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for independent runs.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Seed for random initial fields, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check the structural hypotheses on the diffeomorphism and nonlinearity.
    Check,
    /// Dump the fixed-domain coefficients, symbolic and sampled.
    Transform,
    /// Integrate the fixed-domain problem.
    Solve,
    /// Run the pullback-dynamics experiments.
    Pullback,
    /// Manufactured-solution convergence study.
    Mms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    Hypothesis = 1,
    Config = 2,
    Solver = 3,
    ResourceCap = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug)]
pub struct CommandError {
    pub status: ExitStatus,
    pub message: String,
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CommandError {}

fn fail(status: ExitStatus, message: impl fmt::Display) -> CommandError {
    CommandError {
        status,
        message: message.to_string(),
    }
}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        fail(ExitStatus::Config, e)
    }
}

impl From<TableError> for CommandError {
    fn from(e: TableError) -> Self {
        fail(ExitStatus::Solver, format!("writing output: {e}"))
    }
}

impl From<std::io::Error> for CommandError {
    fn from(e: std::io::Error) -> Self {
        fail(ExitStatus::Solver, format!("writing output: {e}"))
    }
}

impl From<SolverError> for CommandError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::StepCap { .. } => fail(ExitStatus::ResourceCap, e),
            SolverError::Config(_) | SolverError::Interval { .. } => fail(ExitStatus::Config, e),
            other => fail(ExitStatus::Solver, other),
        }
    }
}

impl From<PullbackError> for CommandError {
    fn from(e: PullbackError) -> Self {
        match e {
            PullbackError::Solver(s) => s.into(),
            other => fail(ExitStatus::Solver, other),
        }
    }
}

impl From<MmsError> for CommandError {
    fn from(e: MmsError) -> Self {
        match e {
            MmsError::Solver(s) => s.into(),
            MmsError::Scope(_) | MmsError::BoundaryCondition { .. } | MmsError::Grid(_) => {
                fail(ExitStatus::Config, e)
            }
            other => fail(ExitStatus::Solver, other),
        }
    }
}

/// Parsed command line plus loaded configuration.
pub struct Invocation {
    pub command: Command,
    pub config: RunConfig,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

/// Run a parsed command line and map the outcome to an exit status.
pub fn execute(cli: Cli) -> ExitStatus {
    let outcome = (|| {
        let path = cli
            .config
            .clone()
            .ok_or_else(|| fail(ExitStatus::Config, "--config <path> is required"))?;
        let config = RunConfig::load(&path)?;
        let inv = Invocation {
            command: cli.command,
            config,
            out: cli.out.clone(),
            seed: cli.seed,
        };
        match cli.jobs {
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| fail(ExitStatus::Config, e))?;
                pool.install(|| dispatch(&inv))
            }
            None => dispatch(&inv),
        }
    })();
    match outcome {
        Ok(status) => status,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.status
        }
    }
}

pub fn dispatch(inv: &Invocation) -> Result<ExitStatus, CommandError> {
    fs::create_dir_all(&inv.out)?;
    match inv.command {
        Command::Check => cmd_check(&inv.config, &inv.out).map(|r| r.status()),
        Command::Transform => cmd_transform(&inv.config, &inv.out),
        Command::Solve => cmd_solve(&inv.config, &inv.out, inv.seed),
        Command::Pullback => cmd_pullback(&inv.config, &inv.out, inv.seed),
        Command::Mms => cmd_mms(&inv.config, &inv.out).map(|_| ExitStatus::Ok),
    }
}

/// One row of the hypothesis report.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub check: &'static str,
    pub status: &'static str,
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub rows: Vec<CheckRow>,
    pub h4_gaps: Vec<(f64, f64)>,
    pub h_series: Vec<(f64, f64)>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.status != "fail")
    }

    pub fn status(&self) -> ExitStatus {
        if self.passed() {
            ExitStatus::Ok
        } else {
            ExitStatus::Hypothesis
        }
    }

    pub fn row(&self, check: &str) -> Option<&CheckRow> {
        self.rows.iter().find(|r| r.check == check)
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

/// Evaluate every hypothesis without writing files.
pub fn run_checks(cfg: &RunConfig) -> Result<CheckReport, CommandError> {
    let spec = cfg.spec()?;
    let f = cfg.nonlinearity()?;
    let metric = build_metric(&spec);
    let times = cfg.check_times();
    let points = spec.interior_samples(cfg.experiment.check_points);
    let mut rows = Vec::new();

    match validate_inverse(&spec, &times, &points) {
        Ok(r) => rows.push(CheckRow {
            check: "inverse",
            status: "pass",
            value: r,
            detail: String::new(),
        }),
        Err(e) => rows.push(CheckRow {
            check: "inverse",
            status: "fail",
            value: f64::NAN,
            detail: e.to_string(),
        }),
    }

    let mut h4_gaps = Vec::new();
    let mut h_series = Vec::new();
    match check_h1(&metric, &times, &points) {
        Ok(report) => {
            let detail = match &report.witness {
                Some(w) => format!(
                    "witness t={} y={:?} entry=({},{}) residual={:e}",
                    w.t,
                    w.y,
                    w.i + 1,
                    w.k + 1,
                    w.residual
                ),
                None => format!("h0={} h1={}", report.h0, report.h1),
            };
            rows.push(CheckRow {
                check: "h1",
                status: verdict(report.pass),
                value: report.worst_residual,
                detail,
            });
            let horizon = cfg
                .experiment
                .h4_horizon
                .unwrap_or((times[times.len() - 1] - times[0]) / 2.0);
            let table = check_h4(&report, horizon);
            rows.push(CheckRow {
                check: "h4",
                status: if table.verdict == H4Verdict::Consistent {
                    "pass"
                } else {
                    "advisory"
                },
                value: table.sups.last().copied().unwrap_or(0.0),
                detail: table.verdict.label().to_string(),
            });
            h4_gaps = table.gaps.iter().copied().zip(table.sups.iter().copied()).collect();
            h_series = report.times.iter().copied().zip(report.h.iter().copied()).collect();
        }
        Err(e) => rows.push(CheckRow {
            check: "h1",
            status: "fail",
            value: f64::NAN,
            detail: e.to_string(),
        }),
    }

    let ellipticity_times = match cfg.experiment.ellipticity_window {
        Some([a, b]) => (0..times.len())
            .map(|i| a + (b - a) * i as f64 / (times.len() - 1) as f64)
            .collect(),
        None => times.clone(),
    };
    match ellipticity_probe(&metric, &ellipticity_times, &points) {
        Ok(c) => rows.push(CheckRow {
            check: "ellipticity",
            status: "pass",
            value: c,
            detail: String::new(),
        }),
        Err(e) => rows.push(CheckRow {
            check: "ellipticity",
            status: "fail",
            value: f64::NAN,
            detail: e.to_string(),
        }),
    }

    match hoelder_probe(&metric, &times, &points) {
        Ok(fit) => rows.push(CheckRow {
            check: "hoelder",
            status: verdict(fit.theta > 0.0),
            value: fit.theta,
            detail: format!("constant={}", fit.constant),
        }),
        Err(e) => rows.push(CheckRow {
            check: "hoelder",
            status: "fail",
            value: f64::NAN,
            detail: e.to_string(),
        }),
    }

    let window = cfg.nonlinearity_window();
    let growth = check_h2(&f, &window, cfg.problem.alpha, cfg.growth_dimension())
        .map_err(|e| fail(ExitStatus::Config, e))?;
    rows.push(CheckRow {
        check: "h2",
        status: verdict(growth.pass),
        value: growth.rho,
        detail: format!(
            "c={} cap={} measured_exponent={}",
            growth.c, growth.cap, growth.measured_exponent
        ),
    });
    let sign = check_h3(&f, &window).map_err(|e| fail(ExitStatus::Config, e))?;
    rows.push(CheckRow {
        check: "h3",
        status: verdict(sign.pass),
        value: sign.k1,
        detail: match sign.witness {
            Some((t, u)) => format!("k2={} witness t={t} u={u}", sign.k2),
            None => format!("k2={}", sign.k2),
        },
    });
    Ok(CheckReport {
        rows,
        h4_gaps,
        h_series,
    })
}

pub fn cmd_check(cfg: &RunConfig, out: &Path) -> Result<CheckReport, CommandError> {
    let report = run_checks(cfg)?;
    let mut t = Table::new("hypothesis_report", 1, &["check", "status", "value", "detail"]);
    for r in &report.rows {
        t.push([r.check.to_string(), r.status.to_string(), num(r.value), r.detail.clone()]);
        match r.status {
            "fail" => warn!("{} failed: {}", r.check, r.detail),
            "advisory" => warn!("{}: {}", r.check, r.detail),
            _ => info!("{} passed ({})", r.check, num(r.value)),
        }
        println!("{:<12} {:<9} {} {}", r.check, r.status, num(r.value), r.detail);
    }
    t.save(&out.join("hypothesis_report.csv"))?;
    let mut g = Table::new("h4_drift", 1, &["gap", "sup"]);
    for (gap, sup) in &report.h4_gaps {
        g.push([num(*gap), num(*sup)]);
    }
    g.save(&out.join("h4_drift.csv"))?;
    let mut h = Table::new("time_factor", 1, &["t", "h"]);
    for (t, v) in &report.h_series {
        h.push([num(*t), num(*v)]);
    }
    h.save(&out.join("time_factor.csv"))?;
    Ok(report)
}

fn require_checks(cfg: &RunConfig) -> Result<(), CommandError> {
    let report = run_checks(cfg)?;
    if let Some(r) = report.rows.iter().find(|r| r.status == "fail") {
        return Err(fail(
            ExitStatus::Hypothesis,
            format!("hypothesis {} failed: {}", r.check, r.detail),
        ));
    }
    Ok(())
}

/// `K = 1 / |T n|` for a fixed normal, as an expression in `t, y`.
fn boundary_weight_expr(m: &MetricBundle, n: &[Expr]) -> Expr {
    let d = m.dim();
    let tn = (0..d).map(|i| {
        let c = Expr::sum((0..d).map(|k| Expr::mul(m.jacobian_expr(i, k).clone(), n[k].clone())));
        Expr::pow(c, 2.0)
    });
    Expr::div(
        Expr::one(),
        Expr::unary(crate::expr::UnaryOp::Sqrt, Expr::sum(tn)),
    )
    .simplify()
}

pub fn transform_table(spec: &DiffeoSpec) -> Table {
    let m = build_metric(spec);
    let d = spec.dim();
    let mut t = Table::new("coefficients", 1, &["name", "expression"]);
    for j in 0..d {
        for k in 0..d {
            t.push([format!("a_{}{}", j + 1, k + 1), m.metric_expr(j, k).to_string()]);
        }
    }
    for k in 0..d {
        t.push([format!("b_{}", k + 1), m.drift_expr(k).to_string()]);
    }
    match spec.domain() {
        Domain::Box { .. } => {
            for axis in 0..d {
                for (side, sign) in [("-", -1.0), ("+", 1.0)] {
                    let n: Vec<Expr> = (0..d)
                        .map(|k| Expr::constant(if k == axis { sign } else { 0.0 }))
                        .collect();
                    t.push([
                        format!("K_{}{side}", axis + 1),
                        boundary_weight_expr(&m, &n).to_string(),
                    ]);
                }
            }
        }
        Domain::Ball { .. } => {
            // the outward normal of the unit sphere at y is y itself
            let n: Vec<Expr> = y_names(d).iter().map(|y| Expr::var(y)).collect();
            t.push(["K".to_string(), boundary_weight_expr(&m, &n).to_string()]);
        }
    }
    t
}

pub fn cmd_transform(cfg: &RunConfig, out: &Path) -> Result<ExitStatus, CommandError> {
    require_checks(cfg)?;
    let spec = cfg.spec()?;
    let m = build_metric(&spec);
    let symbolic = transform_table(&spec);
    for row in &symbolic.rows {
        println!("{} = {}", row[0], row[1]);
    }
    symbolic.save(&out.join("coefficients.csv"))?;

    let d = spec.dim();
    let ys = y_names(d);
    let mut columns: Vec<String> = vec!["t".into()];
    columns.extend(ys.iter().cloned());
    for j in 1..=d {
        for k in 1..=d {
            columns.push(format!("a_{j}{k}"));
        }
    }
    columns.extend((1..=d).map(|k| format!("b_{k}")));
    let refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut sampled = Table::new("coefficients_sampled", 1, &refs);
    let points = match spec.domain() {
        Domain::Ball { radial: true } => {
            let grid = cfg.grid(&spec)?;
            (0..grid.len()).map(|i| grid.center(i)).collect()
        }
        _ => spec.interior_samples(cfg.experiment.check_points),
    };
    for &t in &cfg.experiment.sample_times {
        for y in &points {
            let a = m.metric_at(t, y).map_err(|e| fail(ExitStatus::Config, e))?;
            let b = m.drift_at(t, y).map_err(|e| fail(ExitStatus::Config, e))?;
            let mut row = vec![num(t)];
            row.extend(y.iter().map(|v| num(*v)));
            for j in 0..d {
                for k in 0..d {
                    row.push(num(a[(j, k)]));
                }
            }
            row.extend(b.iter().map(|v| num(*v)));
            sampled.push(row);
        }
    }
    sampled.save(&out.join("coefficients_sampled.csv"))?;
    Ok(ExitStatus::Ok)
}

pub fn metrics_table(traj: &Trajectory) -> Table {
    let mut t = Table::new(
        "metrics",
        1,
        &["step", "t", "L2", "H1", "mass", "boundary_residual", "cg_iters"],
    );
    for m in &traj.metrics {
        t.push([
            m.step.to_string(),
            num(m.t),
            num(m.l2),
            num(m.h1),
            num(m.mass),
            num(m.boundary_residual),
            m.cg_iterations.to_string(),
        ]);
    }
    t
}

/// Values of `u(t, x) = v(t, r^{-1}(t, x))` at the image points `x = r(t, y)`
/// of the cell centers.
pub fn moving_table(spec: &DiffeoSpec, t: f64, v: &GridField) -> Result<Table, CommandError> {
    let d = spec.dim();
    let mut columns = x_names(d);
    columns.push("u".into());
    let refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut table = Table::new("moving_snapshot", 1, &refs);
    let grid = v.grid();
    for (cell, value) in v.values().iter().enumerate() {
        let x = spec
            .map_forward(t, &grid.center(cell))
            .map_err(|e| fail(ExitStatus::Solver, e))?;
        let mut row: Vec<String> = x.iter().map(|c| num(*c)).collect();
        row.push(num(*value));
        table.push(row);
    }
    Ok(table)
}

pub fn cmd_solve(cfg: &RunConfig, out: &Path, seed: Option<u64>) -> Result<ExitStatus, CommandError> {
    require_checks(cfg)?;
    if cfg.problem.exact.is_some() {
        cmd_mms(cfg, out)?;
    }
    let p = cfg.problem(seed)?;
    let grid = cfg.grid(p.spec())?;
    let e = &cfg.experiment;
    let v0 = p.initial_field(&grid, e.tau).map_err(|e| fail(ExitStatus::Config, e))?;
    let traj = run(&p, &grid, &cfg.stepper(), e.tau, e.end, &v0)?;
    metrics_table(&traj).save(&out.join("metrics.csv"))?;
    let snaps = out.join("snapshots");
    fs::create_dir_all(&snaps)?;
    let moving = out.join("moving");
    if e.moving_snapshots {
        fs::create_dir_all(&moving)?;
    }
    for (i, (t, field)) in traj.snapshots.iter().enumerate() {
        let file = fs::File::create(snaps.join(format!("snapshot_{i:05}.txt")))?;
        write_snapshot(std::io::BufWriter::new(file), *t, field)?;
        if e.moving_snapshots {
            moving_table(p.spec(), *t, field)?.save(&moving.join(format!("moving_{i:05}.csv")))?;
        }
    }
    let last = traj.metrics.last().expect("nonempty");
    println!(
        "t={} L2={} H1={} mass={} steps={}",
        num(last.t),
        num(last.l2),
        num(last.h1),
        num(last.mass),
        traj.steps()
    );
    Ok(ExitStatus::Ok)
}

pub fn mms_table(report: &MmsReport) -> Table {
    let mut t = Table::new("mms_orders", 1, &["kind", "scheme", "resolution", "error", "order"]);
    for table in std::iter::once(&report.spatial).chain(&report.temporal) {
        for row in &table.rows {
            t.push([
                table.kind.to_string(),
                table.scheme.label().to_string(),
                num(row.resolution),
                num(row.error),
                row.order.map_or_else(String::new, num),
            ]);
        }
    }
    t
}

pub fn cmd_mms(cfg: &RunConfig, out: &Path) -> Result<MmsReport, CommandError> {
    let exact = cfg
        .exact()?
        .ok_or_else(|| fail(ExitStatus::Config, "problem.exact is required for mms"))?;
    let e = &cfg.experiment;
    let setup = MmsSetup {
        spec: cfg.spec()?,
        beta: cfg.problem.beta,
        f: cfg.nonlinearity()?,
        exact,
        start: e.tau,
        end: e.end,
    };
    let report = mms_convergence(&setup, &e.mms_cells, e.mms_dt, e.mms_time_cells, &e.mms_dts)?;
    let table = mms_table(&report);
    for row in &table.rows {
        println!("{}", row.join(" "));
    }
    table.save(&out.join("mms_orders.csv"))?;
    Ok(report)
}

fn random_seed_fields(
    p: &TransformedProblem,
    grid: &Arc<Grid>,
    cfg: &RunConfig,
    tau: f64,
    seed: Option<u64>,
) -> Result<Vec<GridField>, CommandError> {
    let base = seed.unwrap_or(0);
    cfg.experiment
        .seeds
        .iter()
        .map(|s| {
            p.with_initial(InitialData::Random {
                seed: s.wrapping_add(base),
                amplitude: cfg.problem.initial_amplitude,
            })
            .initial_field(grid, tau)
            .map_err(|e| fail(ExitStatus::Config, e))
        })
        .collect()
}

/// All pullback experiments; the flag is set when the step budget cut the
/// pullback ladder short.
pub fn pullback_experiments(
    cfg: &RunConfig,
    seed: Option<u64>,
) -> Result<(PullbackReport, Vec<(f64, f64)>), CommandError> {
    let p = cfg.problem(seed)?;
    let grid = cfg.grid(p.spec())?;
    let stepper = cfg.stepper();
    let e = &cfg.experiment;
    let tau = e.t_star - e.horizon;

    let seeds = random_seed_fields(&p, &grid, cfg, tau, seed)?;
    let decay = decay_fit(&p, &grid, &stepper, tau, e.horizon, &seeds)?;
    let decay_curve = match seeds.first() {
        Some(w) => {
            let traj = run_homogeneous(&p, &grid, &stepper, tau, e.t_star, w)?;
            let w0 = traj.metrics[0].l2;
            traj.metrics
                .iter()
                .filter(|m| m.l2 > 0.0 && w0 > 0.0)
                .map(|m| (m.t - tau, (m.l2 / w0).ln()))
                .collect()
        }
        None => Vec::new(),
    };
    let drift = drift_table(&p, &grid, e.t_star, &e.drift_gaps)?;
    let gaps = pullback_converge(&p, &grid, &stepper, e.t_star, p.initial(), e.k_max, e.base)?;

    let mut family = Vec::new();
    for &r in &e.radii {
        family.push(InitialData::Expr(Expr::constant(r)));
        for s in e.seeds.iter().take(2) {
            family.push(InitialData::Random {
                seed: s.wrapping_add(seed.unwrap_or(0)),
                amplitude: r,
            });
        }
    }
    let k_radius = gaps.taus.len().saturating_sub(1);
    let radius = absorbing_radius(&p, &grid, &stepper, e.t_star, &family, k_radius, e.base)?;

    let u0 = p.initial_field(&grid, tau).map_err(|e| fail(ExitStatus::Config, e))?;
    let split = e.cocycle_split.unwrap_or_else(|| {
        let mid = 0.5 * (tau + e.t_star);
        (mid / stepper.dt).round() * stepper.dt
    });
    let cocycle_residual = cocycle_check(&p, &grid, &stepper, tau, split, e.t_star, &u0)?;
    let nonlinear_part_h1 = nonlinear_part(&p, &grid, &stepper, tau, e.t_star, &u0)?;
    Ok((
        PullbackReport {
            decay,
            drift,
            gaps,
            radius,
            cocycle_residual,
            nonlinear_part_h1,
        },
        decay_curve,
    ))
}

pub fn pullback_table(r: &PullbackReport) -> Table {
    let mut t = Table::new("pullback_report", 1, &["section", "index", "key", "value"]);
    let mut put = |section: &str, index: usize, key: &str, value: String| {
        t.push([section.to_string(), index.to_string(), key.to_string(), value]);
    };
    put(
        "status",
        0,
        "complete",
        r.gaps.truncated_from.is_none().to_string(),
    );
    if let Some(k) = r.gaps.truncated_from {
        put("status", 0, "requested_k_max", k.to_string());
    }
    put("decay_fit", 0, "rate", num(r.decay.rate));
    put("decay_fit", 0, "constant", num(r.decay.constant));
    put("decay_fit", 0, "skipped", r.decay.skipped.to_string());
    for (i, s) in r.decay.seeds.iter().enumerate() {
        put("decay_seed", i, "rate", s.rate.map_or_else(String::new, num));
        put("decay_seed", i, "log_constant", s.log_constant.map_or_else(String::new, num));
    }
    for (i, d) in r.drift.iter().enumerate() {
        put("drift_table", i, "t", num(d.t));
        put("drift_table", i, "tau", num(d.tau));
        put("drift_table", i, "r", num(d.r));
        put("drift_table", i, "norm", num(d.norm));
    }
    for (k, tau) in r.gaps.taus.iter().enumerate() {
        put("gaps", k, "tau", num(*tau));
        if let Some(g) = r.gaps.gaps.get(k) {
            put("gaps", k, "delta", num(*g));
        }
    }
    put("gaps", 0, "decreasing", r.gaps.decreasing.to_string());
    put("radius", 0, "radius", num(r.radius.radius));
    for (i, (a, b)) in r.radius.initial_h1.iter().zip(&r.radius.terminal_h1).enumerate() {
        put("radius", i, "initial_h1", num(*a));
        put("radius", i, "terminal_h1", num(*b));
    }
    put("cocycle", 0, "residual", num(r.cocycle_residual));
    put("nonlinear_part", 0, "h1", num(r.nonlinear_part_h1));
    t
}

pub fn cmd_pullback(cfg: &RunConfig, out: &Path, seed: Option<u64>) -> Result<ExitStatus, CommandError> {
    require_checks(cfg)?;
    let (report, decay_curve) = pullback_experiments(cfg, seed)?;
    pullback_table(&report).save(&out.join("pullback_report.csv"))?;

    let mut gaps = Table::new("plot_gaps", 1, &["k", "delta"]);
    for (k, g) in report.gaps.gaps.iter().enumerate() {
        gaps.push([k.to_string(), num(*g)]);
    }
    gaps.save(&out.join("plot_gaps.csv"))?;
    let mut decay = Table::new("plot_decay", 1, &["elapsed", "log_norm_ratio"]);
    for (x, y) in &decay_curve {
        decay.push([num(*x), num(*y)]);
    }
    decay.save(&out.join("plot_decay.csv"))?;
    let mut drift = Table::new("plot_drift", 1, &["gap", "norm"]);
    for d in &report.drift {
        drift.push([num(d.t - d.tau), num(d.norm)]);
    }
    drift.save(&out.join("plot_drift.csv"))?;

    println!(
        "decay rate={} K={} radius={} cocycle={} last_gap={}",
        num(report.decay.rate),
        num(report.decay.constant),
        num(report.radius.radius),
        num(report.cocycle_residual),
        report.gaps.last_gap().map_or_else(|| "-".into(), num)
    );
    if let Some(k) = report.gaps.truncated_from {
        warn!("step budget truncated the pullback ladder (requested k_max={k})");
        return Ok(ExitStatus::ResourceCap);
    }
    Ok(ExitStatus::Ok)
}
