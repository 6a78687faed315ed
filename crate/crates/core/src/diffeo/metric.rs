use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::{x_names, y_names, DiffeoError, DiffeoSpec};
use crate::expr::{CompiledExpr, EvalError, Expr};

/// Symbolic and compiled coefficient objects of the pulled-back problem.
///
/// With `G_ik(t, x) = d r^{-1}_k / d x_i` and `T(t, y) = G(t, r(t, y))`:
///
/// * `a_jk = sum_i T_ij T_ik` (the metric `M = T* T`),
/// * `b_k = d_t r^{-1}_k - lap_x r^{-1}_k` (both composed with `x = r(t, y)`)
///   `+ sum_j d a_jk / d y_j`,
/// * `K(t, y) = 1 / |T(t, y) n(y)|` on the boundary.
///
/// All compiled evaluators take the slot slice `[t, y1, .., yd]`.
#[derive(Debug, Clone)]
pub struct MetricBundle {
    dim: usize,
    jacobian: Vec<Vec<Expr>>,
    metric: Vec<Vec<Expr>>,
    drift: Vec<Expr>,
    symmetric: bool,
    jacobian_c: Vec<Vec<CompiledExpr>>,
    metric_c: Vec<Vec<CompiledExpr>>,
    drift_c: Vec<CompiledExpr>,
    time_dependent: bool,
}

fn compile_all(exprs: &[Expr], slots: &[&str]) -> Vec<CompiledExpr> {
    exprs
        .iter()
        .map(|e| {
            e.compile(slots)
                .expect("coefficient variables are within {t, y1..yd}")
        })
        .collect()
}

pub fn build_metric(spec: &DiffeoSpec) -> MetricBundle {
    let d = spec.dim();
    let xs = x_names(d);
    let ys = y_names(d);
    let compose: HashMap<String, Expr> = xs
        .iter()
        .cloned()
        .zip(spec.forward().iter().cloned())
        .collect();

    // T_ik(t, y) = d r^{-1}_k / d x_i evaluated at x = r(t, y)
    let jacobian: Vec<Vec<Expr>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|k| spec.inverse()[k].diff(&xs[i]).substitute(&compose).simplify())
                .collect()
        })
        .collect();

    let metric: Vec<Vec<Expr>> = (0..d)
        .map(|j| {
            (0..d)
                .map(|k| {
                    Expr::sum((0..d).map(|i| Expr::mul(jacobian[i][j].clone(), jacobian[i][k].clone())))
                        .simplify()
                })
                .collect()
        })
        .collect();
    let symmetric = (0..d).all(|j| (0..d).all(|k| metric[j][k] == metric[k][j]));

    let drift: Vec<Expr> = (0..d)
        .map(|k| {
            let rinv = &spec.inverse()[k];
            let laplacian = Expr::sum(xs.iter().map(|x| rinv.diff(x).diff(x)));
            let transport = Expr::sub(rinv.diff("t"), laplacian).substitute(&compose);
            let divergence = Expr::sum((0..d).map(|j| metric[j][k].diff(&ys[j])));
            Expr::add(transport, divergence).simplify()
        })
        .collect();

    let mut slots: Vec<&str> = vec!["t"];
    slots.extend(ys.iter().map(String::as_str));
    let time_dependent = metric.iter().flatten().any(|e| e.depends_on("t"));
    MetricBundle {
        dim: d,
        jacobian_c: jacobian.iter().map(|row| compile_all(row, &slots)).collect(),
        metric_c: metric.iter().map(|row| compile_all(row, &slots)).collect(),
        drift_c: compile_all(&drift, &slots),
        jacobian,
        metric,
        drift,
        symmetric,
        time_dependent,
    }
}

impl MetricBundle {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Symbolic `T_ik(t, y)`.
    pub fn jacobian_expr(&self, i: usize, k: usize) -> &Expr {
        &self.jacobian[i][k]
    }

    /// Symbolic `a_jk(t, y)`.
    pub fn metric_expr(&self, j: usize, k: usize) -> &Expr {
        &self.metric[j][k]
    }

    /// Symbolic `b_k(t, y)`.
    pub fn drift_expr(&self, k: usize) -> &Expr {
        &self.drift[k]
    }

    /// Whether `a_jk` and `a_kj` simplified to the same expression tree.
    pub fn is_symbolically_symmetric(&self) -> bool {
        self.symmetric
    }

    /// False when no `a_jk` depends on `t` (autonomous diffusion part).
    pub fn is_time_dependent(&self) -> bool {
        self.time_dependent
    }

    /// Whether every off-diagonal `a_jk` simplified to zero.
    pub fn is_diagonal(&self) -> bool {
        (0..self.dim).all(|j| (0..self.dim).all(|k| j == k || self.metric[j][k].is_zero()))
    }

    fn slots(&self, t: f64, y: &[f64]) -> [f64; 4] {
        let mut s = [0.0; 4];
        s[0] = t;
        s[1..=self.dim].copy_from_slice(&y[..self.dim]);
        s
    }

    fn wrap(t: f64, y: &[f64]) -> impl Fn(EvalError) -> DiffeoError + '_ {
        move |source| DiffeoError::Eval {
            t,
            y: y.to_vec(),
            source,
        }
    }

    pub fn metric_entry(&self, j: usize, k: usize, t: f64, y: &[f64]) -> Result<f64, DiffeoError> {
        self.metric_c[j][k]
            .eval(&self.slots(t, y))
            .map_err(Self::wrap(t, y))
    }

    pub fn drift_entry(&self, k: usize, t: f64, y: &[f64]) -> Result<f64, DiffeoError> {
        self.drift_c[k]
            .eval(&self.slots(t, y))
            .map_err(Self::wrap(t, y))
    }

    pub fn jacobian_at(&self, t: f64, y: &[f64]) -> Result<DMatrix<f64>, DiffeoError> {
        let s = self.slots(t, y);
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for k in 0..self.dim {
                m[(i, k)] = self.jacobian_c[i][k].eval(&s).map_err(Self::wrap(t, y))?;
            }
        }
        Ok(m)
    }

    pub fn metric_at(&self, t: f64, y: &[f64]) -> Result<DMatrix<f64>, DiffeoError> {
        let s = self.slots(t, y);
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for j in 0..self.dim {
            for k in 0..self.dim {
                m[(j, k)] = self.metric_c[j][k].eval(&s).map_err(Self::wrap(t, y))?;
            }
        }
        Ok(m)
    }

    pub fn drift_at(&self, t: f64, y: &[f64]) -> Result<Vec<f64>, DiffeoError> {
        let s = self.slots(t, y);
        self.drift_c
            .iter()
            .map(|c| c.eval(&s).map_err(Self::wrap(t, y)))
            .collect()
    }

    /// `K(t, y) = 1 / |T(t, y) n|`.
    pub fn boundary_weight(&self, t: f64, y: &[f64], n: &[f64]) -> Result<f64, DiffeoError> {
        let tn = self.jacobian_at(t, y)? * DVector::from_column_slice(&n[..self.dim]);
        let norm = tn.norm();
        if norm > 0.0 && norm.is_finite() {
            Ok(1.0 / norm)
        } else {
            Err(DiffeoError::Degenerate { t, y: y.to_vec() })
        }
    }
}

/// Unit outward normal of the moving boundary at `x = r(t, y)`:
/// `T(t, y) n / |T(t, y) n|`.
pub fn normal_map(m: &MetricBundle, t: f64, y: &[f64], n: &[f64]) -> Result<Vec<f64>, DiffeoError> {
    let tn = m.jacobian_at(t, y)? * DVector::from_column_slice(&n[..m.dim()]);
    let norm = tn.norm();
    if !(norm > 1e-300 && norm.is_finite()) {
        return Err(DiffeoError::Degenerate { t, y: y.to_vec() });
    }
    Ok(tn.iter().map(|v| v / norm).collect())
}
