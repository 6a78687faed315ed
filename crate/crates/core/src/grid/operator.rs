use nalgebra::{DMatrix, SymmetricEigen};

use super::{gradient_values, CsrMatrix, Grid, GridField};
use crate::problem::{ProblemError, TransformedProblem};

/// Discrete `A(t) v = -div(M grad v) + beta v` with conormal boundary
/// condition, stored as a symmetric stiffness `K` and a lumped mass `m`
/// (cell volumes) so that `A = diag(m)^{-1} K`. Only the diagonal part of
/// the metric enters `K`; mixed terms are handled by [`cross_divergence`].
#[derive(Debug, Clone)]
pub struct SparseOperator {
    time: f64,
    stiffness: CsrMatrix,
    mass: Vec<f64>,
}

impl SparseOperator {
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// `A_ij`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.stiffness.get(i, j) / self.mass[i]
    }

    /// `A v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = self.stiffness.mul_vec(v);
        for (o, m) in out.iter_mut().zip(&self.mass) {
            *o /= m;
        }
        out
    }

    /// Extreme Ritz values of `A` after `steps` Lanczos iterations in the
    /// mass inner product (in which `A` is self-adjoint). Both lie inside
    /// the spectrum of `A`.
    pub fn ritz_extremes(&self, steps: usize) -> (f64, f64) {
        let n = self.len();
        let k = steps.clamp(1, n);
        let sqrt_m: Vec<f64> = self.mass.iter().map(|m| m.sqrt()).collect();
        // symmetric form S = M^{-1/2} K M^{-1/2}
        let apply_s = |x: &[f64]| -> Vec<f64> {
            let scaled: Vec<f64> = x.iter().zip(&sqrt_m).map(|(a, s)| a / s).collect();
            let mut y = self.stiffness.mul_vec(&scaled);
            for (a, s) in y.iter_mut().zip(&sqrt_m) {
                *a /= s;
            }
            y
        };
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut alpha = Vec::with_capacity(k);
        let mut beta: Vec<f64> = Vec::with_capacity(k);
        // deterministic start vector with components in every mode
        let mut q: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 1013) as f64 / 1013.0).collect();
        normalize(&mut q);
        for j in 0..k {
            let mut w = apply_s(&q);
            let a = dot(&w, &q);
            alpha.push(a);
            basis.push(q.clone());
            for b in &basis {
                let c = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            let norm = dot(&w, &w).sqrt();
            if j + 1 == k || norm <= 1e-12 * a.abs().max(1.0) {
                break;
            }
            beta.push(norm);
            q = w.into_iter().map(|x| x / norm).collect();
        }
        let m = alpha.len();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t).eigenvalues;
        let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

fn metric(p: &TransformedProblem, j: usize, k: usize, t: f64, y: &[f64]) -> Result<f64, ProblemError> {
    Ok(p.metric().metric_entry(j, k, t, y)?)
}

/// Assemble `A(t)` on `grid`.
pub fn assemble_operator(
    p: &TransformedProblem,
    grid: &Grid,
    t: f64,
) -> Result<SparseOperator, ProblemError> {
    let n = grid.len();
    let mass = grid.volumes();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(5 * n);
    let mut couple = |a: usize, b: usize, c: f64| {
        triplets.push((a, a, c));
        triplets.push((b, b, c));
        triplets.push((a, b, -c));
        triplets.push((b, a, -c));
    };
    match grid {
        Grid::Box(g) => {
            let vol: f64 = g.spacing().iter().product();
            for cell in 0..n {
                let idx = g.multi_index(cell);
                for axis in 0..g.counts().len() {
                    if idx[axis] + 1 == g.counts()[axis] {
                        continue;
                    }
                    let h = g.spacing()[axis];
                    let mut y = grid.center(cell);
                    y[axis] += 0.5 * h;
                    let area = vol / h;
                    let c = metric(p, axis, axis, t, &y)? * area / h;
                    couple(cell, cell + g.strides()[axis], c);
                }
            }
        }
        Grid::Radial(g) => {
            let d = grid.dim();
            for i in 0..n - 1 {
                let r = g.face_radius(i);
                let mut y = vec![0.0; d];
                y[0] = r;
                let c = metric(p, 0, 0, t, &y)? * g.face_area(r) / g.dr();
                couple(i, i + 1, c);
            }
        }
    }
    triplets.extend(mass.iter().enumerate().map(|(i, m)| (i, i, p.beta() * m)));
    Ok(SparseOperator {
        time: t,
        stiffness: CsrMatrix::from_triplets(n, triplets),
        mass,
    })
}

/// `sum_{j != k} d_j(a_jk d_k v)` as a conservative face-flux divergence;
/// boundary faces carry no flux. Zero on radial grids and for diagonal
/// metrics.
pub fn cross_divergence(
    p: &TransformedProblem,
    grid: &Grid,
    t: f64,
    v: &[f64],
) -> Result<Vec<f64>, ProblemError> {
    let mut out = vec![0.0; v.len()];
    let g = match grid {
        Grid::Box(g) if !p.metric().is_diagonal() => g,
        _ => return Ok(out),
    };
    let d = g.counts().len();
    let grad = gradient_values(grid, v);
    for cell in 0..v.len() {
        let idx = g.multi_index(cell);
        for axis in 0..d {
            if idx[axis] + 1 == g.counts()[axis] {
                continue;
            }
            let east = cell + g.strides()[axis];
            let h = g.spacing()[axis];
            let mut y = grid.center(cell);
            y[axis] += 0.5 * h;
            let mut flux = 0.0;
            for k in (0..d).filter(|&k| k != axis) {
                let dk = 0.5 * (grad[k][cell] + grad[k][east]);
                flux += metric(p, axis, k, t, &y)? * dk;
            }
            // area / volume = 1 / h on a uniform tensor grid
            out[cell] += flux / h;
            out[east] -= flux / h;
        }
    }
    Ok(out)
}

/// Largest `|n . (M grad v)|` over boundary faces, with the normal
/// derivative taken from a one-sided quadratic fit at the face.
pub fn boundary_residual(p: &TransformedProblem, t: f64, v: &GridField) -> Result<f64, ProblemError> {
    let grid = v.grid();
    let values = v.values();
    let face_derivative = |c0: usize, c1: usize, c2: usize, h: f64| {
        (-2.0 * values[c0] + 3.0 * values[c1] - values[c2]) / h
    };
    let mut worst = 0.0f64;
    match grid.as_ref() {
        Grid::Box(g) => {
            let d = g.counts().len();
            let grad = gradient_values(grid, values);
            for cell in 0..v.len() {
                let idx = g.multi_index(cell);
                for axis in 0..d {
                    let n = g.counts()[axis];
                    let s = g.strides()[axis];
                    let h = g.spacing()[axis];
                    for (at_start, sign) in [(true, -1.0), (false, 1.0)] {
                        if (at_start && idx[axis] != 0) || (!at_start && idx[axis] != n - 1) {
                            continue;
                        }
                        let mut y = grid.center(cell);
                        // derivative along +axis at the face
                        let normal = if at_start {
                            y[axis] = 0.0;
                            face_derivative(cell, cell + s, cell + 2 * s, h)
                        } else {
                            y[axis] = g.extents()[axis];
                            -face_derivative(cell, cell - s, cell - 2 * s, h)
                        };
                        let mut flux = metric(p, axis, axis, t, &y)? * normal;
                        for k in (0..d).filter(|&k| k != axis) {
                            flux += metric(p, axis, k, t, &y)? * grad[k][cell];
                        }
                        worst = worst.max((sign * flux).abs());
                    }
                }
            }
        }
        Grid::Radial(g) => {
            let n = v.len();
            let mut y = vec![0.0; grid.dim()];
            y[0] = 1.0;
            let dr = -face_derivative(n - 1, n - 2, n - 3, g.dr());
            worst = (metric(p, 0, 0, t, &y)? * dr).abs();
        }
    }
    Ok(worst)
}
