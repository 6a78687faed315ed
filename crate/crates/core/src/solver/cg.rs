use thiserror::Error;

use crate::grid::CsrMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CgError {
    #[error("conjugate gradients hit the cap of {iterations} iterations with relative residual {residual:e}")]
    IterationCap { iterations: usize, residual: f64 },
    #[error("non-positive curvature {curvature:e} at iteration {iteration}: matrix is not positive definite")]
    Indefinite { iteration: usize, curvature: f64 },
    #[error("Jacobi preconditioner needs a positive diagonal (entry {index} is {value:e})")]
    Preconditioner { index: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `|b - A x|_2 / |b|_2` at exit.
    pub residual: f64,
}

/// Default iteration cap: ten times the system size.
pub fn default_iteration_cap(n: usize) -> usize {
    10 * n.max(1)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// definite `a`. Stops once `|b - A x|_2 <= tol |b|_2`.
pub fn cg_solve(
    a: &CsrMatrix,
    rhs: &[f64],
    guess: Option<&[f64]>,
    tol: f64,
    max_iterations: usize,
) -> Result<CgSolution, CgError> {
    let n = rhs.len();
    let diag = a.diagonal();
    if let Some((index, &value)) = diag.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(CgError::Preconditioner { index, value });
    }
    let b_norm = dot(rhs, rhs).sqrt();
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut x = guess.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = rhs.to_vec();
    if guess.is_some() {
        let ax = a.mul_vec(&x);
        r.iter_mut().zip(&ax).for_each(|(ri, ai)| *ri -= ai);
    }
    let mut residual = dot(&r, &r).sqrt() / b_norm;
    if residual <= tol {
        return Ok(CgSolution {
            x,
            iterations: 0,
            residual,
        });
    }
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for iteration in 1..=max_iterations {
        a.mul_vec_into(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(CgError::Indefinite {
                iteration,
                curvature,
            });
        }
        let alpha = rz / curvature;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        residual = dot(&r, &r).sqrt() / b_norm;
        if residual <= tol {
            return Ok(CgSolution {
                x,
                iterations: iteration,
                residual,
            });
        }
        z.iter_mut()
            .zip(r.iter().zip(&diag))
            .for_each(|(zi, (ri, d))| *zi = ri / d);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Err(CgError::IterationCap {
        iterations: max_iterations,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn neumann_1d(n: usize, beta: f64) -> CsrMatrix {
        let h = 1.0 / n as f64;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, beta));
            if i + 1 < n {
                let c = 1.0 / (h * h);
                t.extend([(i, i, c), (i + 1, i + 1, c), (i, i + 1, -c), (i + 1, i, -c)]);
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let a = CsrMatrix::from_triplets(5, (0..5).map(|i| (i, i, 1.0)).collect());
        let b = [1.0, -2.0, 3.0, 0.5, 7.0];
        let s = cg_solve(&a, &b, None, 1e-12, 50).unwrap();
        assert_eq!(s.iterations, 1);
        assert_eq!(s.x, b);
    }

    #[test]
    fn matches_dense_lu() {
        let a = neumann_1d(16, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = cg_solve(&a, &b, None, 1e-12, default_iteration_cap(16)).unwrap();
        let dense = a
            .to_dense()
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(&b))
            .unwrap();
        for (x, y) in s.x.iter().zip(dense.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn indefinite_system_is_refused() {
        let a = neumann_1d(16, -10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let err = cg_solve(&a, &b, None, 1e-10, default_iteration_cap(16)).unwrap_err();
        assert!(matches!(err, CgError::Indefinite { .. } | CgError::IterationCap { .. }), "{err}");
    }
}
