//! Time-dependent diffeomorphisms `r(t, ·)` of a fixed reference domain and
//! the coefficient objects they induce on it.

mod metric;
mod probes;

use thiserror::Error;

use crate::expr::{parse, EvalError, Expr, ParseError};

pub use metric::{build_metric, normal_map, MetricBundle};
pub use probes::{
    check_h1, check_h4, ellipticity_probe, hoelder_fit, hoelder_probe, validate_inverse,
    DriftTable, H4Verdict, HoelderFit, SeparabilityReport, SeparabilityWitness,
    INVERSE_TOLERANCE, SEPARABILITY_TOLERANCE,
};

/// Reference domain on which the transformed problem is posed.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// `[0, L_1] x ... x [0, L_d]`.
    Box { extents: Vec<f64> },
    /// Open unit ball; `radial` requests the radially symmetric reduction.
    Ball { radial: bool },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffeoError {
    #[error("dimension must be 1, 2 or 3 (got {0})")]
    Dimension(usize),
    #[error("expected {expected} {what} components, got {got}")]
    ComponentCount {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what} component {index}: {source}")]
    Parse {
        what: &'static str,
        index: usize,
        source: ParseError,
    },
    #[error("{what} component {index} uses variable `{var}` outside its scope")]
    Scope {
        what: &'static str,
        index: usize,
        var: String,
    },
    #[error("box extents must be positive and one per axis")]
    Extents,
    #[error("evaluation failed at t={t}, y={y:?}: {source}")]
    Eval {
        t: f64,
        y: Vec<f64>,
        source: EvalError,
    },
    #[error("inverse map mismatch: residual {residual:e} at t={t}, y={y:?}")]
    InverseMismatch { residual: f64, t: f64, y: Vec<f64> },
    #[error("degenerate Jacobian at t={t}, y={y:?}")]
    Degenerate { t: f64, y: Vec<f64> },
    #[error("metric not positive definite: smallest eigenvalue {min_eigenvalue:e} at t={t}, y={y:?}")]
    NotElliptic {
        min_eigenvalue: f64,
        t: f64,
        y: Vec<f64>,
    },
    #[error("empty sample grid")]
    EmptyGrid,
}

pub fn y_names(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("y{i}")).collect()
}

pub fn x_names(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("x{i}")).collect()
}

/// Forward map `r(t, y)` and inverse `r^{-1}(t, x)`, both declared per
/// component as expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffeoSpec {
    dim: usize,
    forward: Vec<Expr>,
    inverse: Vec<Expr>,
    domain: Domain,
}

impl DiffeoSpec {
    pub fn new(
        dim: usize,
        forward: Vec<Expr>,
        inverse: Vec<Expr>,
        domain: Domain,
    ) -> Result<Self, DiffeoError> {
        if !(1..=3).contains(&dim) {
            return Err(DiffeoError::Dimension(dim));
        }
        for (what, comps) in [("forward", &forward), ("inverse", &inverse)] {
            if comps.len() != dim {
                return Err(DiffeoError::ComponentCount {
                    what,
                    expected: dim,
                    got: comps.len(),
                });
            }
        }
        if let Domain::Box { extents } = &domain {
            if extents.len() != dim || extents.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
                return Err(DiffeoError::Extents);
            }
        }
        let check = |what: &'static str, comps: &[Expr], allowed: &[String]| {
            for (index, c) in comps.iter().enumerate() {
                for var in c.free_vars() {
                    if var != "t" && !allowed.contains(&var) {
                        return Err(DiffeoError::Scope { what, index, var });
                    }
                }
            }
            Ok(())
        };
        check("forward", &forward, &y_names(dim))?;
        check("inverse", &inverse, &x_names(dim))?;
        Ok(DiffeoSpec {
            dim,
            forward,
            inverse,
            domain,
        })
    }

    pub fn from_sources<S: AsRef<str>>(
        dim: usize,
        forward: &[S],
        inverse: &[S],
        domain: Domain,
    ) -> Result<Self, DiffeoError> {
        let parse_all = |what: &'static str, srcs: &[S]| -> Result<Vec<Expr>, DiffeoError> {
            srcs.iter()
                .enumerate()
                .map(|(index, s)| {
                    parse(s.as_ref()).map_err(|source| DiffeoError::Parse {
                        what,
                        index,
                        source,
                    })
                })
                .collect()
        };
        Self::new(
            dim,
            parse_all("forward", forward)?,
            parse_all("inverse", inverse)?,
            domain,
        )
    }

    pub fn identity(dim: usize, domain: Domain) -> Result<Self, DiffeoError> {
        let y = y_names(dim);
        let x = x_names(dim);
        Self::from_sources(dim, &y, &x, domain)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn forward(&self) -> &[Expr] {
        &self.forward
    }

    pub fn inverse(&self) -> &[Expr] {
        &self.inverse
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// `r(t, y)`.
    pub fn map_forward(&self, t: f64, y: &[f64]) -> Result<Vec<f64>, DiffeoError> {
        eval_components(&self.forward, "y", t, y)
    }

    /// `r^{-1}(t, x)`.
    pub fn map_inverse(&self, t: f64, x: &[f64]) -> Result<Vec<f64>, DiffeoError> {
        eval_components(&self.inverse, "x", t, x)
    }

    /// Interior sample points of the reference domain, roughly `per_axis`
    /// per coordinate direction.
    pub fn interior_samples(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let m = per_axis.max(1);
        let offsets: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect();
        let lattice = cartesian(self.dim, &offsets);
        match &self.domain {
            Domain::Box { extents } => lattice
                .into_iter()
                .map(|p| p.iter().zip(extents).map(|(s, l)| s * l).collect())
                .collect(),
            Domain::Ball { .. } => lattice
                .into_iter()
                .map(|p| p.iter().map(|s| 2.0 * s - 1.0).collect::<Vec<_>>())
                .filter(|p| p.iter().map(|v| v * v).sum::<f64>() < 1.0)
                .collect(),
        }
    }

    /// Boundary sample points paired with the outward unit normal. Box
    /// corners and edges are excluded.
    pub fn boundary_samples(&self, per_axis: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        let m = per_axis.max(1);
        let d = self.dim;
        match &self.domain {
            Domain::Box { extents } => {
                let offsets: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect();
                let face = cartesian(d - 1, &offsets);
                let mut out = Vec::new();
                for axis in 0..d {
                    for (side, sign) in [(0.0, -1.0), (1.0, 1.0)] {
                        for p in &face {
                            let mut y = Vec::with_capacity(d);
                            let mut rest = p.iter();
                            for k in 0..d {
                                if k == axis {
                                    y.push(side * extents[k]);
                                } else {
                                    y.push(rest.next().copied().unwrap_or(0.5) * extents[k]);
                                }
                            }
                            let mut n = vec![0.0; d];
                            n[axis] = sign;
                            out.push((y, n));
                        }
                    }
                }
                out
            }
            Domain::Ball { .. } => {
                let points: Vec<Vec<f64>> = match d {
                    1 => vec![vec![-1.0], vec![1.0]],
                    2 => (0..4 * m)
                        .map(|i| {
                            let a = std::f64::consts::TAU * i as f64 / (4 * m) as f64;
                            vec![a.cos(), a.sin()]
                        })
                        .collect(),
                    _ => {
                        // Fibonacci lattice on the sphere
                        let count = (m * m).max(8);
                        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
                        (0..count)
                            .map(|i| {
                                let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                                let rho = (1.0 - z * z).sqrt();
                                let a = golden * i as f64;
                                vec![rho * a.cos(), rho * a.sin(), z]
                            })
                            .collect()
                    }
                };
                points.into_iter().map(|p| (p.clone(), p)).collect()
            }
        }
    }
}

fn cartesian(dim: usize, offsets: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|p| {
                offsets.iter().map(move |&o| {
                    let mut q = p.clone();
                    q.push(o);
                    q
                })
            })
            .collect();
    }
    out
}

fn eval_components(
    comps: &[Expr],
    prefix: &str,
    t: f64,
    point: &[f64],
) -> Result<Vec<f64>, DiffeoError> {
    let mut binding = crate::expr::Binding::new().with("t", t);
    for (i, v) in point.iter().enumerate() {
        binding.set(&format!("{prefix}{}", i + 1), *v);
    }
    comps
        .iter()
        .map(|c| {
            c.eval(&binding).map_err(|source| DiffeoError::Eval {
                t,
                y: point.to_vec(),
                source,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_scope_variables() {
        let err = DiffeoSpec::from_sources(1, &["x1"], &["x1"], Domain::Ball { radial: true })
            .unwrap_err();
        assert!(matches!(err, DiffeoError::Scope { what: "forward", .. }));
        assert!(matches!(
            DiffeoSpec::from_sources(4, &["y1"], &["x1"], Domain::Ball { radial: true }),
            Err(DiffeoError::Dimension(4))
        ));
        assert!(matches!(
            DiffeoSpec::from_sources(1, &["y1"], &["x1"], Domain::Box { extents: vec![0.0] }),
            Err(DiffeoError::Extents)
        ));
    }

    #[test]
    fn box_boundary_samples_skip_corners() {
        let spec = DiffeoSpec::identity(2, Domain::Box { extents: vec![1.0, 2.0] }).unwrap();
        let b = spec.boundary_samples(3);
        assert_eq!(b.len(), 12);
        for (y, n) in &b {
            let on_x = y[0] == 0.0 || y[0] == 1.0;
            let on_y = y[1] == 0.0 || y[1] == 2.0;
            assert!(on_x ^ on_y, "corner sampled: {y:?}");
            assert_eq!(n.iter().map(|v| v * v).sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn ball_samples_are_inside_and_normals_unit() {
        let spec = DiffeoSpec::identity(3, Domain::Ball { radial: true }).unwrap();
        assert!(spec
            .interior_samples(6)
            .iter()
            .all(|p| p.iter().map(|v| v * v).sum::<f64>() < 1.0));
        for (y, n) in spec.boundary_samples(4) {
            assert_eq!(y, n);
            assert!((n.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }
}
