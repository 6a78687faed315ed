//! Sample-based checks of the structural hypotheses on `r`: inverse
//! consistency, separability of `T` (H1), asymptotic drift of the time
//! factor (H4), uniform ellipticity and Hölder regularity in time.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{DiffeoError, DiffeoSpec, MetricBundle};

pub const INVERSE_TOLERANCE: f64 = 1e-8;
pub const SEPARABILITY_TOLERANCE: f64 = 1e-6;

/// Max-norm residual `|r^{-1}(t, r(t, y)) - y|` over the sample product.
/// Rejects the spec when it exceeds [`INVERSE_TOLERANCE`].
pub fn validate_inverse(
    spec: &DiffeoSpec,
    times: &[f64],
    points: &[Vec<f64>],
) -> Result<f64, DiffeoError> {
    if times.is_empty() || points.is_empty() {
        return Err(DiffeoError::EmptyGrid);
    }
    let mut worst = (0.0f64, 0.0, Vec::new());
    for &t in times {
        for y in points {
            let x = spec.map_forward(t, y)?;
            let back = spec.map_inverse(t, &x)?;
            let r = back
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if r > worst.0 || worst.2.is_empty() {
                worst = (r.max(worst.0), t, y.clone());
            }
        }
    }
    if worst.0 > INVERSE_TOLERANCE {
        return Err(DiffeoError::InverseMismatch {
            residual: worst.0,
            t: worst.1,
            y: worst.2,
        });
    }
    Ok(worst.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoelderFit {
    pub theta: f64,
    pub constant: f64,
}

/// Log-log regression of the largest increment `max |s(t_{i+l}) - s(t_i)|`
/// against the lag width, for lags `l = 1..=4`. `series[i]` holds every
/// tracked component at `times[i]`. All-zero increments give
/// `theta = 1, constant = 0`.
pub fn hoelder_fit(times: &[f64], series: &[Vec<f64>]) -> HoelderFit {
    let n = times.len();
    let max_lag = 4.min(n.saturating_sub(1));
    // increments at roundoff level carry no regularity information
    let scale = series.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 64.0 * f64::EPSILON * scale.max(1.0);
    let mut pts = Vec::new();
    for lag in 1..=max_lag {
        let mut incr = 0.0f64;
        let mut width = 0.0;
        for i in 0..n - lag {
            width += times[i + lag] - times[i];
            for (a, b) in series[i + lag].iter().zip(&series[i]) {
                incr = incr.max((a - b).abs());
            }
        }
        width /= (n - lag) as f64;
        if incr > floor && width > 0.0 {
            pts.push((width.ln(), incr.ln()));
        }
    }
    match pts.len() {
        0 => HoelderFit {
            theta: 1.0,
            constant: 0.0,
        },
        1 => HoelderFit {
            theta: 1.0,
            constant: (pts[0].1 - pts[0].0).exp(),
        },
        m => {
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / m as f64;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / m as f64;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            let theta = sxy / sxx;
            HoelderFit {
                theta,
                constant: (my - theta * mx).exp(),
            }
        }
    }
}

/// Regularity in time of the metric: increments of `max_jk sup_y |a_jk|`.
pub fn hoelder_probe(
    m: &MetricBundle,
    times: &[f64],
    points: &[Vec<f64>],
) -> Result<HoelderFit, DiffeoError> {
    if times.len() < 8 || points.is_empty() {
        return Err(DiffeoError::EmptyGrid);
    }
    let series = times
        .iter()
        .map(|&t| {
            let mut row = Vec::with_capacity(points.len() * m.dim() * m.dim());
            for y in points {
                row.extend(m.metric_at(t, y)?.iter().copied());
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, DiffeoError>>()?;
    Ok(hoelder_fit(times, &series))
}

/// Smallest eigenvalue of `M(t, y)` over the sample product; must be positive.
pub fn ellipticity_probe(
    m: &MetricBundle,
    times: &[f64],
    points: &[Vec<f64>],
) -> Result<f64, DiffeoError> {
    if times.is_empty() || points.is_empty() {
        return Err(DiffeoError::EmptyGrid);
    }
    let mut worst = (f64::INFINITY, 0.0, Vec::new());
    for &t in times {
        for y in points {
            let metric = m.metric_at(t, y)?;
            let lambda = SymmetricEigen::new(metric).eigenvalues.min();
            if lambda < worst.0 {
                worst = (lambda, t, y.clone());
            }
        }
    }
    if worst.0 > 0.0 {
        Ok(worst.0)
    } else {
        Err(DiffeoError::NotElliptic {
            min_eigenvalue: worst.0,
            t: worst.1,
            y: worst.2,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparabilityWitness {
    pub t: f64,
    pub y: Vec<f64>,
    pub i: usize,
    pub k: usize,
    pub residual: f64,
}

/// Outcome of the separability test `T_ik(t, y) = h(t) p_ik(y)`, in the
/// gauge `h(t_ref) = 1`.
#[derive(Debug, Clone)]
pub struct SeparabilityReport {
    pub pass: bool,
    pub times: Vec<f64>,
    pub h: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// `p_ik(y)` per sample point.
    pub p: Vec<DMatrix<f64>>,
    /// `p~_jk(y) = sum_i p_ij p_ik` per sample point.
    pub p_tilde: Vec<DMatrix<f64>>,
    pub h0: f64,
    pub h1: f64,
    pub reference_time: f64,
    pub reference_point: Vec<f64>,
    /// Largest `|T - h P|_F / |T|_F` over the samples.
    pub worst_residual: f64,
    pub witness: Option<SeparabilityWitness>,
    pub hoelder: HoelderFit,
}

impl SeparabilityReport {
    /// Linear interpolation of the fitted `h` on the sampled time grid.
    pub fn h_at(&self, t: f64) -> f64 {
        let ts = &self.times;
        if t <= ts[0] {
            return self.h[0];
        }
        let j = ts.partition_point(|&s| s < t);
        if j >= ts.len() {
            return *self.h.last().expect("nonempty");
        }
        let w = (t - ts[j - 1]) / (ts[j] - ts[j - 1]);
        self.h[j - 1] * (1.0 - w) + self.h[j] * w
    }
}

pub fn check_h1(
    m: &MetricBundle,
    times: &[f64],
    points: &[Vec<f64>],
) -> Result<SeparabilityReport, DiffeoError> {
    if times.is_empty() || points.is_empty() {
        return Err(DiffeoError::EmptyGrid);
    }
    let samples: Vec<Vec<DMatrix<f64>>> = times
        .iter()
        .map(|&t| points.iter().map(|y| m.jacobian_at(t, y)).collect())
        .collect::<Result<_, _>>()?;

    let (mut ti, mut yi, mut best) = (0, 0, -1.0);
    for (a, row) in samples.iter().enumerate() {
        for (b, tm) in row.iter().enumerate() {
            let n = tm.norm();
            if n > best {
                (ti, yi, best) = (a, b, n);
            }
        }
    }
    if best <= 0.0 {
        return Err(DiffeoError::Degenerate {
            t: times[ti],
            y: points[yi].clone(),
        });
    }
    let p: Vec<DMatrix<f64>> = samples[ti].clone();
    let p_ref = &p[yi];
    let p_ref_sq = p_ref.norm_squared();
    let h: Vec<f64> = samples
        .iter()
        .map(|row| row[yi].dot(p_ref) / p_ref_sq)
        .collect();

    let mut worst_residual = 0.0f64;
    let mut witness = None;
    for (a, row) in samples.iter().enumerate() {
        for (b, tm) in row.iter().enumerate() {
            let diff = tm - &p[b] * h[a];
            let scale = tm.norm();
            let r = if scale > 0.0 { diff.norm() / scale } else { diff.norm() };
            if r > worst_residual {
                worst_residual = r;
                let (idx, _) = diff
                    .iter()
                    .enumerate()
                    .fold((0, -1.0), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
                // column-major storage
                let (i, k) = (idx % m.dim(), idx / m.dim());
                witness = Some(SeparabilityWitness {
                    t: times[a],
                    y: points[b].clone(),
                    i,
                    k,
                    residual: r,
                });
            }
        }
    }

    let h0 = h.iter().copied().fold(f64::INFINITY, f64::min);
    let h1 = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pass = worst_residual <= SEPARABILITY_TOLERANCE && h0 > 0.0;
    let series: Vec<Vec<f64>> = h.iter().map(|v| vec![*v]).collect();
    Ok(SeparabilityReport {
        pass,
        p_tilde: p.iter().map(|pm| pm.transpose() * pm).collect(),
        p,
        h0,
        h1,
        reference_time: times[ti],
        reference_point: points[yi].clone(),
        worst_residual,
        witness: if pass { None } else { witness },
        hoelder: hoelder_fit(times, &series),
        times: times.to_vec(),
        h,
        points: points.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum H4Verdict {
    Consistent,
    InconsistentAtSampledHorizon,
}

impl H4Verdict {
    pub fn label(self) -> &'static str {
        match self {
            H4Verdict::Consistent => "consistent",
            H4Verdict::InconsistentAtSampledHorizon => "inconsistent at sampled horizon",
        }
    }
}

/// `sup |h(tau + g) - h(tau)|` over the sampled window for a doubling
/// ladder of gaps `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftTable {
    pub gaps: Vec<f64>,
    pub sups: Vec<f64>,
    pub monotone: bool,
    pub verdict: H4Verdict,
}

/// Report-only probe of the asymptotic condition on `h`. A finite sample can
/// never certify the limit; the verdict is `Consistent` when the drift table
/// is nonincreasing and its last entry is below `1e-3 * max |h|`.
pub fn check_h4(report: &SeparabilityReport, horizon: f64) -> DriftTable {
    let ts = &report.times;
    let n = ts.len();
    let mut gaps = Vec::new();
    let mut sups = Vec::new();
    if n >= 2 {
        let dt = (ts[n - 1] - ts[0]) / (n - 1) as f64;
        let mut lag = 1usize;
        while lag < n && lag as f64 * dt <= horizon * (1.0 + 1e-12) {
            let sup = (0..n - lag)
                .map(|i| (report.h[i + lag] - report.h[i]).abs())
                .fold(0.0, f64::max);
            gaps.push(ts[lag] - ts[0]);
            sups.push(sup);
            lag *= 2;
        }
    }
    let monotone = sups.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let scale = report.h.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let small_tail = sups.last().is_none_or(|s| *s <= 1e-3 * scale.max(f64::MIN_POSITIVE));
    let verdict = if monotone && small_tail {
        H4Verdict::Consistent
    } else {
        H4Verdict::InconsistentAtSampledHorizon
    };
    DriftTable {
        gaps,
        sups,
        monotone,
        verdict,
    }
}
