//! Cell-centered finite-volume grids on the reference domain and the
//! discrete operators of the transformed problem.

mod operator;
mod snapshot;
mod sparse;

use std::f64::consts::PI;
use std::sync::Arc;

use thiserror::Error;

use crate::diffeo::Domain;

pub use operator::{assemble_operator, boundary_residual, cross_divergence, SparseOperator};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot, SnapshotError};
pub use sparse::CsrMatrix;

pub const MIN_BOX_CELLS: usize = 3;
pub const MIN_RADIAL_CELLS: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("need at least {min} cells per axis (got {got})")]
    TooCoarse { min: usize, got: usize },
    #[error("grid needs one cell count per axis: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("field has {got} values for a grid of {expected} cells")]
    Length { expected: usize, got: usize },
    #[error("non-finite value {value} at cell {cell}")]
    NonFinite { cell: usize, value: f64 },
    #[error("a radial grid needs a ball domain with the radial reduction")]
    NotRadial,
    #[error("fields live on different grids")]
    Mismatch,
}

/// Tensor grid of `[0, L_1] x .. x [0, L_d]`, cells numbered row-major
/// (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct BoxGrid {
    counts: Vec<usize>,
    extents: Vec<f64>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
}

impl BoxGrid {
    pub fn new(counts: &[usize], extents: &[f64]) -> Result<Self, GridError> {
        if counts.len() != extents.len() || counts.is_empty() || counts.len() > 3 {
            return Err(GridError::Shape {
                expected: extents.len(),
                got: counts.len(),
            });
        }
        if let Some(&got) = counts.iter().find(|&&n| n < MIN_BOX_CELLS) {
            return Err(GridError::TooCoarse {
                min: MIN_BOX_CELLS,
                got,
            });
        }
        let mut strides = vec![1; counts.len()];
        for a in (0..counts.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * counts[a + 1];
        }
        Ok(BoxGrid {
            spacing: extents.iter().zip(counts).map(|(l, &n)| l / n as f64).collect(),
            counts: counts.to_vec(),
            extents: extents.to_vec(),
            strides,
        })
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn multi_index(&self, cell: usize) -> Vec<usize> {
        self.strides
            .iter()
            .zip(&self.counts)
            .map(|(s, n)| (cell / s) % n)
            .collect()
    }

    fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }
}

/// Radial shells `[i dr, (i+1) dr]` of the unit ball in dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    dim: usize,
    cells: usize,
    dr: f64,
}

/// Surface measure of the unit sphere in `R^dim`.
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("dimension {dim} unsupported"),
    }
}

impl RadialGrid {
    pub fn new(dim: usize, cells: usize) -> Result<Self, GridError> {
        if cells < MIN_RADIAL_CELLS {
            return Err(GridError::TooCoarse {
                min: MIN_RADIAL_CELLS,
                got: cells,
            });
        }
        Ok(RadialGrid {
            dim,
            cells,
            dr: 1.0 / cells as f64,
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn dr(&self) -> f64 {
        self.dr
    }

    /// Radius of the outer face of shell `i`.
    pub fn face_radius(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.dr
    }

    /// Area of the sphere of radius `r`.
    pub fn face_area(&self, r: f64) -> f64 {
        sphere_area(self.dim) * r.powi(self.dim as i32 - 1)
    }

    fn shell_volume(&self, i: usize) -> f64 {
        let d = self.dim as i32;
        let outer = self.face_radius(i).powi(d);
        let inner = (i as f64 * self.dr).powi(d);
        sphere_area(self.dim) * (outer - inner) / self.dim as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Box(BoxGrid),
    Radial(RadialGrid),
}

impl Grid {
    /// Grid for a reference domain with `cells` cells along each axis (or
    /// along the radius).
    pub fn for_domain(domain: &Domain, dim: usize, cells: usize) -> Result<Self, GridError> {
        match domain {
            Domain::Box { extents } => Ok(Grid::Box(BoxGrid::new(&vec![cells; dim], extents)?)),
            Domain::Ball { radial: true } => Ok(Grid::Radial(RadialGrid::new(dim, cells)?)),
            Domain::Ball { radial: false } => Err(GridError::NotRadial),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Grid::Box(g) => g.counts.iter().product(),
            Grid::Radial(g) => g.cells,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dimension of the reference domain.
    pub fn dim(&self) -> usize {
        match self {
            Grid::Box(g) => g.counts.len(),
            Grid::Radial(g) => g.dim,
        }
    }

    /// Number of gradient components stored per cell: `d` for boxes, one
    /// (the radial derivative) for radial grids.
    pub fn gradient_components(&self) -> usize {
        match self {
            Grid::Box(g) => g.counts.len(),
            Grid::Radial(_) => 1,
        }
    }

    /// Representative point of a cell; radial cells sit on the first axis.
    pub fn center(&self, cell: usize) -> Vec<f64> {
        match self {
            Grid::Box(g) => g
                .multi_index(cell)
                .iter()
                .zip(&g.spacing)
                .map(|(&i, h)| (i as f64 + 0.5) * h)
                .collect(),
            Grid::Radial(g) => {
                let mut y = vec![0.0; g.dim];
                y[0] = (cell as f64 + 0.5) * g.dr;
                y
            }
        }
    }

    pub fn volume(&self, cell: usize) -> f64 {
        match self {
            Grid::Box(g) => g.cell_volume(),
            Grid::Radial(g) => g.shell_volume(cell),
        }
    }

    pub fn volumes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.volume(i)).collect()
    }

    /// Smallest cell width, the `h` of convergence studies.
    pub fn spacing(&self) -> f64 {
        match self {
            Grid::Box(g) => g.spacing.iter().copied().fold(f64::INFINITY, f64::min),
            Grid::Radial(g) => g.dr,
        }
    }
}

/// Cell values of a scalar field; always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Length {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some((cell, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GridError::NonFinite { cell, value });
        }
        Ok(GridField { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        GridField {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Result<Self, GridError> {
        let values = (0..grid.len()).map(|i| f(&grid.center(i))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self - other`, both on the same grid.
    pub fn difference(&self, other: &GridField) -> Result<GridField, GridError> {
        if self.grid != other.grid && *self.grid != *other.grid {
            return Err(GridError::Mismatch);
        }
        Ok(GridField {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }
}

/// Derivative along one axis of a strided line of cell values: centered in
/// the interior, one-sided second order at the ends. `mirror_start` applies
/// the even reflection used at the center of a radial grid.
fn line_derivative(values: &[f64], cells: &[usize], h: f64, mirror_start: bool, out: &mut [f64]) {
    let n = cells.len();
    let v = |i: usize| values[cells[i]];
    for i in 0..n {
        out[cells[i]] = if i == 0 {
            if mirror_start {
                (v(1) - v(0)) / (2.0 * h)
            } else {
                (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * h)
            }
        } else if i == n - 1 {
            (3.0 * v(n - 1) - 4.0 * v(n - 2) + v(n - 3)) / (2.0 * h)
        } else {
            (v(i + 1) - v(i - 1)) / (2.0 * h)
        };
    }
}

/// Cellwise gradient: one field per axis on a box, the radial derivative on
/// a radial grid.
pub fn gradient(v: &GridField) -> Vec<GridField> {
    let grid = v.grid();
    let comps = gradient_values(grid, v.values());
    comps
        .into_iter()
        .map(|values| GridField {
            grid: grid.clone(),
            values,
        })
        .collect()
}

pub(crate) fn gradient_values(grid: &Grid, values: &[f64]) -> Vec<Vec<f64>> {
    match grid {
        Grid::Box(g) => (0..g.counts.len())
            .map(|axis| {
                let mut out = vec![0.0; values.len()];
                let n = g.counts[axis];
                let stride = g.strides[axis];
                for start in 0..values.len() {
                    if (start / stride) % n != 0 {
                        continue;
                    }
                    let cells: Vec<usize> = (0..n).map(|i| start + i * stride).collect();
                    line_derivative(values, &cells, g.spacing[axis], false, &mut out);
                }
                out
            })
            .collect(),
        Grid::Radial(g) => {
            let mut out = vec![0.0; values.len()];
            let cells: Vec<usize> = (0..g.cells).collect();
            line_derivative(values, &cells, g.dr, true, &mut out);
            vec![out]
        }
    }
}

/// Discrete `L^2` inner product `sum vol_i v_i w_i`.
pub fn inner(v: &GridField, w: &GridField) -> f64 {
    v.grid
        .volumes()
        .iter()
        .zip(v.values.iter().zip(&w.values))
        .map(|(m, (a, b))| m * (a * b))
        .sum()
}

pub fn norm_l2(v: &GridField) -> f64 {
    inner(v, v).sqrt()
}

/// `(|v|^2 + |grad v|^2)^{1/2}` in the discrete `L^2` norm.
pub fn norm_h1(v: &GridField) -> f64 {
    let grad: f64 = gradient(v).iter().map(|g| inner(g, g)).sum();
    (inner(v, v) + grad).sqrt()
}

/// `sum vol_i v_i`.
pub fn integral(v: &GridField) -> f64 {
    v.grid.volumes().iter().zip(&v.values).map(|(m, a)| m * a).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_coarse_grids_and_bad_values() {
        assert!(matches!(
            BoxGrid::new(&[2], &[1.0]),
            Err(GridError::TooCoarse { min: 3, got: 2 })
        ));
        assert!(matches!(
            RadialGrid::new(3, 7),
            Err(GridError::TooCoarse { min: 8, .. })
        ));
        let g = Arc::new(Grid::Box(BoxGrid::new(&[3], &[1.0]).unwrap()));
        assert!(matches!(
            GridField::new(g.clone(), vec![0.0, f64::NAN, 1.0]),
            Err(GridError::NonFinite { cell: 1, .. })
        ));
        assert!(matches!(GridField::new(g, vec![0.0]), Err(GridError::Length { .. })));
    }

    #[test]
    fn volumes_add_up() {
        let g = Grid::Box(BoxGrid::new(&[4, 5, 3], &[1.0, 2.0, 0.5]).unwrap());
        assert!((g.volumes().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let ball = [2.0, PI, 4.0 * PI / 3.0];
        for d in 1..=3 {
            let g = Grid::Radial(RadialGrid::new(d, 16).unwrap());
            assert!((g.volumes().iter().sum::<f64>() - ball[d - 1]).abs() < 1e-13);
        }
    }

    #[test]
    fn row_major_numbering() {
        let g = BoxGrid::new(&[3, 4], &[3.0, 4.0]).unwrap();
        assert_eq!(g.multi_index(5), vec![1, 1]);
        let grid = Grid::Box(g);
        assert_eq!(grid.center(5), vec![1.5, 1.5]);
    }

    #[test]
    fn gradient_exact_on_quadratics() {
        let g = Arc::new(Grid::Box(BoxGrid::new(&[5, 6], &[1.0, 2.0]).unwrap()));
        let v = GridField::from_fn(g, |y| y[0] * y[0] - 3.0 * y[0] * y[1] + y[1]).unwrap();
        let grad = gradient(&v);
        for cell in 0..v.len() {
            let y = v.grid().center(cell);
            assert!((grad[0].values()[cell] - (2.0 * y[0] - 3.0 * y[1])).abs() < 1e-12);
            assert!((grad[1].values()[cell] - (-3.0 * y[0] + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn norms_of_constants() {
        let g = Arc::new(Grid::Radial(RadialGrid::new(3, 10).unwrap()));
        let v = GridField::from_fn(g, |_| 2.0).unwrap();
        let vol = 4.0 * PI / 3.0;
        assert!((norm_l2(&v) - 2.0 * vol.sqrt()).abs() < 1e-12);
        assert!((norm_h1(&v) - norm_l2(&v)).abs() < 1e-12);
        assert!((integral(&v) - 2.0 * vol).abs() < 1e-12);
    }
}
