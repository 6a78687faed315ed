/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Square `n x n` matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) outside {n}x{n}");
            if last == Some((i, j)) {
                *vals.last_mut().expect("entry exists") += v;
            } else {
                row_ptr[i + 1] += 1;
                cols.push(j);
                vals.push(v);
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    /// `out = self * x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.mul_vec_into(x, &mut out);
        out
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// `self + s * diag(d)`.
    pub fn add_diagonal(&self, s: f64, d: &[f64]) -> Self {
        let mut triplets: Vec<(usize, usize, f64)> = (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .collect();
        triplets.extend(d.iter().enumerate().map(|(i, v)| (i, i, s * v)));
        Self::from_triplets(self.n, triplets)
    }

    /// `diag(d) + s * self`.
    pub fn scaled_plus_diagonal(&self, s: f64, d: &[f64]) -> Self {
        let mut triplets: Vec<(usize, usize, f64)> = (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, s * v)))
            .collect();
        triplets.extend(d.iter().enumerate().map(|(i, v)| (i, i, *v)));
        Self::from_triplets(self.n, triplets)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_sum_and_products_match_dense() {
        let a = CsrMatrix::from_triplets(
            3,
            vec![(0, 0, 2.0), (2, 1, -1.0), (0, 0, 1.0), (1, 2, 4.0), (2, 2, 5.0)],
        );
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.nnz(), 4);
        let x = [1.0, 2.0, 3.0];
        let dense = a.to_dense() * nalgebra::DVector::from_column_slice(&x);
        assert_eq!(a.mul_vec(&x), dense.as_slice());
        assert_eq!(a.symmetry_defect(), 5.0);
        assert_eq!(a.diagonal(), vec![3.0, 0.0, 5.0]);
        assert_eq!(a.scaled_plus_diagonal(2.0, &[1.0, 1.0, 1.0]).get(1, 1), 1.0);
    }
}
