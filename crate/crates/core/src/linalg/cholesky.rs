use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;

/// Dense Cholesky factor L with M = L L^T, lower triangle stored packed
/// row by row.
#[derive(Debug, Clone)]
pub struct DenseFactor {
    n: usize,
    lower: Vec<f64>,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

impl DenseFactor {
    /// Factors a dense row-major SPD matrix. Fails on a non-positive pivot.
    pub fn factor_dense(n: usize, m: &[f64]) -> Result<Self> {
        assert_eq!(m.len(), n * n, "factor_dense: bad buffer size");
        let mut lower = vec![0.0; n * (n + 1) / 2];
        for i in 0..n {
            let ri = row_start(i);
            for j in 0..=i {
                let rj = row_start(j);
                let mut sum = m[i * n + j];
                // dot of packed rows i and j, prefix length j
                for k in 0..j {
                    sum -= lower[ri + k] * lower[rj + k];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: sum });
                    }
                    lower[ri + j] = sum.sqrt();
                } else {
                    lower[ri + j] = sum / lower[rj + j];
                }
            }
        }
        Ok(Self { n, lower })
    }

    /// Factors the principal submatrix of `a` on `indices`.
    pub fn factor_submatrix(a: &SparseMatrix, indices: &[usize]) -> Result<Self> {
        let block = a.dense_submatrix(indices);
        Self::factor_dense(indices.len(), &block)
    }

    pub fn factor_sparse(m: &SparseMatrix) -> Result<Self> {
        if m.n_rows() != m.n_cols() {
            return Err(Error::DimensionMismatch("cholesky of non-square".into()));
        }
        Self::factor_dense(m.n_rows(), &m.to_dense())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves M x = b by forward and back substitution.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "cholesky_solve: rhs length {} vs dimension {}",
                b.len(),
                self.n
            )));
        }
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        // L y = b
        for i in 0..n {
            let ri = row_start(i);
            let mut sum = x[i];
            for k in 0..i {
                sum -= self.lower[ri + k] * x[k];
            }
            x[i] = sum / self.lower[ri + i];
        }
        // L^T x = y
        for i in (0..n).rev() {
            let mut sum = x[i];
            for k in (i + 1)..n {
                sum -= self.lower[row_start(k) + i] * x[k];
            }
            x[i] = sum / self.lower[row_start(i) + i];
        }
    }
}
