use crate::error::{Error, Result};

/// Sparse matrix in compressed row storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    /// Builds a CSR matrix from (row, col, value) triplets. Duplicate entries
    /// are summed; explicit zeros are kept out of the structure.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(i, j, _) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::DimensionMismatch(format!(
                    "triplet ({i}, {j}) outside {n_rows}x{n_cols}"
                )));
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(j);
                values.push(v);
                row_offsets[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
            symmetric: false,
        })
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        let mut m = Self::from_triplets(n, n, &triplets).unwrap();
        m.symmetric = true;
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric_flagged(&self) -> bool {
        self.symmetric
    }

    /// Marks the matrix symmetric after verifying value-level symmetry to
    /// 1e-12 relative.
    pub fn set_symmetric(&mut self) -> Result<()> {
        if self.n_rows != self.n_cols {
            return Err(Error::DimensionMismatch("symmetric flag on non-square".into()));
        }
        let scale = self.values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                let vt = self.get(j, i);
                if (v - vt).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument(format!(
                        "asymmetry at ({i},{j}): {v} vs {vt}"
                    )));
                }
            }
        }
        self.symmetric = true;
        Ok(())
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        self.col_indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        match self.col_indices[lo..hi].binary_search(&j) {
            Ok(pos) => self.values[lo + pos],
            Err(_) => 0.0,
        }
    }

    /// Sparse matrix-vector product.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch(format!(
                "spmv: vector length {} vs {} columns",
                x.len(),
                self.n_cols
            )));
        }
        let mut y = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            let mut acc = 0.0;
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
        Ok(y)
    }

    /// Residual b - A x with compensated accumulation: products are split
    /// exactly via fused multiply-add and summed with Neumaier corrections.
    /// Effective working precision is roughly doubled, which is what
    /// iterative refinement needs to push forward error below u * kappa.
    pub fn residual_compensated(&self, x: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols || b.len() != self.n_rows {
            return Err(Error::DimensionMismatch(format!(
                "residual_compensated: x {} / b {} vs {} x {}",
                x.len(),
                b.len(),
                self.n_rows,
                self.n_cols
            )));
        }
        let mut r = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            let mut s = b[i];
            let mut c = 0.0;
            for (j, v) in self.row(i) {
                let p = v * x[j];
                let p_err = v.mul_add(x[j], -p);
                let t = s - p;
                c += if s.abs() >= p.abs() { (s - t) - p } else { -p - (t - s) };
                s = t;
                c -= p_err;
            }
            r[i] = s + c;
        }
        Ok(r)
    }

    /// Transposed product A^T x.
    pub fn spmv_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_rows {
            return Err(Error::DimensionMismatch(format!(
                "spmv_transpose: vector length {} vs {} rows",
                x.len(),
                self.n_rows
            )));
        }
        let mut y = vec![0.0; self.n_cols];
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                y[j] += v * x[i];
            }
        }
        Ok(y)
    }

    /// Principal submatrix on the given (strictly increasing) global indices,
    /// returned as a dense row-major block.
    pub fn dense_submatrix(&self, indices: &[usize]) -> Vec<f64> {
        let k = indices.len();
        let mut pos = vec![usize::MAX; self.n_cols];
        for (local, &g) in indices.iter().enumerate() {
            pos[g] = local;
        }
        let mut block = vec![0.0; k * k];
        for (li, &gi) in indices.iter().enumerate() {
            for (gj, v) in self.row(gi) {
                let lj = pos[gj];
                if lj != usize::MAX {
                    block[li * k + lj] = v;
                }
            }
        }
        block
    }

    /// Full dense row-major copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_rows * self.n_cols];
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                d[i * self.n_cols + j] = v;
            }
        }
        d
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                out.push((i, j, v));
            }
        }
        out
    }
}
