//! Minimal dense/sparse linear-algebra kernels: CSR storage, dense
//! Cholesky, symmetric tridiagonal and dense symmetric eigensolvers,
//! Matrix Market and vector I/O.

mod cholesky;
mod dense_eigen;
pub mod io;
mod sparse;
mod tridiag;

pub use cholesky::DenseFactor;
pub use dense_eigen::{dense_sym_eigen, dense_sym_eigenvalues, DEFAULT_ORACLE_CAP};
pub use io::{
    read_matrix_market, read_spectrum, read_vector, validate_spectrum, write_matrix_market,
    write_spectrum, write_vector,
};
pub use sparse::SparseMatrix;
pub use tridiag::SymTridiagonal;

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// y += a * x
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
