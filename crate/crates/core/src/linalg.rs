//! Small dense helpers shared by the estimators and the oracle.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Smallest and largest eigenvalue of a symmetric matrix.
///
/// 1×1 and 2×2 inputs use closed forms; they are by far the most frequent
/// callers inside the per-step stack admission loop.
pub fn symmetric_eigen_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    match m.nrows() {
        0 => (0.0, 0.0),
        1 => (m[(0, 0)], m[(0, 0)]),
        2 => {
            let a = m[(0, 0)];
            let d = m[(1, 1)];
            let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
            let mean = 0.5 * (a + d);
            let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            (mean - radius, mean + radius)
        }
        _ => {
            let eig = SymmetricEigen::new(m.clone());
            (eig.eigenvalues.min(), eig.eigenvalues.max())
        }
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_eigen_extremes(m).0
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Largest real part over the eigenvalues of a square matrix.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Builds a matrix from row vectors, rejecting ragged input.
pub fn matrix_from_rows(context: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("{context}: ragged rows")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}
