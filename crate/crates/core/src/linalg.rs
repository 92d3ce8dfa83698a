//! Dense symmetric eigendecomposition bridged from nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};

/// Eigenpairs of a symmetric matrix, eigenvalues nonincreasing.
///
/// Column `j` of the returned matrix is the unit eigenvector of eigenvalue `j`.
/// Each eigenvector's sign is fixed so that its largest-magnitude entry is positive.
pub fn sym_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[[i, j]] + a[[j, i]]));
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let values = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[[i, dst]] = sign * col[i];
        }
    }
    (values, vectors)
}

/// `(W W^T)^{-1/2} W`, the symmetric orthogonalization of the rows of `w`.
pub fn sym_orthogonalize(w: &Array2<f64>) -> Array2<f64> {
    let gram = w.dot(&w.t());
    let (values, vectors) = sym_eigen(&gram);
    let inv_sqrt = values.mapv(|v| 1.0 / v.max(f64::MIN_POSITIVE).sqrt());
    let scaled = &vectors * &inv_sqrt;
    scaled.dot(&vectors.t()).dot(w)
}
