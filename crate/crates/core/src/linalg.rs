//! Small dense linear-algebra helpers shared by the fitting code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Least squares via Householder QR. Returns `None` when the design is
/// numerically rank deficient.
pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let (n, p) = x.shape();
    if n < p || p == 0 {
        return None;
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_diag == 0.0 || r.diagonal().iter().any(|v| v.abs() <= 1e-12 * max_diag) {
        return None;
    }
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty)
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// decreasing order (columns of the returned matrix match).
pub(crate) fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = eig.eigenvectors.select_columns(&order);
    (values, vectors)
}

/// Column means and sample standard deviations (n − 1) over the given rows.
pub(crate) fn column_moments(x: &DMatrix<f64>, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    (0..x.ncols())
        .map(|j| {
            let mean = rows.iter().map(|&i| x[(i, j)]).sum::<f64>() / n;
            let ss = rows.iter().map(|&i| (x[(i, j)] - mean).powi(2)).sum::<f64>();
            (mean, (ss / (n - 1.0).max(1.0)).sqrt())
        })
        .unzip()
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance with n − 1 in the denominator.
pub(crate) fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}
