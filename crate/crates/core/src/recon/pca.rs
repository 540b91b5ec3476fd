use nalgebra::DMatrix;

use super::{FitError, Result};
use crate::linalg::column_moments;
use crate::matrix::YearMatrix;

/// Principal components of a column-standardized proxy matrix.
#[derive(Debug, Clone)]
pub struct PcaBasis {
    /// Records × components, orthonormal columns.
    loadings: DMatrix<f64>,
    /// Years × components over the full axis of the input matrix.
    scores: YearMatrix,
    explained_variance: Vec<f64>,
    means: Vec<f64>,
    scales: Vec<f64>,
    fit_window: (i32, i32),
}

impl PcaBasis {
    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    pub fn scores(&self) -> &YearMatrix {
        &self.scores
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn fit_window(&self) -> (i32, i32) {
        self.fit_window
    }

    pub fn n_components(&self) -> usize {
        self.loadings.ncols()
    }

    /// Scores for another matrix with the same columns, using the stored
    /// standardization and loadings.
    pub fn project(&self, m: &YearMatrix) -> Result<YearMatrix> {
        if m.n_cols() != self.means.len() {
            return Err(FitError::InvalidParameter(format!(
                "basis fitted on {} columns, got {}",
                self.means.len(),
                m.n_cols()
            )));
        }
        let z = DMatrix::from_fn(m.n_years(), m.n_cols(), |i, j| {
            (m.data()[(i, j)] - self.means[j]) / self.scales[j]
        });
        let data = z * &self.loadings;
        let names = (1..=self.n_components()).map(|c| format!("pc{c}")).collect();
        Ok(YearMatrix::new(m.start_year(), names, data))
    }
}

/// SVD-based PCA of `m` standardized over `fit_window` (mean and n − 1
/// standard deviation per column). Components with negligible singular
/// values are dropped, so a rank-one matrix yields a single component.
pub fn fit_pca(m: &YearMatrix, fit_window: (i32, i32)) -> Result<PcaBasis> {
    if m.n_cols() < 2 {
        return Err(FitError::InvalidParameter("PCA needs at least two records".into()));
    }
    let rows: Vec<usize> = (fit_window.0..=fit_window.1)
        .filter_map(|y| m.row_of(y))
        .collect();
    if rows.len() < 2 {
        return Err(FitError::InsufficientCalibration {
            needed: 2,
            found: rows.len(),
            unit: "years in the PCA fit window",
        });
    }
    for &i in &rows {
        if let Some(j) = (0..m.n_cols()).find(|&j| !m.data()[(i, j)].is_finite()) {
            return Err(FitError::MissingData(format!(
                "`{}` is missing in {} inside the PCA fit window",
                m.columns()[j],
                m.start_year() + i as i32
            )));
        }
    }
    let (means, scales) = column_moments(m.data(), &rows);
    for (j, &s) in scales.iter().enumerate() {
        if !(s > 1e-12 * (1.0 + means[j].abs())) {
            return Err(FitError::DegenerateColumn(m.columns()[j].clone()));
        }
    }
    let z = DMatrix::from_fn(rows.len(), m.n_cols(), |i, j| {
        (m.data()[(rows[i], j)] - means[j]) / scales[j]
    });

    let svd = z.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    let s_max = svd.singular_values[order[0]];
    let tol = s_max * 1e-10;
    let kept: Vec<usize> = order.into_iter().filter(|&i| svd.singular_values[i] > tol).collect();

    let mut loadings = DMatrix::zeros(m.n_cols(), kept.len());
    let mut explained = Vec::with_capacity(kept.len());
    for (c, &i) in kept.iter().enumerate() {
        let mut v = v_t.row(i).transpose();
        // Sign convention: loadings sum to a non-negative number.
        if v.sum() < 0.0 {
            v = -v;
        }
        loadings.set_column(c, &v);
        explained.push(svd.singular_values[i].powi(2) / total);
    }

    let mut basis = PcaBasis {
        loadings,
        scores: YearMatrix::new(m.start_year(), Vec::new(), DMatrix::zeros(m.n_years(), 0)),
        explained_variance: explained,
        means,
        scales,
        fit_window,
    };
    basis.scores = basis.project(m)?;
    Ok(basis)
}
