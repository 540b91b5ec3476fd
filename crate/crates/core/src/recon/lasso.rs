use nalgebra::{DMatrix, DVector};

use super::cv::{choose, decade_blocks, BlockErrors};
use super::{CvRule, FitError, Method, ReconModel, Result};
use crate::linalg::{column_moments, variance};
use crate::matrix::YearMatrix;
use crate::timeseries::TimeSeries;

/// Coordinate descent stops once no coefficient moves by more than this.
pub const LASSO_TOLERANCE: f64 = 1e-8;

const MAX_SWEEPS: usize = 200_000;
const PATH_LENGTH: usize = 40;
const PATH_RATIO: f64 = 1e-3;

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Centred, standardized design restricted to some rows.
struct Standardized {
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    means: Vec<f64>,
    scales: Vec<f64>,
    y_mean: f64,
}

impl Standardized {
    fn new(x: &DMatrix<f64>, y: &DVector<f64>, rows: &[usize], names: &[String]) -> Result<Self> {
        let (means, scales) = column_moments(x, rows);
        if let Some(j) = scales.iter().position(|&s| !(s > 1e-12)) {
            return Err(FitError::DegenerateColumn(names[j].clone()));
        }
        let z = DMatrix::from_fn(rows.len(), x.ncols(), |i, j| (x[(rows[i], j)] - means[j]) / scales[j]);
        let y_mean = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
        let yc = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i] - y_mean));
        Ok(Self {
            gram: z.transpose() * &z,
            xty: z.transpose() * yc,
            means,
            scales,
            y_mean,
        })
    }

    fn lambda_max(&self) -> f64 {
        self.xty.amax()
    }

    /// Coordinate descent on ½‖y − Zβ‖² + λ‖β‖₁ in covariance-update form,
    /// starting from `beta`.
    fn solve(&self, lambda: f64, beta: &mut DVector<f64>) -> Result<usize> {
        let p = self.xty.len();
        // grad = Zᵀy − ZᵀZβ
        let mut grad = &self.xty - &self.gram * &*beta;
        let mut last = f64::INFINITY;
        for sweep in 1..=MAX_SWEEPS {
            let mut max_change = 0.0f64;
            for j in 0..p {
                let g = self.gram[(j, j)];
                let old = beta[j];
                let new = soft_threshold(grad[j] + g * old, lambda) / g;
                let delta = new - old;
                if delta != 0.0 {
                    beta[j] = new;
                    grad.axpy(-delta, &self.gram.column(j), 1.0);
                    max_change = max_change.max(delta.abs());
                }
            }
            last = max_change;
            if max_change < LASSO_TOLERANCE {
                return Ok(sweep);
            }
        }
        Err(FitError::Convergence {
            iterations: MAX_SWEEPS,
            last_change: last,
        })
    }

    /// Prediction for raw predictor row `i` of `x`.
    fn predict(&self, x: &DMatrix<f64>, i: usize, beta: &DVector<f64>) -> f64 {
        self.y_mean
            + (0..beta.len())
                .map(|j| beta[j] * (x[(i, j)] - self.means[j]) / self.scales[j])
                .sum::<f64>()
    }
}

fn calibration_data(m: &YearMatrix, target: &TimeSeries, calibration: (i32, i32)) -> (Vec<i32>, DMatrix<f64>, DVector<f64>) {
    let mut years = Vec::new();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for year in calibration.0..=calibration.1 {
        let Some(t) = target.get(year) else { continue };
        let Some(xs) = (0..m.n_cols()).map(|j| m.get(year, j)).collect::<Option<Vec<f64>>>() else {
            continue;
        };
        years.push(year);
        rows.extend(xs);
        y.push(t);
    }
    (
        years.clone(),
        DMatrix::from_row_slice(years.len(), m.n_cols(), &rows),
        DVector::from_vec(y),
    )
}

/// Smallest penalty that zeroes every coefficient, for predictors
/// standardized over the calibration years.
pub fn lambda_max(m: &YearMatrix, target: &TimeSeries, calibration: (i32, i32)) -> Result<f64> {
    let (years, x, y) = calibration_data(m, target, calibration);
    if years.len() < 3 {
        return Err(FitError::InsufficientCalibration {
            needed: 3,
            found: years.len(),
            unit: "calibration years",
        });
    }
    let rows: Vec<usize> = (0..years.len()).collect();
    Ok(Standardized::new(&x, &y, &rows, m.columns())?.lambda_max())
}

/// Lasso fit of the target on every column of `m`.
///
/// Predictors are centred and scaled to unit sample variance over the
/// calibration years, the target is centred (the intercept is not
/// penalized), and ½‖y − Xβ‖² + λ‖β‖₁ is minimized by coordinate descent.
/// The returned coefficients apply to the raw columns.
pub fn fit_lasso(m: &YearMatrix, target: &TimeSeries, lambda: f64, calibration: (i32, i32)) -> Result<ReconModel> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(FitError::InvalidParameter(format!("lambda must be non-negative, got {lambda}")));
    }
    let (years, x, y) = calibration_data(m, target, calibration);
    let n = years.len();
    if n < 3 {
        return Err(FitError::InsufficientCalibration {
            needed: 3,
            found: n,
            unit: "calibration years",
        });
    }
    let rows: Vec<usize> = (0..n).collect();
    let st = Standardized::new(&x, &y, &rows, m.columns())?;
    let mut beta = DVector::zeros(m.n_cols());
    st.solve(lambda, &mut beta)?;

    let coefficients: Vec<f64> = (0..beta.len()).map(|j| beta[j] / st.scales[j]).collect();
    let intercept = st.y_mean - coefficients.iter().zip(&st.means).map(|(c, mu)| c * mu).sum::<f64>();
    let sse: f64 = rows.iter().map(|&i| (y[i] - st.predict(&x, i, &beta)).powi(2)).sum();
    let nonzero = beta.iter().filter(|b| **b != 0.0).count();
    Ok(ReconModel {
        method: Method::Lasso,
        k: None,
        lambda: Some(lambda),
        ridge: None,
        calibration,
        coefficients,
        intercept,
        residual_variance: sse / n.saturating_sub(nonzero + 1).max(1) as f64,
        n_obs: n,
        high_band: None,
    })
}

/// Penalty chosen by leave-one-decade-out CV along a log-spaced path.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSelection {
    pub lambda: f64,
    /// Path from largest to smallest penalty.
    pub grid: Vec<f64>,
    pub cv_rmse: Vec<f64>,
}

/// Cross-validated λ over a 40-point path from λ_max down to 10⁻³·λ_max.
/// Candidates are ordered from most to least penalized, so rule ties go to
/// the sparser model.
pub fn select_lambda(m: &YearMatrix, target: &TimeSeries, calibration: (i32, i32), rule: CvRule) -> Result<LambdaSelection> {
    let (years, x, y) = calibration_data(m, target, calibration);
    let blocks = decade_blocks(&years, calibration.0)?;
    let n = years.len();
    let all: Vec<usize> = (0..n).collect();
    let lmax = Standardized::new(&x, &y, &all, m.columns())?.lambda_max();
    if lmax == 0.0 {
        return Ok(LambdaSelection {
            lambda: 0.0,
            grid: vec![0.0],
            cv_rmse: vec![0.0],
        });
    }
    let grid: Vec<f64> = (0..PATH_LENGTH)
        .map(|i| lmax * PATH_RATIO.powf(i as f64 / (PATH_LENGTH - 1) as f64))
        .collect();

    let mut curve: Vec<BlockErrors> = grid
        .iter()
        .map(|_| BlockErrors {
            sse: Vec::with_capacity(blocks.len()),
            n: Vec::with_capacity(blocks.len()),
        })
        .collect();
    for block in &blocks {
        let train: Vec<usize> = all.iter().copied().filter(|i| !block.contains(i)).collect();
        // Training penalties are rescaled to the fold's sample size so a
        // grid point means the same amount of shrinkage in every fold.
        let st = Standardized::new(&x, &y, &train, m.columns())?;
        let scale = train.len() as f64 / n as f64;
        let mut beta = DVector::zeros(m.n_cols());
        for (g, &lambda) in grid.iter().enumerate() {
            st.solve(lambda * scale, &mut beta)?;
            let sse: f64 = block.iter().map(|&i| (y[i] - st.predict(&x, i, &beta)).powi(2)).sum();
            curve[g].sse.push(sse);
            curve[g].n.push(block.len());
        }
    }
    let idx = choose(&curve, rule, variance(y.as_slice()));
    Ok(LambdaSelection {
        lambda: grid[idx],
        cv_rmse: curve.iter().map(|e| e.mse().sqrt()).collect(),
        grid,
    })
}
