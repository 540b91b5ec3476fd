use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use super::cv::{choose, decade_blocks, BlockErrors};
use super::{CvRule, FitError, Method, PcaBasis, ReconModel, Result};
use crate::linalg::{least_squares, variance};
use crate::matrix::YearMatrix;
use crate::timeseries::TimeSeries;

/// Rule for the number of retained principal components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KRule {
    CrossValidation(CvRule),
    /// Components whose explained variance beats the broken-stick expectation.
    BrokenStick,
}

impl Default for KRule {
    fn default() -> Self {
        KRule::CrossValidation(CvRule::default())
    }
}

impl KRule {
    pub fn as_str(self) -> &'static str {
        match self {
            KRule::CrossValidation(r) => r.as_str(),
            KRule::BrokenStick => "broken_stick",
        }
    }
}

impl FromStr for KRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "broken_stick" => Ok(KRule::BrokenStick),
            other => other.parse().map(KRule::CrossValidation),
        }
    }
}

/// Chosen K and the CV curve behind it (empty for the broken-stick rule).
#[derive(Debug, Clone, PartialEq)]
pub struct KSelection {
    pub k: usize,
    pub cv_rmse: Vec<f64>,
    pub cv_se: Vec<f64>,
}

/// Calibration rows where the target and the first `k` scores are available.
pub(crate) fn calibration_rows(scores: &YearMatrix, target: &TimeSeries, k: usize, calibration: (i32, i32)) -> (Vec<i32>, DMatrix<f64>, DVector<f64>) {
    let mut years = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    let mut y = Vec::new();
    for year in calibration.0..=calibration.1 {
        let Some(t) = target.get(year) else { continue };
        let Some(xs) = (0..k).map(|j| scores.get(year, j)).collect::<Option<Vec<f64>>>() else {
            continue;
        };
        years.push(year);
        rows.push(1.0);
        rows.extend(xs);
        y.push(t);
    }
    let x = DMatrix::from_row_slice(years.len(), k + 1, &rows);
    (years, x, DVector::from_vec(y))
}

/// OLS of the target on an intercept and the first `k` PC scores over the
/// calibration years where both are available.
pub fn fit_ols_pc(basis: &PcaBasis, target: &TimeSeries, k: usize, calibration: (i32, i32)) -> Result<ReconModel> {
    if k == 0 || k > basis.n_components() {
        return Err(FitError::InvalidParameter(format!(
            "K = {k} outside 1..={}",
            basis.n_components()
        )));
    }
    let (_, x, y) = calibration_rows(basis.scores(), target, k, calibration);
    let n = y.len();
    if n < k + 2 {
        return Err(FitError::InsufficientCalibration {
            needed: k + 2,
            found: n,
            unit: "calibration years",
        });
    }
    let beta = least_squares(&x, &y).ok_or(FitError::SingularFit)?;
    let resid = &y - &x * &beta;
    let sse = resid.norm_squared();
    Ok(ReconModel {
        method: Method::OlsPc,
        k: Some(k),
        lambda: None,
        ridge: None,
        calibration,
        coefficients: beta.iter().skip(1).copied().collect(),
        intercept: beta[0],
        residual_variance: sse / (n - k - 1) as f64,
        n_obs: n,
        high_band: None,
    })
}

/// Broken-stick expectation for component `k` (1-based) out of `p`.
fn broken_stick(k: usize, p: usize) -> f64 {
    (k..=p).map(|i| 1.0 / i as f64).sum::<f64>() / p as f64
}

/// Chooses K in `1..=max_k`.
///
/// With the cross-validation rule each decade of the calibration window is
/// held out in turn, the OLS fit on the remaining years predicts it, and the
/// pooled squared errors form the CV curve.
pub fn select_k(basis: &PcaBasis, target: &TimeSeries, max_k: usize, calibration: (i32, i32), rule: KRule) -> Result<KSelection> {
    if max_k == 0 || max_k > basis.n_components() {
        return Err(FitError::InvalidParameter(format!(
            "max K = {max_k} outside 1..={}",
            basis.n_components()
        )));
    }
    let cv_rule = match rule {
        KRule::BrokenStick => {
            let p = basis.means().len();
            let k = basis
                .explained_variance()
                .iter()
                .enumerate()
                .take_while(|&(i, &ev)| ev > broken_stick(i + 1, p))
                .count()
                .clamp(1, max_k);
            return Ok(KSelection {
                k,
                cv_rmse: Vec::new(),
                cv_se: Vec::new(),
            });
        }
        KRule::CrossValidation(r) => r,
    };

    let (years, x, y) = calibration_rows(basis.scores(), target, max_k, calibration);
    let blocks = decade_blocks(&years, calibration.0)?;
    let n = y.len();
    let mut curve = Vec::with_capacity(max_k);
    for k in 1..=max_k {
        let mut errors = BlockErrors {
            sse: Vec::with_capacity(blocks.len()),
            n: Vec::with_capacity(blocks.len()),
        };
        for block in &blocks {
            let train: Vec<usize> = (0..n).filter(|i| !block.contains(i)).collect();
            if train.len() < k + 2 {
                return Err(FitError::InsufficientCalibration {
                    needed: k + 2,
                    found: train.len(),
                    unit: "training years in a CV fold",
                });
            }
            let xt = x.select_rows(&train).columns(0, k + 1).into_owned();
            let yt = y.select_rows(&train);
            let beta = least_squares(&xt, &yt).ok_or(FitError::SingularFit)?;
            let xb = x.select_rows(block).columns(0, k + 1).into_owned();
            let resid = y.select_rows(block) - xb * beta;
            errors.sse.push(resid.norm_squared());
            errors.n.push(block.len());
        }
        curve.push(errors);
    }
    let scale = variance(y.as_slice());
    let k = choose(&curve, cv_rule, scale) + 1;
    Ok(KSelection {
        k,
        cv_rmse: curve.iter().map(|e| e.mse().sqrt()).collect(),
        cv_se: curve.iter().map(BlockErrors::se).collect(),
    })
}
