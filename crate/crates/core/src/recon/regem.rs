//! Regularized expectation-maximization for incomplete multivariate data.
//!
//! Each iteration imputes the missing values of every row by a ridge
//! regression of its missing variables on its available variables, computed
//! from the current mean and covariance estimates (E step), then
//! re-estimates mean and covariance from the completed matrix plus the
//! conditional residual covariances of the imputed entries (M step).
//! Regressions are done on standardized variables, with the ridge
//! parameter either fixed or chosen by generalized cross-validation.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{calibration_target, prepare_predictors, FitError, Method, ReconModel, Reconstruction, Result};
use crate::linalg::sorted_eigen;
use crate::matrix::YearMatrix;
use crate::proxy::ProxyNetwork;
use crate::timeseries::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// Choose the ridge parameter by generalized cross-validation at every
    /// iteration.
    Gcv,
    /// Fixed ridge parameter `h`; `h²` is added to the eigenvalues of the
    /// predictor correlation matrix.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegemConfig {
    pub ridge: Ridge,
    /// Stop when the relative change of the imputed values drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Share of an independent observation that each calibration row counts
    /// for in GCV; below 1 for band-limited data.
    pub gcv_sample_fraction: f64,
}

impl Default for RegemConfig {
    fn default() -> Self {
        Self {
            ridge: Ridge::Gcv,
            tolerance: 1e-6,
            max_iterations: 200,
            gcv_sample_fraction: 1.0,
        }
    }
}

/// Converged EM state.
#[derive(Debug, Clone)]
pub struct RegemFit {
    pub completed: YearMatrix,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub iterations: usize,
    /// Relative change of the imputed values at each iteration.
    pub changes: Vec<f64>,
}

/// Eigen-decomposition of the predictor block of a pattern, in standardized units.
#[derive(Debug, Clone)]
struct Eigen {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

/// Ridge regression of missing on available variables (standardized units).
struct Regression {
    /// available × missing
    coef: DMatrix<f64>,
    /// missing × missing residual covariance
    resid_cov: DMatrix<f64>,
    h: f64,
}

const GCV_GRID: usize = 41;

/// GCV-chosen ridge parameter for eigenvalues `d`, squared norms `f_sq` of
/// the projected cross covariances and trace `tr_mm` of the response
/// covariance. The search runs over `u = h²`; the minimum is located by
/// bisection on the sign of dG/du.
fn gcv_ridge(d: &[f64], f_sq: &[f64], tr_mm: f64, dof: f64) -> f64 {
    let d_max = d.first().copied().unwrap_or(0.0);
    if d_max <= 0.0 {
        return 0.0;
    }
    // Residual sum of squares at u = 0; the u-dependent part is added
    // separately so it carries no cancellation error.
    let rss0 = (tr_mm - d.iter().zip(f_sq).map(|(di, fi)| fi / di).sum::<f64>()).max(0.0);
    let parts = |u: f64| {
        let (mut rss, mut drss, mut trace, mut dtrace) = (rss0, 0.0, 0.0, 0.0);
        for (&di, &fi) in d.iter().zip(f_sq) {
            let den = di + u;
            rss += fi * u * u / (di * den * den);
            drss += 2.0 * fi * u / (den * den * den);
            trace += di / den;
            dtrace -= di / (den * den);
        }
        (rss, drss, dof - trace, dtrace)
    };
    let gcv = |u: f64| {
        let (rss, _, denom, _) = parts(u);
        if denom <= 0.0 {
            f64::INFINITY
        } else {
            rss / (denom * denom)
        }
    };
    // Sign of dG/du where the denominator is positive.
    let slope = |u: f64| {
        let (rss, drss, denom, dtrace) = parts(u);
        drss * denom + 2.0 * rss * dtrace
    };
    let lo = d_max.ln() + 1e-8f64.ln();
    let hi = d_max.ln() + 100f64.ln();
    let step = (hi - lo) / (GCV_GRID - 1) as f64;
    let mut best_i = 0;
    let mut best_g = f64::INFINITY;
    for i in 0..GCV_GRID {
        let g = gcv((lo + step * i as f64).exp());
        if g < best_g {
            best_g = g;
            best_i = i;
        }
    }
    let at = |i: usize| lo + step * i as f64;
    let (mut a, mut b) = (at(best_i.saturating_sub(1)), at((best_i + 1).min(GCV_GRID - 1)));
    if !(slope(a.exp()) < 0.0 && slope(b.exp()) > 0.0) {
        return at(best_i).exp().sqrt();
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if slope(m.exp()) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    (0.5 * (a + b)).exp().sqrt()
}

/// GCV ridge for regressing `miss` on `avail` over the rows where all of
/// them are observed, with predictors in the standardized units of the EM
/// regression, each row counting as `fraction` of an observation. `None`
/// when fewer than three such rows exist.
fn observed_gcv(
    raw: &DMatrix<f64>,
    mask: &DMatrix<bool>,
    avail: &[usize],
    miss: &[usize],
    s: &DVector<f64>,
    fraction: f64,
) -> Option<f64> {
    let rows: Vec<usize> = (0..raw.nrows())
        .filter(|&i| avail.iter().chain(miss).all(|&j| mask[(i, j)]))
        .collect();
    if rows.len() < 3 {
        return None;
    }
    let dof = rows.len() as f64 - 1.0;
    let centred = |cols: &[usize]| {
        let mut m = DMatrix::from_fn(rows.len(), cols.len(), |r, k| raw[(rows[r], cols[k])] / s[cols[k]]);
        for mut c in m.column_iter_mut() {
            let mean = c.mean();
            c.add_scalar_mut(-mean);
        }
        m
    };
    let z = centred(avail);
    let y = centred(miss);
    let (values, vectors) = sorted_eigen(&(z.transpose() * &z / dof));
    let d_max = values.iter().fold(0.0f64, |m, &v| m.max(v));
    let active: Vec<usize> = (0..values.len()).filter(|&i| values[i] > 1e-12 * d_max).collect();
    let d: Vec<f64> = active.iter().map(|&i| values[i]).collect();
    let f = vectors.select_columns(&active).transpose() * (z.transpose() * &y / dof);
    let f_sq: Vec<f64> = (0..f.nrows()).map(|i| f.row(i).norm_squared()).collect();
    Some(gcv_ridge(&d, &f_sq, y.norm_squared() / dof, fraction * dof))
}

/// Ridge regression in correlation space. With `h = None` the ridge is
/// chosen by GCV on the covariance itself, with `dof` degrees of freedom.
fn regression(corr: &DMatrix<f64>, avail: &[usize], miss: &[usize], eigen: &Eigen, h: Option<f64>, dof: f64) -> Regression {
    let s_am = corr.select_rows(avail).select_columns(miss);
    let s_mm = corr.select_rows(miss).select_columns(miss);
    let d_max = eigen.values.iter().fold(0.0f64, |m, &v| m.max(v));
    let active: Vec<usize> = (0..eigen.values.len())
        .filter(|&i| eigen.values[i] > 1e-12 * d_max)
        .collect();
    let v = eigen.vectors.select_columns(&active);
    let d: Vec<f64> = active.iter().map(|&i| eigen.values[i]).collect();
    let f = v.transpose() * &s_am;
    let h = h.unwrap_or_else(|| {
        let f_sq: Vec<f64> = (0..f.nrows()).map(|i| f.row(i).norm_squared()).collect();
        gcv_ridge(&d, &f_sq, s_mm.trace(), dof)
    });
    let mut scaled = f.clone();
    for (i, &di) in d.iter().enumerate() {
        scaled.row_mut(i).scale_mut(1.0 / (di + h * h));
    }
    let coef = &v * &scaled;
    let mut resid_cov = s_mm - f.transpose() * &scaled;
    resid_cov = 0.5 * (&resid_cov + resid_cov.transpose());
    Regression { coef, resid_cov, h }
}

/// Missingness patterns: `missing columns → rows`.
fn patterns(mask: &DMatrix<bool>) -> BTreeMap<Vec<usize>, Vec<usize>> {
    let mut out: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for i in 0..mask.nrows() {
        let miss: Vec<usize> = (0..mask.ncols()).filter(|&j| !mask[(i, j)]).collect();
        if !miss.is_empty() {
            out.entry(miss).or_default().push(i);
        }
    }
    out
}

struct EmState {
    n: usize,
    p: usize,
    raw: DMatrix<f64>,
    mask: DMatrix<bool>,
    complete_cols: Vec<usize>,
    incomplete_cols: Vec<usize>,
    /// Covariance block of the fully observed columns, fixed across iterations.
    fixed_cov: DMatrix<f64>,
    fixed_mean: Vec<f64>,
}

impl EmState {
    fn new(raw: &DMatrix<f64>, x: &DMatrix<f64>, mask: &DMatrix<bool>) -> Self {
        let (n, p) = x.shape();
        let (complete_cols, incomplete_cols): (Vec<usize>, Vec<usize>) =
            (0..p).partition(|&j| (0..n).all(|i| mask[(i, j)]));
        let fixed_mean: Vec<f64> = complete_cols.iter().map(|&j| x.column(j).mean()).collect();
        let centred = DMatrix::from_fn(n, complete_cols.len(), |i, c| x[(i, complete_cols[c])] - fixed_mean[c]);
        let fixed_cov = centred.transpose() * &centred / (n as f64 - 1.0);
        Self {
            n,
            p,
            raw: raw.clone(),
            mask: mask.clone(),
            complete_cols,
            incomplete_cols,
            fixed_cov,
            fixed_mean,
        }
    }

    /// Mean and covariance of the completed matrix, plus the summed residual
    /// covariances of imputed entries.
    fn moments(&self, x: &DMatrix<f64>, resid: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let dof = self.n as f64 - 1.0;
        let mut mean = DVector::zeros(self.p);
        for (c, &j) in self.complete_cols.iter().enumerate() {
            mean[j] = self.fixed_mean[c];
        }
        for &j in &self.incomplete_cols {
            mean[j] = x.column(j).mean();
        }
        let mut cov = DMatrix::zeros(self.p, self.p);
        for (a, &ja) in self.complete_cols.iter().enumerate() {
            for (b, &jb) in self.complete_cols.iter().enumerate() {
                cov[(ja, jb)] = self.fixed_cov[(a, b)];
            }
        }
        if !self.incomplete_cols.is_empty() {
            let centred = DMatrix::from_fn(self.n, self.p, |i, j| x[(i, j)] - mean[j]);
            for &u in &self.incomplete_cols {
                let col = centred.transpose() * centred.column(u) / dof;
                cov.set_column(u, &col);
                cov.set_row(u, &col.transpose());
            }
            for &u in &self.incomplete_cols {
                for &v in &self.incomplete_cols {
                    cov[(u, v)] += resid[(u, v)] / dof;
                }
            }
        }
        (mean, cov)
    }
}

fn scales(cov: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        cov.nrows(),
        cov.diagonal().iter().map(|&v| if v > 0.0 { v.sqrt() } else { 1.0 }),
    )
}

fn correlation(cov: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| cov[(i, j)] / (s[i] * s[j]))
}

/// Applies the pattern regressions to every incomplete row, writing the
/// imputed values into `x` and accumulating residual covariances.
#[allow(clippy::too_many_arguments)]
fn e_step(
    x: &mut DMatrix<f64>,
    pats: &BTreeMap<Vec<usize>, Vec<usize>>,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    state: &EmState,
    cache: &mut BTreeMap<Vec<usize>, Eigen>,
    ridges: &mut BTreeMap<Vec<usize>, Option<f64>>,
    cfg: &RegemConfig,
) -> DMatrix<f64> {
    let p = state.p;
    let s = scales(cov);
    let corr = correlation(cov, &s);
    let mut resid = DMatrix::zeros(p, p);
    for (miss, rows) in pats {
        let avail: Vec<usize> = (0..p).filter(|j| !miss.contains(j)).collect();
        if avail.is_empty() {
            for &i in rows {
                for &m in miss {
                    x[(i, m)] = mean[m];
                }
            }
            for &a in miss {
                for &b in miss {
                    resid[(a, b)] += rows.len() as f64 * cov[(a, b)];
                }
            }
            continue;
        }
        let cacheable = avail.iter().all(|j| state.complete_cols.contains(j));
        let eigen = match cache.get(&avail) {
            Some(e) if cacheable => e.clone(),
            _ => {
                let (values, vectors) = sorted_eigen(&corr.select_rows(&avail).select_columns(&avail));
                let e = Eigen {
                    values: values.map(|v| v.max(0.0)),
                    vectors,
                };
                if cacheable {
                    cache.insert(avail.clone(), e.clone());
                }
                e
            }
        };
        let h = match cfg.ridge {
            Ridge::Fixed(h) => Some(h),
            Ridge::Gcv => match ridges.get(miss) {
                Some(&h) if cacheable => h,
                _ => {
                    let h = observed_gcv(&state.raw, &state.mask, &avail, miss, &s, cfg.gcv_sample_fraction);
                    if cacheable {
                        ridges.insert(miss.clone(), h);
                    }
                    h
                }
            },
        };
        let reg = regression(&corr, &avail, miss, &eigen, h, cfg.gcv_sample_fraction * (state.n as f64 - 1.0));
        for &i in rows {
            let z = DVector::from_iterator(avail.len(), avail.iter().map(|&j| (x[(i, j)] - mean[j]) / s[j]));
            let pred = reg.coef.transpose() * z;
            for (k, &m) in miss.iter().enumerate() {
                x[(i, m)] = mean[m] + s[m] * pred[k];
            }
        }
        for (a, &ma) in miss.iter().enumerate() {
            for (b, &mb) in miss.iter().enumerate() {
                resid[(ma, mb)] += rows.len() as f64 * s[ma] * s[mb] * reg.resid_cov[(a, b)];
            }
        }
    }
    resid
}

fn missing_values(x: &DMatrix<f64>, pats: &BTreeMap<Vec<usize>, Vec<usize>>) -> Vec<f64> {
    pats.iter()
        .flat_map(|(miss, rows)| rows.iter().flat_map(move |&i| miss.iter().map(move |&m| x[(i, m)])))
        .collect()
}

/// Runs regularized EM on `joint` (NaN = missing) until the relative change
/// of the imputed values falls below the tolerance.
pub fn regem(joint: &YearMatrix, cfg: &RegemConfig) -> Result<RegemFit> {
    let (n, p) = joint.data().shape();
    if n < 3 {
        return Err(FitError::InsufficientCalibration {
            needed: 3,
            found: n,
            unit: "rows",
        });
    }
    if let Ridge::Fixed(h) = cfg.ridge {
        if !(h >= 0.0) || !h.is_finite() {
            return Err(FitError::InvalidParameter(format!("ridge must be non-negative, got {h}")));
        }
    }
    let mask = joint.data().map(|v| v.is_finite());
    for j in 0..p {
        if (0..n).filter(|&i| mask[(i, j)]).count() < 2 {
            return Err(FitError::MissingData(format!(
                "column `{}` has fewer than two values",
                joint.columns()[j]
            )));
        }
    }
    let pats = patterns(&mask);

    let mut x = joint.data().clone();
    for j in 0..p {
        let (sum, cnt) = (0..n)
            .filter(|&i| mask[(i, j)])
            .fold((0.0, 0usize), |(s, c), i| (s + x[(i, j)], c + 1));
        let mean = sum / cnt as f64;
        for i in 0..n {
            if !mask[(i, j)] {
                x[(i, j)] = mean;
            }
        }
    }
    let state = EmState::new(joint.data(), &x, &mask);
    let (mut mean, mut cov) = state.moments(&x, &DMatrix::zeros(p, p));
    if pats.is_empty() {
        return Ok(RegemFit {
            completed: joint.clone(),
            mean,
            covariance: cov,
            iterations: 0,
            changes: Vec::new(),
        });
    }

    let mut cache = BTreeMap::new();
    let mut ridges = BTreeMap::new();
    let mut changes = Vec::new();
    let mut old = missing_values(&x, &pats);
    for iteration in 1..=cfg.max_iterations {
        let resid = e_step(&mut x, &pats, &mean, &cov, &state, &mut cache, &mut ridges, cfg);
        let new = missing_values(&x, &pats);
        let diff = new.iter().zip(&old).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let base = old.iter().map(|v| v * v).sum::<f64>().sqrt();
        let base = if base > 0.0 { base } else { new.iter().map(|v| v * v).sum::<f64>().sqrt() };
        let change = if base > 0.0 { diff / base } else { 0.0 };
        changes.push(change);
        (mean, cov) = state.moments(&x, &resid);
        old = new;
        if change < cfg.tolerance {
            return Ok(RegemFit {
                completed: YearMatrix::new(joint.start_year(), joint.columns().to_vec(), x),
                mean,
                covariance: cov,
                iterations: iteration,
                changes,
            });
        }
    }
    Err(FitError::Convergence {
        iterations: cfg.max_iterations,
        last_change: changes.last().copied().unwrap_or(f64::NAN),
    })
}

fn pattern_ridge(cfg: &RegemConfig, raw: &DMatrix<f64>, avail: &[usize], target_col: usize, s: &DVector<f64>) -> Option<f64> {
    match cfg.ridge {
        Ridge::Fixed(h) => Some(h),
        Ridge::Gcv => observed_gcv(raw, &raw.map(|v| v.is_finite()), avail, &[target_col], s, cfg.gcv_sample_fraction),
    }
}

/// Regularized EM with the target in column `target_col` of `joint`.
///
/// The returned series holds the imputed target where it was missing and,
/// where it was observed, the fitted value of the final regression of the
/// target on the other variables available in that year.
pub fn fit_regem(joint: &YearMatrix, target_col: usize, cfg: &RegemConfig, label: &str) -> Result<(Reconstruction, RegemFit)> {
    let fit = regem(joint, cfg)?;
    let p = joint.n_cols();
    let raw = joint.data();
    let s = scales(&fit.covariance);
    let corr = correlation(&fit.covariance, &s);
    let dof = cfg.gcv_sample_fraction * (joint.n_years() as f64 - 1.0);

    // Rows grouped by which predictors they have.
    let mut by_avail: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for i in 0..joint.n_years() {
        if raw[(i, target_col)].is_finite() {
            let avail: Vec<usize> = (0..p).filter(|&j| j != target_col && raw[(i, j)].is_finite()).collect();
            by_avail.entry(avail).or_default().push(i);
        }
    }
    let mut values: Vec<f64> = fit.completed.data().column(target_col).iter().copied().collect();
    for (avail, rows) in &by_avail {
        if avail.is_empty() {
            for &i in rows {
                values[i] = fit.mean[target_col];
            }
            continue;
        }
        let (ev, evec) = sorted_eigen(&corr.select_rows(avail).select_columns(avail));
        let eigen = Eigen {
            values: ev.map(|v| v.max(0.0)),
            vectors: evec,
        };
        let h = pattern_ridge(cfg, raw, avail, target_col, &s);
        let reg = regression(&corr, avail, &[target_col], &eigen, h, dof);
        for &i in rows {
            values[i] = fit.mean[target_col]
                + s[target_col]
                    * avail
                        .iter()
                        .enumerate()
                        .map(|(k, &j)| reg.coef[(k, 0)] * (raw[(i, j)] - fit.mean[j]) / s[j])
                        .sum::<f64>();
        }
    }

    let predictors: Vec<usize> = (0..p).filter(|&j| j != target_col).collect();
    let (ev, evec) = sorted_eigen(&corr.select_rows(&predictors).select_columns(&predictors));
    let eigen = Eigen {
        values: ev.map(|v| v.max(0.0)),
        vectors: evec,
    };
    let h = pattern_ridge(cfg, raw, &predictors, target_col, &s);
    let reg = regression(&corr, &predictors, &[target_col], &eigen, h, dof);
    let coefficients: Vec<f64> = predictors
        .iter()
        .enumerate()
        .map(|(k, &j)| s[target_col] * reg.coef[(k, 0)] / s[j])
        .collect();
    let intercept = fit.mean[target_col]
        - predictors.iter().zip(&coefficients).map(|(&j, c)| c * fit.mean[j]).sum::<f64>();
    let observed: Vec<i32> = (0..joint.n_years())
        .filter(|&i| raw[(i, target_col)].is_finite())
        .map(|i| joint.start_year() + i as i32)
        .collect();
    let model = ReconModel {
        method: Method::Regem,
        k: None,
        lambda: None,
        ridge: Some(reg.h),
        calibration: (
            observed.first().copied().unwrap_or(joint.start_year()),
            observed.last().copied().unwrap_or(joint.end_year()),
        ),
        coefficients,
        intercept,
        residual_variance: (s[target_col].powi(2) * reg.resid_cov[(0, 0)]).max(0.0),
        n_obs: observed.len(),
        high_band: None,
    };
    let series = TimeSeries::from_values(joint.start_year(), values)?;
    Ok((
        Reconstruction {
            series,
            model,
            label: label.to_string(),
        },
        fit,
    ))
}

/// Non-hybrid RegEM reconstruction: proxies over `window` plus the target
/// observed over `calibration`, target column last.
pub fn reconstruct_regem(
    net: &ProxyNetwork,
    target: &TimeSeries,
    calibration: (i32, i32),
    window: (i32, i32),
    cfg: &RegemConfig,
) -> Result<Reconstruction> {
    let (matrix, _) = prepare_predictors(net, window)?;
    let t = calibration_target(target, calibration, window)?;
    let joint = matrix.with_column("target", &t);
    let (recon, _) = fit_regem(&joint, joint.n_cols() - 1, cfg, Method::Regem.as_str())?;
    Ok(recon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn joint(cols: &[Vec<Option<f64>>]) -> YearMatrix {
        let series: Vec<TimeSeries> = cols.iter().map(|c| TimeSeries::from_options(1900, c).unwrap()).collect();
        let end = 1900 + cols[0].len() as i32 - 1;
        YearMatrix::from_series(1900, end, series.iter().enumerate().map(|(j, s)| (format!("v{j}"), s)))
    }

    #[test]
    fn complete_data_is_fixed_point() {
        let mut rng = crate::seed::rng(3);
        let cols: Vec<Vec<Option<f64>>> = (0..3).map(|_| (0..40).map(|_| Some(rng.sample(StandardNormal))).collect()).collect();
        let m = joint(&cols);
        let fit = regem(&m, &RegemConfig::default()).unwrap();
        assert_eq!(fit.iterations, 0);
        assert_eq!(fit.completed, m);
    }

    #[test]
    fn bivariate_single_missing_matches_conditional_mean() {
        let mut rng = crate::seed::rng(4);
        let n = 60;
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.5 + 0.8 * v + 0.4 * rng.sample::<f64, _>(StandardNormal)).collect();
        let missing_row = 17;
        let ycol: Vec<Option<f64>> = y.iter().enumerate().map(|(i, &v)| (i != missing_row).then_some(v)).collect();
        let m = joint(&[x.iter().map(|&v| Some(v)).collect(), ycol]);
        let cfg = RegemConfig {
            ridge: Ridge::Fixed(1e-8),
            ..RegemConfig::default()
        };
        let fit = regem(&m, &cfg).unwrap();

        // Oracle: Gaussian MLE with x fully observed is the complete-case
        // regression of y on x; the conditional mean follows from it.
        let idx: Vec<usize> = (0..n).filter(|&i| i != missing_row).collect();
        let xm = idx.iter().map(|&i| x[i]).sum::<f64>() / idx.len() as f64;
        let ym = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        let sxy: f64 = idx.iter().map(|&i| (x[i] - xm) * (y[i] - ym)).sum();
        let sxx: f64 = idx.iter().map(|&i| (x[i] - xm).powi(2)).sum();
        let expected = ym + sxy / sxx * (x[missing_row] - xm);
        let got = fit.completed.data()[(missing_row, 1)];
        assert!((got - expected).abs() < 1e-4, "{got} vs {expected}");
    }

    #[test]
    fn gcv_picks_interior_ridge_for_noisy_regression() {
        let d = [5.0, 2.0, 1.0, 0.5, 0.1, 0.01];
        let f_sq = [4.0, 0.5, 0.01, 0.01, 0.001, 0.0001];
        let h = gcv_ridge(&d, &f_sq, 6.0, 50.0);
        assert!(h > 0.0 && h.is_finite());
    }

    #[test]
    fn convergence_is_monotone_at_the_end() {
        let mut rng = crate::seed::rng(8);
        let n = 200;
        let latent: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut cols: Vec<Vec<Option<f64>>> = (0..4)
            .map(|_| latent.iter().map(|l| Some(l + 0.7 * rng.sample::<f64, _>(StandardNormal))).collect())
            .collect();
        cols.push(latent.iter().enumerate().map(|(i, &l)| (i >= 150).then_some(l)).collect());
        let m = joint(&cols);
        let cfg = RegemConfig {
            ridge: Ridge::Gcv,
            tolerance: 1e-9,
            max_iterations: 1000,
            ..RegemConfig::default()
        };
        let fit = regem(&m, &cfg).unwrap();
        assert!(fit.iterations > 10);
        let tail = &fit.changes[fit.changes.len() - 10..];
        assert!(tail.windows(2).all(|w| w[1] < w[0]), "{tail:?}");
    }

    #[test]
    fn iteration_cap_reports_last_change() {
        let mut rng = crate::seed::rng(9);
        let n = 100;
        let latent: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let a: Vec<Option<f64>> = latent.iter().map(|l| Some(l + 0.3 * rng.sample::<f64, _>(StandardNormal))).collect();
        let t: Vec<Option<f64>> = latent.iter().enumerate().map(|(i, &l)| (i >= 80).then_some(l)).collect();
        let cfg = RegemConfig {
            ridge: Ridge::Fixed(0.1),
            tolerance: 1e-14,
            max_iterations: 3,
            ..RegemConfig::default()
        };
        match regem(&joint(&[a, t]), &cfg) {
            Err(FitError::Convergence { iterations: 3, last_change }) => assert!(last_change > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fitted_values_cover_calibration() {
        let mut rng = crate::seed::rng(10);
        let n = 120;
        let latent: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let a: Vec<Option<f64>> = latent.iter().map(|l| Some(2.0 * l + 1.0)).collect();
        let b: Vec<Option<f64>> = latent.iter().map(|l| Some(-l + 0.5)).collect();
        let t: Vec<Option<f64>> = latent.iter().enumerate().map(|(i, &l)| (i >= 60).then_some(0.5 * l)).collect();
        let m = joint(&[a, b, t]);
        let cfg = RegemConfig {
            ridge: Ridge::Fixed(1e-9),
            tolerance: 1e-12,
            max_iterations: 2000,
            ..RegemConfig::default()
        };
        let (recon, _) = fit_regem(&m, 2, &cfg, "regem").unwrap();
        for (i, l) in latent.iter().enumerate() {
            let v = recon.series.values()[i];
            assert!((v - 0.5 * l).abs() < 1e-6, "row {i}: {v} vs {}", 0.5 * l);
        }
        assert_eq!(recon.model.calibration, (1960, 2019));
        assert_eq!(recon.model.n_obs, 60);
    }
}
