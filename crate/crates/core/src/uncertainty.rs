//! Coefficient ensembles for principal-component regression models.
//!
//! Under the noninformative prior `p(β, σ²) ∝ 1/σ²` the posterior of an OLS
//! fit with `n` rows and `p` coefficients (intercept included) factors as
//!
//! - `σ² | y ~ SSE / χ²(n − p)`
//! - `β | σ², y ~ N(β̂, σ² (XᵀX)⁻¹)`
//!
//! and is sampled exactly. With `X = QR`, `(XᵀX)⁻¹ = R⁻¹R⁻ᵀ`, so a draw is
//! `β̂ + σ R⁻¹ z` for standard normal `z`.
//!
//! Every draw uses its own counter-based substream, so results do not depend
//! on thread scheduling.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::matrix::YearMatrix;
use crate::proxy::ProxyNetwork;
use crate::recon::{
    fit_ols_pc, fit_pca, ols::calibration_rows, predict, prepare_predictors, select_k, FitError, KRule, Method, ReconModel,
    Reconstruction,
};
use crate::seed::{derive_seed, substream};
use crate::timeseries::{first_block_start, TimeSeries};

#[derive(Debug, Error)]
pub enum UncertaintyError {
    #[error("normal equations are singular")]
    SingularFit,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("decade {start}-{end} is not a complete 10-year block inside {span_start}-{span_end}")]
    BlockMismatch {
        start: i32,
        end: i32,
        span_start: i32,
        span_end: i32,
    },
    #[error(transparent)]
    Fit(#[from] FitError),
}

pub type Result<T> = std::result::Result<T, UncertaintyError>;

/// Posterior draws; row `i` of `beta` is `(intercept, slopes...)` of draw `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientDraws {
    pub beta: DMatrix<f64>,
    pub sigma2: Vec<f64>,
}

impl CoefficientDraws {
    pub fn n_draws(&self) -> usize {
        self.sigma2.len()
    }
}

/// Calibration design of an `ols_pc` model: the first `k` score columns
/// (no intercept column) and the target over the model's calibration years.
pub fn calibration_design(scores: &YearMatrix, target: &TimeSeries, model: &ReconModel) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let k = ols_k(model)?;
    if scores.n_cols() < k {
        return Err(UncertaintyError::InvalidInput(format!(
            "model uses {k} components but only {} scores are given",
            scores.n_cols()
        )));
    }
    let (_, x, y) = calibration_rows(scores, target, k, model.calibration);
    Ok((x.remove_column(0), y))
}

fn ols_k(model: &ReconModel) -> Result<usize> {
    if model.method != Method::OlsPc {
        return Err(UncertaintyError::InvalidInput(format!(
            "coefficient sampling needs an ols_pc model, got {}",
            model.method
        )));
    }
    Ok(model.coefficients.len())
}

/// Exact posterior draws of the intercept and slopes of `model`.
/// `design` holds the predictor columns without the intercept.
pub fn sample_coefficients(
    model: &ReconModel,
    design: &DMatrix<f64>,
    target: &DVector<f64>,
    n_draws: usize,
    seed: u64,
) -> Result<CoefficientDraws> {
    let k = ols_k(model)?;
    if n_draws == 0 {
        return Err(UncertaintyError::InvalidInput("n_draws must be at least 1".into()));
    }
    let (n, cols) = design.shape();
    if cols != k || target.len() != n {
        return Err(UncertaintyError::InvalidInput(format!(
            "design is {n}x{cols} with {} targets, model has {k} slopes",
            target.len()
        )));
    }
    let p = k + 1;
    if n <= p {
        return Err(UncertaintyError::InvalidInput(format!(
            "{n} calibration rows leave no residual degrees of freedom for {p} coefficients"
        )));
    }
    let x = design.clone().insert_column(0, 1.0);
    let qr = x.qr();
    let r = qr.r();
    let max_diag = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_diag == 0.0 || r.diagonal().iter().any(|v| v.abs() <= 1e-12 * max_diag) {
        return Err(UncertaintyError::SingularFit);
    }
    let beta_hat = r
        .solve_upper_triangular(&(qr.q().transpose() * target))
        .ok_or(UncertaintyError::SingularFit)?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(UncertaintyError::SingularFit)?;
    let sse = (target - design.clone().insert_column(0, 1.0) * &beta_hat).norm_squared();
    // Residuals at rounding level are an exact fit.
    let sse = if sse <= (n as f64 * f64::EPSILON).powi(2) * target.norm_squared() { 0.0 } else { sse };
    let chi = ChiSquared::new((n - p) as f64).map_err(|e| UncertaintyError::InvalidInput(e.to_string()))?;

    let rows: Vec<(Vec<f64>, f64)> = (0..n_draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let sigma2 = if sse > 0.0 { sse / chi.sample(&mut rng) } else { 0.0 };
            let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let b = &beta_hat + sigma2.sqrt() * (&r_inv * z);
            (b.iter().copied().collect(), sigma2)
        })
        .collect();
    let beta = DMatrix::from_fn(n_draws, p, |i, j| rows[i].0[j]);
    let sigma2 = rows.into_iter().map(|r| r.1).collect();
    Ok(CoefficientDraws { beta, sigma2 })
}

/// Whether ensemble members carry residual noise on top of coefficient
/// uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    #[default]
    CoefficientsOnly,
    /// Adds independent `N(0, σ²)` noise per year with each draw's own `σ²`.
    PlusResidualNoise,
}

impl NoiseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseMode::CoefficientsOnly => "coefficients_only",
            NoiseMode::PlusResidualNoise => "plus_residual_noise",
        }
    }
}

impl FromStr for NoiseMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "coefficients_only" => Ok(NoiseMode::CoefficientsOnly),
            "plus_residual_noise" => Ok(NoiseMode::PlusResidualNoise),
            _ => Err(format!("unknown noise mode `{s}`")),
        }
    }
}

/// Monte Carlo reconstructions, one row per draw, on a gap-free year axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    start_year: i32,
    draws: DMatrix<f64>,
    pub label: String,
    pub seed: u64,
}

impl Ensemble {
    /// Fails when there are no draws, no years or any non-finite entry.
    pub fn new(start_year: i32, draws: DMatrix<f64>, label: impl Into<String>, seed: u64) -> Result<Self> {
        if draws.nrows() == 0 || draws.ncols() == 0 {
            return Err(UncertaintyError::InvalidInput("ensemble needs at least one draw and one year".into()));
        }
        if draws.iter().any(|v| !v.is_finite()) {
            return Err(UncertaintyError::InvalidInput("ensemble entries must be finite".into()));
        }
        Ok(Self {
            start_year,
            draws,
            label: label.into(),
            seed,
        })
    }

    pub fn start_year(&self) -> i32 {
        self.start_year
    }

    pub fn end_year(&self) -> i32 {
        self.start_year + self.draws.ncols() as i32 - 1
    }

    pub fn n_draws(&self) -> usize {
        self.draws.nrows()
    }

    pub fn n_years(&self) -> usize {
        self.draws.ncols()
    }

    /// `n_draws × n_years`.
    pub fn draws(&self) -> &DMatrix<f64> {
        &self.draws
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.start_year..=self.end_year()
    }

    /// Across-draw mean per year.
    pub fn mean(&self) -> TimeSeries {
        let n = self.n_draws() as f64;
        let v = self.draws.column_iter().map(|c| c.sum() / n).collect();
        TimeSeries::from_values(self.start_year, v).expect("non-empty")
    }

    /// `draw,year,value` rows (header included).
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "draw,year,value")?;
        for i in 0..self.n_draws() {
            for (j, year) in self.years().enumerate() {
                writeln!(w, "{i},{year},{}", self.draws[(i, j)])?;
            }
        }
        Ok(())
    }

    /// `year,mean,q05,q50,q95` rows (header included).
    pub fn write_summary_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "year,mean,q05,q50,q95")?;
        let mean = self.mean();
        for (j, year) in self.years().enumerate() {
            let mut col: Vec<f64> = self.draws.column(j).iter().copied().collect();
            col.sort_by(f64::total_cmp);
            writeln!(
                w,
                "{year},{},{},{},{}",
                mean.values()[j],
                quantile(&col, 0.05),
                quantile(&col, 0.5),
                quantile(&col, 0.95)
            )?;
        }
        Ok(())
    }
}

/// Linearly interpolated quantile of sorted values (`q` in `[0, 1]`).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One reconstruction per coefficient draw from the first `k` score columns
/// over the whole score axis. Residual noise for draw `i` comes from
/// substream `i` of the seed derived from `seed` and `residual-noise`.
pub fn build_ensemble(draws: &CoefficientDraws, scores: &YearMatrix, noise: NoiseMode, seed: u64, label: &str) -> Result<Ensemble> {
    let k = draws.beta.ncols() - 1;
    if scores.n_cols() < k {
        return Err(UncertaintyError::InvalidInput(format!(
            "draws have {k} slopes but only {} scores are given",
            scores.n_cols()
        )));
    }
    let x = scores.data().columns(0, k).into_owned();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(UncertaintyError::InvalidInput("scores must be complete over the ensemble span".into()));
    }
    let mut out = &draws.beta * x.insert_column(0, 1.0).transpose();
    if noise == NoiseMode::PlusResidualNoise {
        let noise_seed = derive_seed(seed, "residual-noise");
        let n_years = out.ncols();
        let rows: Vec<Vec<f64>> = (0..draws.n_draws())
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(noise_seed, i as u64);
                let sd = draws.sigma2[i].sqrt();
                (0..n_years).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
            })
            .collect();
        for (i, row) in rows.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                out[(i, j)] += e;
            }
        }
    }
    Ensemble::new(scores.start_year(), out, label, seed)
}

/// Source of ensemble values after the calibration period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplicePolicy {
    /// Observed target values replace the reconstruction in every draw.
    #[default]
    Observed,
    Reconstructed,
}

impl SplicePolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            SplicePolicy::Observed => "observed",
            SplicePolicy::Reconstructed => "reconstructed",
        }
    }
}

impl FromStr for SplicePolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "observed" => Ok(SplicePolicy::Observed),
            "reconstructed" => Ok(SplicePolicy::Reconstructed),
            _ => Err(format!("unknown splice policy `{s}`")),
        }
    }
}

/// With [`SplicePolicy::Observed`], years from `from` onward take the
/// observed target where it is present, and the ensemble is extended over
/// the run of consecutive observed years past its end.
pub fn splice(e: &Ensemble, target: &TimeSeries, policy: SplicePolicy, from: i32) -> Ensemble {
    if policy == SplicePolicy::Reconstructed {
        return e.clone();
    }
    let mut end = e.end_year();
    while target.get(end + 1).is_some() {
        end += 1;
    }
    let n_years = (end - e.start_year + 1) as usize;
    let draws = DMatrix::from_fn(e.n_draws(), n_years, |i, j| {
        let year = e.start_year + j as i32;
        match target.get(year) {
            Some(v) if year >= from => v,
            _ => e.draws[(i, j)],
        }
    });
    Ensemble {
        draws,
        ..e.clone()
    }
}

/// Fraction of draws in which the mean over `decade` strictly exceeds the
/// mean of every other complete 10-year block aligned with it.
pub fn prob_warmest_decade(e: &Ensemble, decade: (i32, i32)) -> Result<f64> {
    if decade.1 - decade.0 != 9 || decade.0 < e.start_year() || decade.1 > e.end_year() {
        return Err(UncertaintyError::BlockMismatch {
            start: decade.0,
            end: decade.1,
            span_start: e.start_year(),
            span_end: e.end_year(),
        });
    }
    let first = first_block_start(e.start_year(), decade.1);
    let starts: Vec<usize> = (0..)
        .map(|b| (first - e.start_year()) as usize + 10 * b)
        .take_while(|&s| s + 9 < e.n_years())
        .collect();
    let target = (decade.0 - e.start_year()) as usize;
    let wins = (0..e.n_draws())
        .filter(|&i| {
            let row = e.draws.row(i);
            let mean = |s: usize| row.columns(s, 10).sum() / 10.0;
            let m = mean(target);
            starts.iter().filter(|&&s| s != target).all(|&s| m > mean(s))
        })
        .count();
    Ok(wins as f64 / e.n_draws() as f64)
}

/// Settings of an `ols_pc` coefficient ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    /// Fixed number of components; chosen by `k_rule` up to `max_k` when `None`.
    pub k: Option<usize>,
    pub max_k: usize,
    pub k_rule: KRule,
    pub n_draws: usize,
    pub noise: NoiseMode,
    pub splice: SplicePolicy,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            k: None,
            max_k: 10,
            k_rule: KRule::default(),
            n_draws: 1000,
            noise: NoiseMode::default(),
            splice: SplicePolicy::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub point: Reconstruction,
    pub draws: CoefficientDraws,
    /// Spliced according to the configured policy.
    pub ensemble: Ensemble,
}

/// Fits an `ols_pc` model on `window`, samples its coefficient posterior and
/// builds the ensemble, spliced with the target after the calibration
/// period. Coefficients and residual noise use the seeds derived from
/// `cfg.seed` with the labels `coefficients` and `ensemble`.
pub fn ols_pc_ensemble(
    net: &ProxyNetwork,
    target: &TimeSeries,
    calibration: (i32, i32),
    window: (i32, i32),
    cfg: &EnsembleConfig,
) -> Result<EnsembleRun> {
    let (matrix, _) = prepare_predictors(net, window)?;
    let basis = fit_pca(&matrix, calibration)?;
    let k = match cfg.k {
        Some(k) => k,
        None => select_k(&basis, target, cfg.max_k.min(basis.n_components()), calibration, cfg.k_rule)?.k,
    };
    let model = fit_ols_pc(&basis, target, k, calibration)?;
    let point = predict(&model, basis.scores(), window.0, window.1, Method::OlsPc.as_str())?;
    let (x, y) = calibration_design(basis.scores(), target, &model)?;
    let draws = sample_coefficients(&model, &x, &y, cfg.n_draws, derive_seed(cfg.seed, "coefficients"))?;
    let label = format!("ols_pc_k{k}");
    let raw = build_ensemble(&draws, basis.scores(), cfg.noise, derive_seed(cfg.seed, "ensemble"), &label)?;
    let ensemble = splice(&raw, target, cfg.splice, calibration.1 + 1);
    Ok(EnsembleRun { point, draws, ensemble })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(k: usize) -> ReconModel {
        ReconModel {
            method: Method::OlsPc,
            k: Some(k),
            lambda: None,
            ridge: None,
            calibration: (1900, 1999),
            coefficients: vec![0.0; k],
            intercept: 0.0,
            residual_variance: 0.0,
            n_obs: 100,
            high_band: None,
        }
    }

    fn design(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = crate::seed::rng(seed);
        DMatrix::from_fn(n, k, |_, _| rng.sample(StandardNormal))
    }

    fn ensemble(rows: &[&[f64]]) -> Ensemble {
        let m = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
        Ensemble::new(1990, m, "t", 0).unwrap()
    }

    #[test]
    fn exact_fit_gives_identical_draws() {
        let x = design(30, 2, 1);
        let y = x.column(0) * 2.0 - x.column(1) * 0.5 + DVector::repeat(30, 0.3);
        let d = sample_coefficients(&model(2), &x, &y, 50, 9).unwrap();
        for i in 0..50 {
            assert!((d.beta[(i, 0)] - 0.3).abs() < 1e-12);
            assert!((d.beta[(i, 1)] - 2.0).abs() < 1e-12);
            assert!((d.beta[(i, 2)] + 0.5).abs() < 1e-12);
            assert_eq!(d.sigma2[i], 0.0);
        }
    }

    #[test]
    fn non_ols_model_is_rejected() {
        let m = ReconModel {
            method: Method::Lasso,
            ..model(1)
        };
        let err = sample_coefficients(&m, &design(10, 1, 1), &DVector::zeros(10), 5, 1).unwrap_err();
        assert!(matches!(err, UncertaintyError::InvalidInput(_)));
    }

    #[test]
    fn collinear_design_is_singular() {
        let mut x = design(20, 2, 2);
        let c0 = x.column(0).into_owned();
        x.set_column(1, &(c0 * 3.0));
        let y = DVector::from_fn(20, |i, _| i as f64);
        assert!(matches!(
            sample_coefficients(&model(2), &x, &y, 5, 1),
            Err(UncertaintyError::SingularFit)
        ));
    }

    #[test]
    fn single_draw_without_noise_is_the_linear_prediction() {
        let scores = YearMatrix::new(2000, vec!["pc1".into()], DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]));
        let draws = CoefficientDraws {
            beta: DMatrix::from_row_slice(1, 2, &[0.5, 2.0]),
            sigma2: vec![1.0],
        };
        let e = build_ensemble(&draws, &scores, NoiseMode::CoefficientsOnly, 3, "x").unwrap();
        assert_eq!(e.draws().row(0).iter().copied().collect::<Vec<_>>(), vec![2.5, 4.5, 6.5]);
    }

    #[test]
    fn warmest_decade_counts() {
        let mut hot = vec![0.0; 30];
        hot[20..30].fill(1.0);
        let mut cold = hot.clone();
        cold[0..10].fill(2.0);
        assert_eq!(prob_warmest_decade(&ensemble(&[&hot, &hot]), (2010, 2019)).unwrap(), 1.0);
        assert_eq!(prob_warmest_decade(&ensemble(&[&hot, &cold]), (2010, 2019)).unwrap(), 0.5);
        // A tie is not a win.
        let flat = vec![1.0; 30];
        assert_eq!(prob_warmest_decade(&ensemble(&[&flat]), (2010, 2019)).unwrap(), 0.0);
    }

    #[test]
    fn misaligned_decade_is_rejected() {
        let e = ensemble(&[&[0.0; 30]]);
        assert!(matches!(prob_warmest_decade(&e, (2010, 2020)), Err(UncertaintyError::BlockMismatch { .. })));
        assert!(matches!(prob_warmest_decade(&e, (2015, 2024)), Err(UncertaintyError::BlockMismatch { .. })));
    }

    #[test]
    fn partial_blocks_are_ignored() {
        // Blocks aligned with 2013-2022 inside 1990-2019 are 1994-2003 and
        // 2004-2013; the trailing years do not form a block.
        let mut v = vec![0.0; 30];
        v[24..30].fill(5.0);
        v[14..24].fill(1.0);
        assert_eq!(prob_warmest_decade(&ensemble(&[&v]), (2004, 2013)).unwrap(), 1.0);
    }

    #[test]
    fn observed_splice_overwrites_and_extends() {
        let e = ensemble(&[&[0.0; 5], &[1.0; 5]]);
        let t = TimeSeries::from_options(1992, &[Some(9.0), None, Some(7.0), Some(8.0), Some(6.0)]).unwrap();
        let s = splice(&e, &t, SplicePolicy::Observed, 1993);
        assert_eq!(s.end_year(), 1996);
        let row = |i: usize| s.draws().row(i).iter().copied().collect::<Vec<_>>();
        assert_eq!(row(0), vec![0.0, 0.0, 0.0, 0.0, 7.0, 8.0, 6.0]);
        assert_eq!(row(1), vec![1.0, 1.0, 1.0, 1.0, 7.0, 8.0, 6.0]);
        assert_eq!(splice(&e, &t, SplicePolicy::Reconstructed, 1993), e);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert!((quantile(&v, 0.05) - 1.2).abs() < 1e-12);
        assert!((quantile(&v, 0.95) - 4.8).abs() < 1e-12);
    }
}
