//! Reconstruction methods: principal-component regression, Lasso and
//! regularized EM (single-band and two-band hybrid).
//!
//! All methods calibrate against a target series over a calibration window
//! and produce a [`Reconstruction`] covering the whole proxy window. Only the
//! target values inside the calibration window are ever used for fitting, so
//! callers can hold out blocks by masking them in the target.

mod cv;
mod hybrid;
mod lasso;
pub(crate) mod ols;
mod pca;
mod regem;

pub use cv::CvRule;
pub use hybrid::{reconstruct_hybrid, HybridConfig, HybridReconstruction};
pub use lasso::{fit_lasso, lambda_max, select_lambda, LambdaSelection, LASSO_TOLERANCE};
pub use ols::{fit_ols_pc, select_k, KRule, KSelection};
pub use pca::{fit_pca, PcaBasis};
pub use regem::{fit_regem, regem, reconstruct_regem, RegemConfig, RegemFit, Ridge};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::matrix::YearMatrix;
use crate::proxy::{ProxyNetwork, Resolution};
use crate::timeseries::{SeriesError, TimeSeries};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("column `{0}` has zero variance over the fit window")]
    DegenerateColumn(String),
    #[error("calibration provides {found} {unit}, need at least {needed}")]
    InsufficientCalibration {
        needed: usize,
        found: usize,
        unit: &'static str,
    },
    #[error("normal equations are singular")]
    SingularFit,
    #[error("no convergence after {iterations} iterations (last change {last_change:.3e})")]
    Convergence { iterations: usize, last_change: f64 },
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

pub type Result<T> = std::result::Result<T, FitError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    OlsPc,
    Lasso,
    Regem,
    RegemHybrid,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::OlsPc => "ols_pc",
            Method::Lasso => "lasso",
            Method::Regem => "regem",
            Method::RegemHybrid => "regem_hybrid",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ols_pc" => Ok(Method::OlsPc),
            "lasso" => Ok(Method::Lasso),
            "regem" => Ok(Method::Regem),
            "regem_hybrid" => Ok(Method::RegemHybrid),
            _ => Err(format!("unknown method `{s}`")),
        }
    }
}

/// A fitted linear reconstruction model.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconModel {
    pub method: Method,
    /// Retained principal components (`ols_pc`).
    pub k: Option<usize>,
    /// L1 penalty (`lasso`).
    pub lambda: Option<f64>,
    /// Ridge parameter of the final EM regression (`regem`, `regem_hybrid`).
    pub ridge: Option<f64>,
    pub calibration: (i32, i32),
    /// Slopes on the predictor columns (PC scores for `ols_pc`, raw proxy
    /// columns otherwise).
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub residual_variance: f64,
    /// Calibration years used in the fit.
    pub n_obs: usize,
    /// High-band model of a hybrid fit; this model then describes the low band.
    pub high_band: Option<Box<ReconModel>>,
}

impl ReconModel {
    /// Plain-text `key = value` dump.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        self.write_key_values(&mut out, "");
        out
    }

    fn write_key_values(&self, out: &mut String, prefix: &str) {
        use std::fmt::Write;
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".to_string());
        let _ = writeln!(out, "{prefix}method = {}", self.method);
        let _ = writeln!(out, "{prefix}k = {}", opt(self.k.map(|k| k.to_string())));
        let _ = writeln!(out, "{prefix}lambda = {}", opt(self.lambda.map(|v| v.to_string())));
        let _ = writeln!(out, "{prefix}ridge = {}", opt(self.ridge.map(|v| v.to_string())));
        let _ = writeln!(out, "{prefix}calibration = {}-{}", self.calibration.0, self.calibration.1);
        let _ = writeln!(out, "{prefix}n_obs = {}", self.n_obs);
        let _ = writeln!(out, "{prefix}intercept = {}", self.intercept);
        let coefs: Vec<String> = self.coefficients.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "{prefix}coefficients = {}", coefs.join(","));
        let _ = writeln!(out, "{prefix}residual_variance = {}", self.residual_variance);
        if let Some(high) = &self.high_band {
            high.write_key_values(out, "high_band.");
        }
    }
}

/// Reconstructed target series with the model that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub series: TimeSeries,
    pub model: ReconModel,
    pub label: String,
}

impl Reconstruction {
    /// `year,value,label` CSV rows (header included).
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "year,value,label")?;
        for (year, (&v, &m)) in self.series.years().zip(self.series.values().iter().zip(self.series.mask())) {
            if m {
                writeln!(w, "{year},{v},{}", self.label)?;
            } else {
                writeln!(w, "{year},,{}", self.label)?;
            }
        }
        Ok(())
    }
}

/// Applies fitted coefficients over `start..=end`. For `ols_pc` models the
/// predictors are PC scores and the first `k` columns are used; years with a
/// missing predictor are masked.
pub fn predict(model: &ReconModel, predictors: &YearMatrix, start: i32, end: i32, label: &str) -> Result<Reconstruction> {
    if model.high_band.is_some() {
        return Err(FitError::InvalidParameter(
            "hybrid models need band-split predictors; use reconstruct_hybrid".into(),
        ));
    }
    let p = model.coefficients.len();
    if predictors.n_cols() < p || (model.method != Method::OlsPc && predictors.n_cols() != p) {
        return Err(FitError::InvalidParameter(format!(
            "model has {p} coefficients but predictors have {} columns",
            predictors.n_cols()
        )));
    }
    let values: Vec<f64> = (start..=end)
        .map(|year| {
            let mut acc = model.intercept;
            for (j, c) in model.coefficients.iter().enumerate() {
                match predictors.get(year, j) {
                    Some(x) => acc += c * x,
                    None => return f64::NAN,
                }
            }
            acc
        })
        .collect();
    Ok(Reconstruction {
        series: TimeSeries::from_values(start, values)?,
        model: model.clone(),
        label: label.to_string(),
    })
}

/// Proxy matrix on `window` ready for fitting: interior gaps are linearly
/// interpolated and records with leading or trailing gaps inside the window
/// are dropped. Decadal records are first extended by up to nine years at
/// either edge with their nearest block value. Returns the matrix and the
/// resolution of each kept column.
pub fn prepare_predictors(net: &ProxyNetwork, window: (i32, i32)) -> Result<(YearMatrix, Vec<Resolution>)> {
    let mut kept = Vec::new();
    for r in net.records() {
        let mut s = r.series.window(window.0, window.1)?.interpolate_linear();
        if r.resolution == Resolution::Decadal {
            s = extend_edges(&s, 9);
        }
        if !s.has_missing() {
            kept.push((r.id.clone(), s, r.resolution));
        }
    }
    if kept.is_empty() {
        return Err(FitError::MissingData(format!(
            "no record is complete over {}-{}",
            window.0, window.1
        )));
    }
    let resolutions = kept.iter().map(|k| k.2).collect();
    let matrix = YearMatrix::from_series(window.0, window.1, kept.iter().map(|(id, s, _)| (id.clone(), s)));
    Ok((matrix, resolutions))
}

/// Copies the first and last present values outward over at most `max` years.
fn extend_edges(s: &TimeSeries, max: usize) -> TimeSeries {
    let Some((first, last)) = s.present_span() else {
        return s.clone();
    };
    let lead = (first - s.start_year()) as usize;
    let trail = (s.end_year() - last) as usize;
    let mut values = s.values().to_vec();
    let (a, b) = (values[lead], values[values.len() - 1 - trail]);
    let n = values.len();
    for v in &mut values[lead.saturating_sub(max)..lead] {
        *v = a;
    }
    for v in &mut values[n - trail..(n - trail + max).min(n)] {
        *v = b;
    }
    TimeSeries::from_values(s.start_year(), values).expect("same length")
}

/// Method choice plus its tuning.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodConfig {
    OlsPc { k: Option<usize>, max_k: usize, rule: KRule },
    Lasso { lambda: Option<f64>, rule: CvRule },
    Regem(RegemConfig),
    RegemHybrid(HybridConfig),
}

impl MethodConfig {
    pub fn method(&self) -> Method {
        match self {
            MethodConfig::OlsPc { .. } => Method::OlsPc,
            MethodConfig::Lasso { .. } => Method::Lasso,
            MethodConfig::Regem(_) => Method::Regem,
            MethodConfig::RegemHybrid(_) => Method::RegemHybrid,
        }
    }

    /// Defaults for each method: K and λ by cross-validation, ridge by GCV,
    /// 20-year hybrid split.
    pub fn default_for(method: Method) -> Self {
        match method {
            Method::OlsPc => MethodConfig::OlsPc {
                k: None,
                max_k: 10,
                rule: KRule::default(),
            },
            Method::Lasso => MethodConfig::Lasso {
                lambda: None,
                rule: CvRule::default(),
            },
            Method::Regem => MethodConfig::Regem(RegemConfig::default()),
            Method::RegemHybrid => MethodConfig::RegemHybrid(HybridConfig::default()),
        }
    }
}

/// Fits `method` on the network against `target` over `calibration` and
/// reconstructs the whole `window`.
pub fn reconstruct(
    net: &ProxyNetwork,
    target: &TimeSeries,
    calibration: (i32, i32),
    window: (i32, i32),
    method: &MethodConfig,
) -> Result<Reconstruction> {
    let label = method.method().as_str();
    match method {
        MethodConfig::OlsPc { k, max_k, rule } => {
            let (matrix, _) = prepare_predictors(net, window)?;
            let basis = fit_pca(&matrix, calibration)?;
            let k = match k {
                Some(k) => *k,
                None => select_k(&basis, target, (*max_k).min(basis.n_components()), calibration, *rule)?.k,
            };
            let model = fit_ols_pc(&basis, target, k, calibration)?;
            predict(&model, basis.scores(), window.0, window.1, label)
        }
        MethodConfig::Lasso { lambda, rule } => {
            let (matrix, _) = prepare_predictors(net, window)?;
            let lambda = match lambda {
                Some(l) => *l,
                None => select_lambda(&matrix, target, calibration, *rule)?.lambda,
            };
            let model = fit_lasso(&matrix, target, lambda, calibration)?;
            predict(&model, &matrix, window.0, window.1, label)
        }
        MethodConfig::Regem(cfg) => reconstruct_regem(net, target, calibration, window, cfg),
        MethodConfig::RegemHybrid(cfg) => {
            Ok(reconstruct_hybrid(net, target, calibration, window, cfg)?.reconstruction)
        }
    }
}

/// Calibration target restricted to `calibration`, with everything else masked.
pub(crate) fn calibration_target(target: &TimeSeries, calibration: (i32, i32), window: (i32, i32)) -> Result<TimeSeries> {
    let start = calibration.0.max(window.0);
    let end = calibration.1.min(window.1);
    let mut t = target.window(window.0, window.1)?;
    if start > window.0 {
        t = t.with_masked(window.0, start - 1);
    }
    if end < window.1 {
        t = t.with_masked(end + 1, window.1);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(coefs: Vec<f64>, intercept: f64) -> ReconModel {
        ReconModel {
            method: Method::Lasso,
            k: None,
            lambda: Some(0.0),
            ridge: None,
            calibration: (1900, 1950),
            coefficients: coefs,
            intercept,
            residual_variance: 0.0,
            n_obs: 51,
            high_band: None,
        }
    }

    #[test]
    fn zero_coefficients_give_intercept() {
        let a = TimeSeries::from_values(1900, vec![1.0, 2.0, 3.0]).unwrap();
        let m = YearMatrix::from_series(1900, 1902, [("a".to_string(), &a)]);
        let r = predict(&model(vec![0.0], 0.4), &m, 1900, 1902, "x").unwrap();
        assert_eq!(r.series.values(), &[0.4, 0.4, 0.4]);
    }

    #[test]
    fn missing_predictor_masks_year() {
        let a = TimeSeries::from_options(1900, &[Some(1.0), None, Some(3.0)]).unwrap();
        let m = YearMatrix::from_series(1900, 1902, [("a".to_string(), &a)]);
        let r = predict(&model(vec![2.0], 1.0), &m, 1900, 1902, "x").unwrap();
        assert_eq!(r.series.mask(), &[true, false, true]);
        assert_eq!(r.series.get(1902), Some(7.0));
    }

    #[test]
    fn key_value_dump_lists_fields() {
        let text = model(vec![0.5, -1.0], 0.1).to_key_values();
        assert!(text.contains("method = lasso"));
        assert!(text.contains("coefficients = 0.5,-1"));
        assert!(text.contains("k = none"));
        assert!(text.contains("calibration = 1900-1950"));
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::OlsPc, Method::Lasso, Method::Regem, Method::RegemHybrid] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
    }
}
