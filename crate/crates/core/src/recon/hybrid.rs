//! Two-band ("hybrid") RegEM calibration.
//!
//! Proxies and target are split into a low band (periods longer than the
//! split period) and a high band (the residual). Each band is fitted with
//! RegEM on its own and the two reconstructions are summed. Decadal-resolution
//! records carry no interannual information and enter the low band only.
//!
//! Calibration years are split segment by segment: over each contiguous run
//! of observed target years, proxies are filtered on exactly the same years
//! as the target, so the filter edges match between predictors and
//! predictand. Years outside those runs use the split over the full window.

use super::{calibration_target, fit_regem, prepare_predictors, Method, ReconModel, Reconstruction, RegemConfig, Result};
use crate::matrix::YearMatrix;
use crate::proxy::{ProxyNetwork, Resolution};
use crate::timeseries::{split_bands, BandPair, TimeSeries, DEFAULT_SPLIT_PERIOD};

#[derive(Debug, Clone, PartialEq)]
pub struct HybridConfig {
    /// Band boundary in years.
    pub split_period: f64,
    pub regem: RegemConfig,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            split_period: DEFAULT_SPLIT_PERIOD,
            regem: RegemConfig::default(),
        }
    }
}

/// Combined reconstruction plus its band components. `high` is `None` when
/// the network has no annual records.
#[derive(Debug, Clone)]
pub struct HybridReconstruction {
    pub reconstruction: Reconstruction,
    pub low: Reconstruction,
    pub high: Option<Reconstruction>,
}

/// Contiguous runs of present years as `(first index, last index)`.
fn segments(t: &TimeSeries) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &m) in t.mask().iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, t.len() - 1));
    }
    out
}

/// Band split of a gap-free series, redone separately over each segment.
fn split_segmented(s: &TimeSeries, segs: &[(usize, usize)], period: f64) -> Result<BandPair> {
    let full = split_bands(s, period)?;
    let mut low = full.low.values().to_vec();
    let mut high = full.high.values().to_vec();
    for &(a, b) in segs {
        let part = split_bands(&s.window(s.start_year() + a as i32, s.start_year() + b as i32)?, period)?;
        low[a..=b].copy_from_slice(part.low.values());
        high[a..=b].copy_from_slice(part.high.values());
    }
    Ok(BandPair {
        low: TimeSeries::from_values(s.start_year(), low)?,
        high: TimeSeries::from_values(s.start_year(), high)?,
    })
}

/// Split of the target over its observed segments; other years stay missing.
fn split_target(t: &TimeSeries, segs: &[(usize, usize)], period: f64) -> Result<BandPair> {
    let mut low = vec![f64::NAN; t.len()];
    let mut high = vec![f64::NAN; t.len()];
    for &(a, b) in segs {
        let part = split_bands(&t.window(t.start_year() + a as i32, t.start_year() + b as i32)?, period)?;
        low[a..=b].copy_from_slice(part.low.values());
        high[a..=b].copy_from_slice(part.high.values());
    }
    Ok(BandPair {
        low: TimeSeries::from_values(t.start_year(), low)?,
        high: TimeSeries::from_values(t.start_year(), high)?,
    })
}

/// Hybrid RegEM reconstruction of `target` over `window`, calibrated on the
/// target values inside `calibration`.
pub fn reconstruct_hybrid(
    net: &ProxyNetwork,
    target: &TimeSeries,
    calibration: (i32, i32),
    window: (i32, i32),
    cfg: &HybridConfig,
) -> Result<HybridReconstruction> {
    let (matrix, resolutions) = prepare_predictors(net, window)?;
    let t = calibration_target(target, calibration, window)?;
    let segs = segments(&t);
    let t_bands = split_target(&t, &segs, cfg.split_period)?;

    let mut low_cols = Vec::with_capacity(matrix.n_cols());
    let mut high_cols = Vec::new();
    for (j, name) in matrix.columns().iter().enumerate() {
        let bands = split_segmented(&matrix.column_series(j), &segs, cfg.split_period)?;
        low_cols.push((name.clone(), bands.low));
        if resolutions[j] == Resolution::Annual {
            high_cols.push((name.clone(), bands.high));
        }
    }

    // Fraction of the Fourier modes of a record that fall in the low band.
    let low_share = 2.0 / cfg.split_period;
    let band_fit = |cols: &[(String, TimeSeries)], target: &TimeSeries, share: f64, label: &str| -> Result<Reconstruction> {
        let m = YearMatrix::from_series(window.0, window.1, cols.iter().map(|(n, s)| (n.clone(), s)));
        let joint = m.with_column("target", target);
        let regem = RegemConfig {
            gcv_sample_fraction: cfg.regem.gcv_sample_fraction * share,
            ..cfg.regem.clone()
        };
        let (mut recon, _) = fit_regem(&joint, joint.n_cols() - 1, &regem, label)?;
        recon.model.method = Method::RegemHybrid;
        recon.model.calibration = calibration;
        Ok(recon)
    };

    let low = band_fit(&low_cols, &t_bands.low, low_share, "regem_hybrid_low")?;
    let high = if high_cols.is_empty() {
        None
    } else {
        Some(band_fit(&high_cols, &t_bands.high, 1.0 - low_share, "regem_hybrid_high")?)
    };

    let series = match &high {
        Some(h) => low.series.add(&h.series)?,
        None => low.series.clone(),
    };
    let model = ReconModel {
        high_band: high.as_ref().map(|h| Box::new(h.model.clone())),
        ..low.model.clone()
    };
    Ok(HybridReconstruction {
        reconstruction: Reconstruction {
            series,
            model,
            label: Method::RegemHybrid.as_str().to_string(),
        },
        low,
        high,
    })
}
