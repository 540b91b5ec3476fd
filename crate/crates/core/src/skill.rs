//! Verification statistics and hold-out validation.
//!
//! Over a verification window with truth `t`, reconstruction `r` and
//! `SSE = Σ(r − t)²`:
//!
//! - `RE = 1 − SSE / Σ(t − calibration_mean)²`
//! - `CE = 1 − SSE / Σ(t − mean(t))²`
//! - `rmse = sqrt(SSE / n)`
//! - `r2` is the squared Pearson correlation of `r` and `t` (0 when `r` is
//!   constant)
//! - `var_ratio = var(r) / var(t)`

use std::str::FromStr;

use thiserror::Error;

use crate::proxy::ProxyNetwork;
use crate::recon::{reconstruct, FitError, MethodConfig};
use crate::timeseries::TimeSeries;

/// Fewest overlapping years [`score`] accepts.
pub const MIN_OVERLAP: usize = 5;
/// Shortest calibration left after removing a hold-out block.
pub const MIN_REMAINING_CALIBRATION: usize = 30;
/// Step between sliding hold-out blocks.
pub const SLIDING_STEP: i32 = 10;

#[derive(Debug, Error)]
pub enum SkillError {
    #[error("truth has zero variance over {start}-{end}")]
    DegenerateTruth { start: i32, end: i32 },
    #[error("only {found} overlapping years in {start}-{end}, need {MIN_OVERLAP}")]
    InsufficientOverlap { start: i32, end: i32, found: usize },
    #[error("invalid hold-out setup: {0}")]
    InvalidBlock(String),
    #[error("fit for hold-out block {start}-{end} failed: {source}")]
    Fit {
        start: i32,
        end: i32,
        #[source]
        source: FitError,
    },
}

pub type Result<T> = std::result::Result<T, SkillError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkillReport {
    pub re: f64,
    pub ce: f64,
    pub rmse: f64,
    pub r2: f64,
    pub var_ratio: f64,
    pub window: (i32, i32),
    pub n: usize,
}

/// Scores `recon` against `truth` over the years of `window` where both are
/// present.
pub fn score(recon: &TimeSeries, truth: &TimeSeries, calibration_mean: f64, window: (i32, i32)) -> Result<SkillReport> {
    let pairs: Vec<(f64, f64)> = (window.0..=window.1)
        .filter_map(|y| Some((recon.get(y)?, truth.get(y)?)))
        .collect();
    let n = pairs.len();
    if n < MIN_OVERLAP {
        return Err(SkillError::InsufficientOverlap {
            start: window.0,
            end: window.1,
            found: n,
        });
    }
    let nf = n as f64;
    // Means shifted by the first pair, so constant series have exact means.
    let (r0, t0) = pairs[0];
    let r_mean = r0 + pairs.iter().map(|p| p.0 - r0).sum::<f64>() / nf;
    let t_mean = t0 + pairs.iter().map(|p| p.1 - t0).sum::<f64>() / nf;
    let (mut sse, mut ss_cal, mut ss_t, mut ss_r, mut cross) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(r, t) in &pairs {
        sse += (r - t).powi(2);
        ss_cal += (t - calibration_mean).powi(2);
        ss_t += (t - t_mean).powi(2);
        ss_r += (r - r_mean).powi(2);
        cross += (r - r_mean) * (t - t_mean);
    }
    if ss_t == 0.0 {
        return Err(SkillError::DegenerateTruth {
            start: window.0,
            end: window.1,
        });
    }
    Ok(SkillReport {
        re: 1.0 - sse / ss_cal,
        ce: 1.0 - sse / ss_t,
        rmse: (sse / nf).sqrt(),
        r2: if ss_r == 0.0 { 0.0 } else { (cross * cross / (ss_r * ss_t)).min(1.0) },
        var_ratio: ss_r / ss_t,
        window,
        n,
    })
}

/// Placement of hold-out blocks inside the instrumental overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoldoutMode {
    Early,
    Late,
    /// Blocks start at the overlap start and step by [`SLIDING_STEP`] years.
    Sliding,
}

impl HoldoutMode {
    pub fn as_str(self) -> &'static str {
        match self {
            HoldoutMode::Early => "early",
            HoldoutMode::Late => "late",
            HoldoutMode::Sliding => "sliding",
        }
    }
}

impl FromStr for HoldoutMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "early" => Ok(HoldoutMode::Early),
            "late" => Ok(HoldoutMode::Late),
            "sliding" => Ok(HoldoutMode::Sliding),
            _ => Err(format!("unknown hold-out mode `{s}`")),
        }
    }
}

/// Hold-out blocks of `block_length` years inside `overlap`.
pub fn holdout_blocks(overlap: (i32, i32), block_length: usize, mode: HoldoutMode) -> Result<Vec<(i32, i32)>> {
    let span = (overlap.1 - overlap.0 + 1).max(0) as usize;
    if block_length == 0 || block_length >= span {
        return Err(SkillError::InvalidBlock(format!(
            "block length {block_length} must be in 1..{span}"
        )));
    }
    if span - block_length < MIN_REMAINING_CALIBRATION {
        return Err(SkillError::InvalidBlock(format!(
            "{} calibration years remain, need {MIN_REMAINING_CALIBRATION}",
            span - block_length
        )));
    }
    let len = block_length as i32;
    Ok(match mode {
        HoldoutMode::Early => vec![(overlap.0, overlap.0 + len - 1)],
        HoldoutMode::Late => vec![(overlap.1 - len + 1, overlap.1)],
        HoldoutMode::Sliding => (0..)
            .map(|i| overlap.0 + SLIDING_STEP * i)
            .take_while(|&s| s + len - 1 <= overlap.1)
            .map(|s| (s, s + len - 1))
            .collect(),
    })
}

/// Skill of one hold-out block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSkill {
    pub block: (i32, i32),
    pub report: SkillReport,
}

/// For each hold-out block: masks the block in the target, fits `method` on
/// the rest of `overlap`, and scores the block against the withheld target
/// with the mean of the remaining calibration years as reference.
pub fn holdout_validate(
    net: &ProxyNetwork,
    target: &TimeSeries,
    overlap: (i32, i32),
    window: (i32, i32),
    method: &MethodConfig,
    block_length: usize,
    mode: HoldoutMode,
) -> Result<Vec<BlockSkill>> {
    holdout_blocks(overlap, block_length, mode)?
        .into_iter()
        .map(|block| {
            let fit_err = |source| SkillError::Fit {
                start: block.0,
                end: block.1,
                source,
            };
            let masked = target.with_masked(block.0, block.1);
            let calibration_mean = masked
                .window(overlap.0, overlap.1)
                .map_err(|e| fit_err(e.into()))?
                .present()
                .map(|(_, v)| v)
                .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            if calibration_mean.1 == 0 {
                return Err(SkillError::InvalidBlock(format!(
                    "no target values outside {}-{}",
                    block.0, block.1
                )));
            }
            let recon = reconstruct(net, &masked, overlap, window, method).map_err(fit_err)?;
            let report = score(
                &recon.series,
                target,
                calibration_mean.0 / calibration_mean.1 as f64,
                block,
            )?;
            Ok(BlockSkill { block, report })
        })
        .collect()
}

/// `block_start,block_end,re,ce,rmse,r2,var_ratio` CSV rows (header included).
pub fn write_validation_csv<W: std::io::Write>(mut w: W, blocks: &[BlockSkill]) -> std::io::Result<()> {
    writeln!(w, "block_start,block_end,re,ce,rmse,r2,var_ratio")?;
    for b in blocks {
        let r = &b.report;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            b.block.0, b.block.1, r.re, r.ce, r.rmse, r.r2, r.var_ratio
        )?;
    }
    Ok(())
}
