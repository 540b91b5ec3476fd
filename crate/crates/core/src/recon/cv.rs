//! Leave-one-decade-out cross-validation over the calibration window.

use std::str::FromStr;

use super::{FitError, Result};

/// How a cross-validation curve picks its candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CvRule {
    /// Lowest CV error; exact ties go to the simpler candidate.
    MinError,
    /// Simplest candidate whose CV error is within one standard error of
    /// the minimum.
    #[default]
    OneStandardError,
}

impl CvRule {
    pub fn as_str(self) -> &'static str {
        match self {
            CvRule::MinError => "cv_min",
            CvRule::OneStandardError => "cv_1se",
        }
    }
}

impl FromStr for CvRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cv_min" => Ok(CvRule::MinError),
            "cv_1se" => Ok(CvRule::OneStandardError),
            _ => Err(format!("unknown CV rule `{s}`")),
        }
    }
}

/// Groups calibration years into contiguous decades counted from
/// `calibration_start`. Returns indices into `years`.
pub(crate) fn decade_blocks(years: &[i32], calibration_start: i32) -> Result<Vec<Vec<usize>>> {
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut current = None;
    for (i, &y) in years.iter().enumerate() {
        let b = (y - calibration_start).div_euclid(10);
        if current != Some(b) {
            blocks.push(Vec::new());
            current = Some(b);
        }
        blocks.last_mut().expect("pushed above").push(i);
    }
    if blocks.len() < 3 {
        return Err(FitError::InsufficientCalibration {
            needed: 3,
            found: blocks.len(),
            unit: "decade blocks",
        });
    }
    Ok(blocks)
}

/// Mean squared prediction error per block for one candidate.
#[derive(Debug, Clone)]
pub(crate) struct BlockErrors {
    pub sse: Vec<f64>,
    pub n: Vec<usize>,
}

impl BlockErrors {
    pub fn mse(&self) -> f64 {
        self.sse.iter().sum::<f64>() / self.n.iter().sum::<usize>() as f64
    }

    /// Standard error of the CV estimate from the spread of block MSEs.
    pub fn se(&self) -> f64 {
        let per_block: Vec<f64> = self.sse.iter().zip(&self.n).map(|(s, &n)| s / n as f64).collect();
        let b = per_block.len() as f64;
        let mean = per_block.iter().sum::<f64>() / b;
        let var = per_block.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1.0);
        (var / b).sqrt()
    }
}

/// Picks the index of the chosen candidate. Candidates are ordered from
/// simplest to most complex. `scale` is the target variance, used to turn
/// round-off-level differences into ties.
pub(crate) fn choose(curve: &[BlockErrors], rule: CvRule, scale: f64) -> usize {
    let mses: Vec<f64> = curve.iter().map(BlockErrors::mse).collect();
    let (best, best_mse) = mses
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &m)| if m < acc.1 { (i, m) } else { acc });
    let tie = 1e-9 * best_mse + 1e-16 * scale;
    let threshold = match rule {
        CvRule::MinError => best_mse + tie,
        CvRule::OneStandardError => best_mse + curve[best].se() + tie,
    };
    mses.iter().position(|&m| m <= threshold).unwrap_or(best)
}
