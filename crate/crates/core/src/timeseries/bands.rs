use super::{Result, SeriesError, TimeSeries};

/// Default split between the low- and high-frequency calibration bands, in years.
pub const DEFAULT_SPLIT_PERIOD: f64 = 20.0;

/// Complementary low/high frequency components of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPair {
    pub low: TimeSeries,
    pub high: TimeSeries,
}

/// Second-order Butterworth low-pass section (transposed direct form II).
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    /// Low-pass at `cutoff` cycles per sample via the bilinear transform.
    fn butterworth_lowpass(cutoff: f64) -> Self {
        let k = (std::f64::consts::PI * cutoff).tan();
        let k2 = k * k;
        let norm = 1.0 / (1.0 + std::f64::consts::SQRT_2 * k + k2);
        let b0 = k2 * norm;
        Self {
            b: [b0, 2.0 * b0, b0],
            a: [
                2.0 * (k2 - 1.0) * norm,
                (1.0 - std::f64::consts::SQRT_2 * k + k2) * norm,
            ],
        }
    }

    /// Filters `x` in place, starting from the steady state for a constant
    /// input equal to `x[0]`.
    fn run(&self, x: &mut [f64]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let x0 = x[0];
        let mut z2 = (b2 - a2) * x0;
        let mut z1 = (b1 - a1) * x0 + z2;
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + z1;
            z1 = b1 * input - a1 * y + z2;
            z2 = b2 * input - a2 * y;
            *v = y;
        }
    }
}

/// Zero-phase (forward-backward) low-pass with odd reflective padding.
fn lowpass_zero_phase(x: &[f64], period: f64) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return x.to_vec();
    }
    let pad = ((3.0 * period).ceil() as usize).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let filter = Biquad::butterworth_lowpass(1.0 / period);
    filter.run(&mut ext);
    ext.reverse();
    filter.run(&mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Splits a gap-free series at `split_period_years`. The high band is the
/// residual, so `low + high` reproduces the input.
pub fn split_bands(s: &TimeSeries, split_period_years: f64) -> Result<BandPair> {
    if !(split_period_years > 2.0) || !split_period_years.is_finite() {
        return Err(SeriesError::InvalidParameter(format!(
            "split period must exceed 2 years, got {split_period_years}"
        )));
    }
    if let Some(i) = s.mask().iter().position(|&m| !m) {
        return Err(SeriesError::MissingData {
            year: s.start_year() + i as i32,
        });
    }
    let low = lowpass_zero_phase(s.values(), split_period_years);
    let high: Vec<f64> = s.values().iter().zip(&low).map(|(x, l)| x - l).collect();
    Ok(BandPair {
        low: TimeSeries::from_values(s.start_year(), low)?,
        high: TimeSeries::from_values(s.start_year(), high)?,
    })
}
