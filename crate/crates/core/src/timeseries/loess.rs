use super::{Result, SeriesError, TimeSeries};

/// Smallest neighbourhood that still supports a local line.
const MIN_LOCAL_POINTS: usize = 4;

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u * u;
        t * t * t
    }
}

/// Degree-1 loess with tricube weights.
///
/// The neighbourhood of each year holds the `floor(span * n)` nearest
/// available years, `n` being the number of available entries. Years whose
/// neighbourhood has fewer than four points come back missing, as do years
/// that were missing on input.
pub fn loess_smooth(s: &TimeSeries, span: f64) -> Result<TimeSeries> {
    if !(span > 0.0 && span <= 1.0) {
        return Err(SeriesError::InvalidParameter(format!(
            "loess span must lie in (0, 1], got {span}"
        )));
    }
    let points: Vec<(f64, f64)> = s.present().map(|(y, v)| (y as f64, v)).collect();
    let q = ((span * points.len() as f64).floor() as usize).min(points.len());

    let mut values = vec![f64::NAN; s.len()];
    let mut mask = vec![false; s.len()];
    if q < MIN_LOCAL_POINTS {
        return TimeSeries::new(s.start_year(), values, mask);
    }

    // Sliding window of q consecutive points (in sorted order) nearest to x0.
    let mut lo = 0usize;
    for &(x0, _) in &points {
        while lo + q < points.len() && x0 - points[lo].0 > points[lo + q].0 - x0 {
            lo += 1;
        }
        let window = &points[lo..lo + q];
        let h = (x0 - window[0].0).max(window[q - 1].0 - x0);
        let (mut sw, mut swx, mut swy, mut swxx, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(x, y) in window {
            let dx = x - x0;
            let w = tricube(dx.abs() / h);
            sw += w;
            swx += w * dx;
            swy += w * y;
            swxx += w * dx * dx;
            swxy += w * dx * y;
        }
        // Local line in centred coordinates; its value at x0 is the intercept.
        let det = sw * swxx - swx * swx;
        let fit = if det.abs() > 1e-12 * sw * swxx.max(f64::MIN_POSITIVE) {
            (swxx * swy - swx * swxy) / det
        } else {
            swy / sw
        };
        let i = (x0 as i32 - s.start_year()) as usize;
        values[i] = fit;
        mask[i] = true;
    }
    TimeSeries::new(s.start_year(), values, mask)
}
