//! Annual time series on an explicit, contiguous year axis.
//!
//! Every series in the crate (proxy records, instrumental targets,
//! reconstructions) is a [`TimeSeries`]: a start year, one value per year and
//! an availability mask. Missing entries hold `NaN` internally but callers
//! should always go through the mask.

mod bands;
mod io;
mod loess;

pub use bands::{split_bands, BandPair, DEFAULT_SPLIT_PERIOD};
pub use io::{read_series_csv, write_series_csv};
pub use loess::loess_smooth;

use thiserror::Error;

/// Block-end residue used for decade anchoring: blocks end in years ≡ 6 (mod 10),
/// so that 1997–2006 is a block.
pub const DEFAULT_DECADE_ANCHOR: i32 = 2006;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("time series must contain at least one entry")]
    Empty,
    #[error("values ({values}) and mask ({mask}) differ in length")]
    LengthMismatch { values: usize, mask: usize },
    #[error("year ranges {a:?} and {b:?} do not overlap")]
    NoOverlap { a: (i32, i32), b: (i32, i32) },
    #[error("baseline {start}-{end} holds {available} usable values (need at least 2)")]
    DegenerateBaseline { start: i32, end: i32, available: usize },
    #[error("series {span:?} contains no complete decade block")]
    NoCompleteBlock { span: (i32, i32) },
    #[error("missing value at year {year}; interpolate before filtering")]
    MissingData { year: i32 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("line {line}: {message}")]
    Format { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SeriesError>;

/// Annual-resolution series with a per-year availability mask.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    start_year: i32,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl PartialEq for TimeSeries {
    fn eq(&self, other: &Self) -> bool {
        self.start_year == other.start_year
            && self.mask == other.mask
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.mask)
                .all(|((a, b), &m)| !m || a == b)
    }
}

impl TimeSeries {
    /// Builds a series from values and a mask (`true` = available).
    pub fn new(start_year: i32, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(SeriesError::LengthMismatch {
                values: values.len(),
                mask: mask.len(),
            });
        }
        if values.is_empty() {
            return Err(SeriesError::Empty);
        }
        let values = values
            .into_iter()
            .zip(&mask)
            .map(|(v, &m)| if m { v } else { f64::NAN })
            .collect();
        Ok(Self {
            start_year,
            values,
            mask,
        })
    }

    /// Series where every finite value is available and non-finite values are missing.
    pub fn from_values(start_year: i32, values: Vec<f64>) -> Result<Self> {
        let mask = values.iter().map(|v| v.is_finite()).collect();
        Self::new(start_year, values, mask)
    }

    pub fn from_options(start_year: i32, values: &[Option<f64>]) -> Result<Self> {
        let mask = values.iter().map(Option::is_some).collect();
        let values = values.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        Self::new(start_year, values, mask)
    }

    /// An all-missing series over `start..=end`.
    pub fn missing(start: i32, end: i32) -> Result<Self> {
        if end < start {
            return Err(SeriesError::Empty);
        }
        let n = (end - start + 1) as usize;
        Self::new(start, vec![f64::NAN; n], vec![false; n])
    }

    pub fn start_year(&self) -> i32 {
        self.start_year
    }

    pub fn end_year(&self) -> i32 {
        self.start_year + self.values.len() as i32 - 1
    }

    pub fn span(&self) -> (i32, i32) {
        (self.start_year, self.end_year())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false; kept for API symmetry with collections.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Raw values; missing entries are `NaN`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.values.len()).map(move |i| self.start_year + i as i32)
    }

    pub fn index_of(&self, year: i32) -> Option<usize> {
        if year < self.start_year || year > self.end_year() {
            None
        } else {
            Some((year - self.start_year) as usize)
        }
    }

    pub fn get(&self, year: i32) -> Option<f64> {
        self.index_of(year)
            .filter(|&i| self.mask[i])
            .map(|i| self.values[i])
    }

    pub fn n_present(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn has_missing(&self) -> bool {
        self.mask.iter().any(|&m| !m)
    }

    /// First and last available years.
    pub fn present_span(&self) -> Option<(i32, i32)> {
        let first = self.mask.iter().position(|&m| m)?;
        let last = self.mask.iter().rposition(|&m| m)?;
        Some((
            self.start_year + first as i32,
            self.start_year + last as i32,
        ))
    }

    /// `(year, value)` pairs for available entries.
    pub fn present(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.years()
            .zip(self.values.iter().zip(&self.mask))
            .filter(|(_, (_, &m))| m)
            .map(|(y, (&v, _))| (y, v))
    }

    /// The series on `start..=end`; years outside the current axis are missing.
    pub fn window(&self, start: i32, end: i32) -> Result<Self> {
        if end < start {
            return Err(SeriesError::InvalidParameter(format!(
                "window end {end} precedes start {start}"
            )));
        }
        let (values, mask) = (start..=end)
            .map(|y| match self.get(y) {
                Some(v) => (v, true),
                None => (f64::NAN, false),
            })
            .unzip();
        Self::new(start, values, mask)
    }

    /// Applies `f` to available values; the mask is unchanged.
    pub fn map_present(&self, f: impl Fn(f64) -> f64) -> Self {
        let values = self
            .values
            .iter()
            .zip(&self.mask)
            .map(|(&v, &m)| if m { f(v) } else { f64::NAN })
            .collect();
        Self {
            start_year: self.start_year,
            values,
            mask: self.mask.clone(),
        }
    }

    /// Copy with the given years masked out.
    pub fn with_masked(&self, start: i32, end: i32) -> Self {
        let mut out = self.clone();
        for y in start.max(self.start_year)..=end.min(self.end_year()) {
            let i = (y - self.start_year) as usize;
            out.mask[i] = false;
            out.values[i] = f64::NAN;
        }
        out
    }

    /// Mean and count of available values within `start..=end`.
    pub fn mean_over(&self, start: i32, end: i32) -> Option<(f64, usize)> {
        let (sum, n) = self
            .present()
            .filter(|&(y, _)| y >= start && y <= end)
            .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
        (n > 0).then(|| (sum / n as f64, n))
    }

    /// Linear interpolation across interior gaps. Leading and trailing gaps
    /// stay missing.
    pub fn interpolate_linear(&self) -> Self {
        let mut out = self.clone();
        let Some((first, last)) = self.present_span() else {
            return out;
        };
        let (first, last) = (
            (first - self.start_year) as usize,
            (last - self.start_year) as usize,
        );
        let mut prev = first;
        for i in first + 1..=last {
            if !self.mask[i] {
                continue;
            }
            if i > prev + 1 {
                let (v0, v1) = (self.values[prev], self.values[i]);
                let gap = (i - prev) as f64;
                for j in prev + 1..i {
                    let t = (j - prev) as f64 / gap;
                    out.values[j] = v0 + t * (v1 - v0);
                    out.mask[j] = true;
                }
            }
            prev = i;
        }
        out
    }

    /// Element-wise sum on a shared axis; missing if either side is missing.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.span() != other.span() {
            return Err(SeriesError::InvalidParameter(format!(
                "cannot add series on {:?} and {:?}",
                self.span(),
                other.span()
            )));
        }
        let mask: Vec<bool> = self.mask.iter().zip(&other.mask).map(|(a, b)| *a && *b).collect();
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Self::new(self.start_year, values, mask)
    }
}

/// Restricts both series to the intersection of their year ranges.
pub fn align(a: &TimeSeries, b: &TimeSeries) -> Result<(TimeSeries, TimeSeries)> {
    let start = a.start_year().max(b.start_year());
    let end = a.end_year().min(b.end_year());
    if end < start {
        return Err(SeriesError::NoOverlap {
            a: a.span(),
            b: b.span(),
        });
    }
    Ok((a.window(start, end)?, b.window(start, end)?))
}

/// Subtracts the mean over the base window (available entries only).
pub fn to_anomaly(s: &TimeSeries, base_start: i32, base_end: i32) -> Result<TimeSeries> {
    match s.mean_over(base_start, base_end) {
        Some((mean, n)) if n >= 2 => Ok(s.map_present(|v| v - mean)),
        other => Err(SeriesError::DegenerateBaseline {
            start: base_start,
            end: base_end,
            available: other.map_or(0, |(_, n)| n),
        }),
    }
}

/// Minimum number of available years for a decade block to be reported.
pub const MIN_YEARS_PER_BLOCK: usize = 5;

/// One value per 10-year block.
#[derive(Debug, Clone, PartialEq)]
pub struct DecadalSeries {
    first_block_start: i32,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl DecadalSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Inclusive year range of block `i`.
    pub fn block(&self, i: usize) -> (i32, i32) {
        let start = self.first_block_start + 10 * i as i32;
        (start, start + 9)
    }

    pub fn blocks(&self) -> impl Iterator<Item = ((i32, i32), Option<f64>)> + '_ {
        (0..self.len()).map(|i| (self.block(i), self.mask[i].then(|| self.values[i])))
    }

    /// Value of the block starting at `start`, if present.
    pub fn get_block(&self, start: i32) -> Option<f64> {
        let offset = start - self.first_block_start;
        if offset < 0 || offset % 10 != 0 {
            return None;
        }
        let i = (offset / 10) as usize;
        (i < self.len() && self.mask[i]).then(|| self.values[i])
    }

    /// Annual-axis series with each block value at its end year and every
    /// other year missing.
    pub fn to_block_ends(&self) -> TimeSeries {
        let mut values = vec![f64::NAN; self.len() * 10];
        for (i, (&v, &m)) in self.values.iter().zip(&self.mask).enumerate() {
            if m {
                values[10 * i + 9] = v;
            }
        }
        TimeSeries::from_values(self.first_block_start, values).expect("a decadal series holds at least one block")
    }

    /// Expands back onto the annual axis, repeating each block value.
    pub fn to_annual(&self) -> TimeSeries {
        let mut values = Vec::with_capacity(self.len() * 10);
        let mut mask = Vec::with_capacity(self.len() * 10);
        for (&v, &m) in self.values.iter().zip(&self.mask) {
            values.extend(std::iter::repeat_n(v, 10));
            mask.extend(std::iter::repeat_n(m, 10));
        }
        TimeSeries::new(self.first_block_start, values, mask)
            .expect("a decadal series holds at least one block")
    }
}

/// First start year ≥ `from` of a block whose end year is congruent to
/// `anchor` modulo 10.
pub fn first_block_start(from: i32, anchor: i32) -> i32 {
    let offset = (from - (anchor - 9)).rem_euclid(10);
    if offset == 0 {
        from
    } else {
        from + 10 - offset
    }
}

/// Averages complete 10-year blocks ending in years ≡ `decade_anchor` (mod 10).
/// Blocks with fewer than five available years are masked.
pub fn decadal_average(s: &TimeSeries, decade_anchor: i32) -> Result<DecadalSeries> {
    let first = first_block_start(s.start_year(), decade_anchor);
    let n_blocks = (s.end_year() - first + 1).div_euclid(10);
    if n_blocks <= 0 {
        return Err(SeriesError::NoCompleteBlock { span: s.span() });
    }
    let (values, mask) = (0..n_blocks)
        .map(|b| {
            let start = first + 10 * b;
            match s.mean_over(start, start + 9) {
                Some((mean, n)) if n >= MIN_YEARS_PER_BLOCK => (mean, true),
                _ => (f64::NAN, false),
            }
        })
        .unzip();
    Ok(DecadalSeries {
        first_block_start: first,
        values,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(start: i32, end: i32) -> TimeSeries {
        TimeSeries::from_values(start, (start..=end).map(|y| y as f64).collect()).unwrap()
    }

    #[test]
    fn align_restricts_to_intersection() {
        let a = ramp(1000, 1980);
        let b = ramp(1856, 2006);
        let (a2, b2) = align(&a, &b).unwrap();
        assert_eq!(a2.span(), (1856, 1980));
        assert_eq!(b2.span(), (1856, 1980));
        assert_eq!(a2.get(1900), Some(1900.0));
    }

    #[test]
    fn align_identity_and_disjoint() {
        let a = ramp(1900, 1950);
        let (x, y) = align(&a, &a).unwrap();
        assert_eq!(x, a);
        assert_eq!(y, a);
        let err = align(&ramp(1000, 1500), &ramp(1600, 1700)).unwrap_err();
        assert!(matches!(err, SeriesError::NoOverlap { .. }));
    }

    #[test]
    fn anomaly_examples() {
        let c = TimeSeries::from_values(1900, vec![3.5; 20]).unwrap();
        assert!(to_anomaly(&c, 1900, 1919).unwrap().values().iter().all(|&v| v == 0.0));
        let s = TimeSeries::from_values(2000, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(to_anomaly(&s, 2000, 2002).unwrap().values(), &[-1.0, 0.0, 1.0]);
        let sparse = TimeSeries::from_options(2000, &[Some(1.0), None, None]).unwrap();
        assert!(matches!(
            to_anomaly(&sparse, 2000, 2002),
            Err(SeriesError::DegenerateBaseline { available: 1, .. })
        ));
    }

    #[test]
    fn decade_block_1997_2006() {
        let s = TimeSeries::from_values(1990, (1..=17).map(|v| v as f64).collect()).unwrap();
        let d = decadal_average(&s, DEFAULT_DECADE_ANCHOR).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.block(0), (1997, 2006));
        assert_eq!(d.values()[0], 12.5);
        let exact = TimeSeries::from_values(1997, (1..=10).map(|v| v as f64).collect()).unwrap();
        let d = decadal_average(&exact, DEFAULT_DECADE_ANCHOR).unwrap();
        assert_eq!(d.get_block(1997), Some(5.5));
    }

    #[test]
    fn sparse_block_is_masked() {
        let vals: Vec<Option<f64>> = (0..10).map(|i| (i < 4).then_some(1.0)).collect();
        let s = TimeSeries::from_options(1997, &vals).unwrap();
        let d = decadal_average(&s, DEFAULT_DECADE_ANCHOR).unwrap();
        assert_eq!(d.mask(), &[false]);
        assert!(matches!(
            decadal_average(&ramp(1998, 2006), DEFAULT_DECADE_ANCHOR),
            Err(SeriesError::NoCompleteBlock { .. })
        ));
    }

    #[test]
    fn interpolation_fills_interior_only() {
        let s = TimeSeries::from_options(0, &[None, Some(0.0), None, None, Some(3.0), None]).unwrap();
        let f = s.interpolate_linear();
        assert_eq!(f.mask(), &[false, true, true, true, true, false]);
        assert_eq!(f.get(2), Some(1.0));
        assert_eq!(f.get(3), Some(2.0));
    }

    #[test]
    fn block_start_arithmetic() {
        assert_eq!(first_block_start(1997, 2006), 1997);
        assert_eq!(first_block_start(1998, 2006), 2007);
        assert_eq!(first_block_start(1000, 2006), 1007);
        assert_eq!(first_block_start(-3, 6), -3);
    }
}
