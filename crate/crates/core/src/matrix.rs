//! Year-indexed matrices: rows are consecutive years, columns are named
//! variables (proxy records, principal-component scores, the target).
//! Missing entries are stored as `NaN`.

use nalgebra::DMatrix;

use crate::timeseries::TimeSeries;

#[derive(Debug, Clone, PartialEq)]
pub struct YearMatrix {
    start_year: i32,
    columns: Vec<String>,
    data: DMatrix<f64>,
}

impl YearMatrix {
    pub fn new(start_year: i32, columns: Vec<String>, data: DMatrix<f64>) -> Self {
        assert_eq!(columns.len(), data.ncols(), "column names must match data width");
        Self {
            start_year,
            columns,
            data,
        }
    }

    /// Stacks series as columns on `start..=end`.
    pub fn from_series<'a>(
        start: i32,
        end: i32,
        series: impl IntoIterator<Item = (String, &'a TimeSeries)>,
    ) -> Self {
        let n_years = (end - start + 1).max(0) as usize;
        let (columns, cols): (Vec<String>, Vec<Vec<f64>>) = series
            .into_iter()
            .map(|(name, s)| {
                let col = (start..=end).map(|y| s.get(y).unwrap_or(f64::NAN)).collect();
                (name, col)
            })
            .unzip();
        let data = DMatrix::from_fn(n_years, cols.len(), |i, j| cols[j][i]);
        Self::new(start, columns, data)
    }

    pub fn start_year(&self) -> i32 {
        self.start_year
    }

    pub fn end_year(&self) -> i32 {
        self.start_year + self.data.nrows() as i32 - 1
    }

    pub fn n_years(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn row_of(&self, year: i32) -> Option<usize> {
        (year >= self.start_year && year <= self.end_year()).then(|| (year - self.start_year) as usize)
    }

    pub fn get(&self, year: i32, col: usize) -> Option<f64> {
        let v = self.data[(self.row_of(year)?, col)];
        v.is_finite().then_some(v)
    }

    pub fn column_series(&self, col: usize) -> TimeSeries {
        TimeSeries::from_values(self.start_year, self.data.column(col).iter().copied().collect())
            .expect("matrix has at least one row")
    }

    /// Rows `start..=end`; years outside the current axis are missing.
    pub fn window(&self, start: i32, end: i32) -> Self {
        let n = (end - start + 1).max(0) as usize;
        let data = DMatrix::from_fn(n, self.n_cols(), |i, j| {
            self.get(start + i as i32, j).unwrap_or(f64::NAN)
        });
        Self::new(start, self.columns.clone(), data)
    }

    pub fn select_columns(&self, idx: &[usize]) -> Self {
        let data = self.data.select_columns(idx);
        let columns = idx.iter().map(|&j| self.columns[j].clone()).collect();
        Self::new(self.start_year, columns, data)
    }

    /// Adds a column at the right edge.
    pub fn with_column(&self, name: impl Into<String>, s: &TimeSeries) -> Self {
        let mut columns = self.columns.clone();
        columns.push(name.into());
        let n = self.n_cols();
        let data = DMatrix::from_fn(self.n_years(), n + 1, |i, j| {
            if j < n {
                self.data[(i, j)]
            } else {
                s.get(self.start_year + i as i32).unwrap_or(f64::NAN)
            }
        });
        Self::new(self.start_year, columns, data)
    }

    pub fn is_complete(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_and_columns() {
        let a = TimeSeries::from_values(1900, vec![1.0, 2.0, 3.0]).unwrap();
        let b = TimeSeries::from_values(1901, vec![5.0, 6.0]).unwrap();
        let m = YearMatrix::from_series(1900, 1902, [("a".to_string(), &a), ("b".to_string(), &b)]);
        assert_eq!(m.get(1900, 1), None);
        assert_eq!(m.get(1902, 1), Some(6.0));
        let w = m.window(1901, 1903);
        assert_eq!(w.n_years(), 3);
        assert_eq!(w.get(1903, 0), None);
        assert_eq!(m.select_columns(&[1]).columns(), &["b".to_string()]);
        assert_eq!(m.column_series(0), a);
    }
}
