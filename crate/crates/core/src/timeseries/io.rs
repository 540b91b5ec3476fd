use std::io::{Read, Write};

use super::{Result, SeriesError, TimeSeries};

/// Reads a `year,value` CSV. Empty value fields are missing; years must be
/// strictly ascending and skipped years are treated as missing.
pub fn read_series_csv<R: Read>(reader: R) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.len() != 2 || &headers[0] != "year" || &headers[1] != "value" {
        return Err(SeriesError::Format {
            line: 1,
            message: format!("expected header `year,value`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut rows: Vec<(i32, Option<f64>)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let year: i32 = record[0].parse().map_err(|_| SeriesError::Format {
            line,
            message: format!("invalid year `{}`", &record[0]),
        })?;
        let value = match &record[1] {
            "" => None,
            text => Some(text.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                SeriesError::Format {
                    line,
                    message: format!("invalid value `{text}`"),
                }
            })?),
        };
        if let Some(&(prev, _)) = rows.last() {
            if year <= prev {
                return Err(SeriesError::Format {
                    line,
                    message: format!("year {year} does not follow {prev}"),
                });
            }
        }
        rows.push((year, value));
    }
    let (first, last) = match (rows.first(), rows.last()) {
        (Some(f), Some(l)) => (f.0, l.0),
        _ => {
            return Err(SeriesError::Format {
                line: 1,
                message: "no data rows".into(),
            })
        }
    };
    let mut values = vec![None; (last - first + 1) as usize];
    for (year, value) in rows {
        values[(year - first) as usize] = value;
    }
    TimeSeries::from_options(first, &values)
}

/// Writes a `year,value` CSV covering the whole axis.
pub fn write_series_csv<W: Write>(mut writer: W, s: &TimeSeries) -> std::io::Result<()> {
    writeln!(writer, "year,value")?;
    for (year, (&v, &m)) in s.years().zip(s.values().iter().zip(s.mask())) {
        if m {
            writeln!(writer, "{year},{v}")?;
        } else {
            writeln!(writer, "{year},")?;
        }
    }
    Ok(())
}

fn csv_error(e: csv::Error) -> SeriesError {
    let line = e.position().map_or(0, |p| p.line());
    SeriesError::Format {
        line,
        message: e.to_string(),
    }
}
