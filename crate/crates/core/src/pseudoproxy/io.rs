use std::io::{Read, Write};

use super::{PseudoproxyError, Result, Site, TruthField};
use crate::matrix::YearMatrix;
use crate::proxy::io::read_values;
use crate::proxy::ProxyError;

const SITE_HEADER: [&str; 3] = ["site_id", "lat", "lon"];

/// Reads a gridded field from a `site_id,lat,lon` metadata table and a wide
/// `year,<site...>` values table.
pub fn read_field<M: Read, V: Read>(metadata: M, metadata_name: &str, values: V, values_name: &str) -> Result<TruthField> {
    let format = |line: u64, message: String| {
        PseudoproxyError::Input(ProxyError::Format {
            file: metadata_name.to_string(),
            line,
            message,
        })
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(metadata);
    let headers = rdr
        .headers()
        .map_err(|e| format(e.position().map_or(0, |p| p.line()), e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != SITE_HEADER {
        return Err(format(1, format!("expected header `{}`", SITE_HEADER.join(","))));
    }
    let mut sites = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| format(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let coord = |i: usize| {
            rec[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format(line, format!("invalid coordinate `{}`", &rec[i])))
        };
        sites.push(Site {
            id: rec[0].to_string(),
            lat: coord(1)?,
            lon: coord(2)?,
        });
    }
    if sites.is_empty() {
        return Err(format(1, "metadata holds no sites".into()));
    }

    let mut columns = read_values(values, values_name)?;
    let mut series = Vec::with_capacity(sites.len());
    for s in &sites {
        let col = columns.remove(&s.id).ok_or_else(|| {
            PseudoproxyError::Input(ProxyError::Format {
                file: values_name.to_string(),
                line: 1,
                message: format!("no value column for site `{}`", s.id),
            })
        })?;
        series.push((s.id.clone(), col));
    }
    if let Some(extra) = columns.keys().min() {
        return Err(PseudoproxyError::Input(ProxyError::Format {
            file: values_name.to_string(),
            line: 1,
            message: format!("value column `{extra}` has no site row"),
        }));
    }
    let (start, end) = (series[0].1.start_year(), series[0].1.end_year());
    let matrix = YearMatrix::from_series(start, end, series.iter().map(|(id, s)| (id.clone(), s)));
    TruthField::new(sites, matrix)
}

/// Writes the two tables read by [`read_field`].
pub fn write_field<M: Write, V: Write>(field: &TruthField, mut metadata: M, mut values: V) -> std::io::Result<()> {
    writeln!(metadata, "{}", SITE_HEADER.join(","))?;
    for s in field.sites() {
        writeln!(metadata, "{},{},{}", s.id, s.lat, s.lon)?;
    }
    write!(values, "year")?;
    for s in field.sites() {
        write!(values, ",{}", s.id)?;
    }
    writeln!(values)?;
    let data = field.series().data();
    for i in 0..data.nrows() {
        write!(values, "{}", field.series().start_year() + i as i32)?;
        for j in 0..data.ncols() {
            write!(values, ",{}", data[(i, j)])?;
        }
        writeln!(values)?;
    }
    Ok(())
}
