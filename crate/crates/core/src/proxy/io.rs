use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{ProxyError, ProxyKind, ProxyNetwork, ProxyRecord, Rejection, Resolution, Result};
use crate::timeseries::TimeSeries;

const METADATA_HEADER: [&str; 5] = ["id", "kind", "core_count", "flags", "resolution"];

struct MetaRow {
    id: String,
    kind: ProxyKind,
    core_count: Option<u32>,
    flags: BTreeSet<String>,
    resolution: Resolution,
}

/// A loaded network plus the records that were turned away.
#[derive(Debug, Clone)]
pub struct LoadedNetwork {
    pub network: ProxyNetwork,
    pub rejections: Vec<Rejection>,
}

/// Loads a frozen network from a metadata CSV and a wide values CSV.
/// Records that do not reach back to `frozen_at` are rejected, not fatal.
pub fn load_network(metadata: &Path, values: &Path, frozen_at: i32) -> Result<LoadedNetwork> {
    load_network_from_readers(
        File::open(metadata)?,
        &metadata.display().to_string(),
        File::open(values)?,
        &values.display().to_string(),
        frozen_at,
    )
}

pub fn load_network_from_readers<M: Read, V: Read>(
    metadata: M,
    metadata_name: &str,
    values: V,
    values_name: &str,
    frozen_at: i32,
) -> Result<LoadedNetwork> {
    let meta = read_metadata(metadata, metadata_name)?;
    let mut columns = read_values(values, values_name)?;

    let mut records = Vec::with_capacity(meta.len());
    let mut rejections = Vec::new();
    for row in meta {
        let series = columns.remove(&row.id).ok_or_else(|| ProxyError::Format {
            file: values_name.to_string(),
            line: 1,
            message: format!("no value column for record `{}`", row.id),
        })?;
        let record = ProxyRecord {
            id: row.id,
            series,
            kind: row.kind,
            core_count: row.core_count,
            flags: row.flags,
            resolution: row.resolution,
        };
        record.validate()?;
        if record.series.n_present() == 0 {
            rejections.push(Rejection {
                id: record.id,
                reason: "no_data".into(),
            });
        } else if !record.covers(frozen_at) {
            let first = record.series.present_span().map_or(0, |s| s.0);
            rejections.push(Rejection {
                id: record.id,
                reason: format!("starts_after_frozen_at ({first} > {frozen_at})"),
            });
        } else {
            records.push(record);
        }
    }
    if let Some(extra) = columns.keys().min() {
        return Err(ProxyError::Format {
            file: values_name.to_string(),
            line: 1,
            message: format!("value column `{extra}` has no metadata row"),
        });
    }
    Ok(LoadedNetwork {
        network: ProxyNetwork::new(records, frozen_at)?,
        rejections,
    })
}

fn format_error(file: &str, e: csv::Error) -> ProxyError {
    ProxyError::Format {
        file: file.to_string(),
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn read_metadata<R: Read>(r: R, name: &str) -> Result<Vec<MetaRow>> {
    let mut rdr = reader(r);
    let headers = rdr.headers().map_err(|e| format_error(name, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != METADATA_HEADER {
        return Err(ProxyError::Format {
            file: name.to_string(),
            line: 1,
            message: format!("expected header `{}`", METADATA_HEADER.join(",")),
        });
    }
    let mut rows: Vec<MetaRow> = Vec::new();
    let mut seen = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| format_error(name, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |message: String| ProxyError::Format {
            file: name.to_string(),
            line,
            message,
        };
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(err("empty record id".into()));
        }
        if seen.insert(id.clone(), line).is_some() {
            return Err(ProxyError::DuplicateId(id));
        }
        let kind = rec[1].parse::<ProxyKind>().map_err(err)?;
        let core_count = match &rec[2] {
            "" => None,
            s => Some(s.parse::<u32>().map_err(|_| err(format!("invalid core_count `{s}`")))?),
        };
        let flags = rec[3]
            .split(';')
            .map(str::trim)
            .filter(|f| !f.is_empty())
            .map(str::to_string)
            .collect();
        let resolution = rec[4].parse::<Resolution>().map_err(err)?;
        rows.push(MetaRow {
            id,
            kind,
            core_count,
            flags,
            resolution,
        });
    }
    if rows.is_empty() {
        return Err(ProxyError::Format {
            file: name.to_string(),
            line: 1,
            message: "metadata holds no records".into(),
        });
    }
    Ok(rows)
}

pub(crate) fn read_values<R: Read>(r: R, name: &str) -> Result<HashMap<String, TimeSeries>> {
    let mut rdr = reader(r);
    let headers = rdr.headers().map_err(|e| format_error(name, e))?.clone();
    if headers.is_empty() || &headers[0] != "year" {
        return Err(ProxyError::Format {
            file: name.to_string(),
            line: 1,
            message: "expected header `year,<id>,...`".into(),
        });
    }
    let ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut unique = BTreeSet::new();
    for id in &ids {
        if !unique.insert(id.as_str()) {
            return Err(ProxyError::DuplicateId(id.clone()));
        }
    }

    let mut years: Vec<i32> = Vec::new();
    let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); ids.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| format_error(name, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |message: String| ProxyError::Format {
            file: name.to_string(),
            line,
            message,
        };
        let year: i32 = rec[0].parse().map_err(|_| err(format!("invalid year `{}`", &rec[0])))?;
        if let Some(&prev) = years.last() {
            if year != prev + 1 {
                return Err(err(format!("year {year} does not follow {prev}")));
            }
        }
        years.push(year);
        for (j, col) in cols.iter_mut().enumerate() {
            let field = &rec[j + 1];
            col.push(if field.is_empty() {
                None
            } else {
                Some(
                    field
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| err(format!("invalid value `{field}` for `{}`", ids[j])))?,
                )
            });
        }
    }
    let Some(&start) = years.first() else {
        return Err(ProxyError::Format {
            file: name.to_string(),
            line: 1,
            message: "values table holds no rows".into(),
        });
    };
    Ok(ids
        .into_iter()
        .zip(cols)
        .map(|(id, col)| {
            let s = TimeSeries::from_options(start, &col).expect("non-empty column");
            (id, s)
        })
        .collect())
}

/// Writes the metadata and wide values tables for a network. The values
/// table spans the union of the record axes.
pub fn write_network<M: Write, V: Write>(
    net: &ProxyNetwork,
    mut metadata: M,
    mut values: V,
) -> std::io::Result<()> {
    writeln!(metadata, "{}", METADATA_HEADER.join(","))?;
    for r in net.records() {
        let flags: Vec<&str> = r.flags.iter().map(String::as_str).collect();
        writeln!(
            metadata,
            "{},{},{},{},{}",
            r.id,
            r.kind,
            r.core_count.map(|c| c.to_string()).unwrap_or_default(),
            flags.join(";"),
            r.resolution.as_str()
        )?;
    }

    write!(values, "year")?;
    for r in net.records() {
        write!(values, ",{}", r.id)?;
    }
    writeln!(values)?;
    let start = net.records().iter().map(|r| r.series.start_year()).min();
    let end = net.records().iter().map(|r| r.series.end_year()).max();
    if let (Some(start), Some(end)) = (start, end) {
        for year in start..=end {
            write!(values, "{year}")?;
            for r in net.records() {
                match r.series.get(year) {
                    Some(v) => write!(values, ",{v}")?,
                    None => write!(values, ",")?,
                }
            }
            writeln!(values)?;
        }
    }
    Ok(())
}

/// `id,reason` lines, one per rejected record.
pub fn write_rejections<W: Write>(mut w: W, rejections: &[Rejection]) -> std::io::Result<()> {
    writeln!(w, "id,reason")?;
    for r in rejections {
        writeln!(w, "{},\"{}\"", r.id, r.reason.replace('"', "'"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const META: &str = "id,kind,core_count,flags,resolution\n\
                        a,tree_ring,12,,annual\n\
                        b,lake_sediment,,tiljander;other,annual\n\
                        late,coral,,,annual\n";
    const VALUES: &str = "year,a,b,late\n1000,1.0,2.0,\n1001,1.5,,\n1002,2.0,3.0,0.5\n";

    fn load(meta: &str, values: &str) -> Result<LoadedNetwork> {
        load_network_from_readers(meta.as_bytes(), "meta.csv", values.as_bytes(), "values.csv", 1000)
    }

    #[test]
    fn loads_and_rejects_late_record() {
        let loaded = load(META, VALUES).unwrap();
        assert_eq!(loaded.network.len(), 2);
        assert_eq!(loaded.rejections.len(), 1);
        assert_eq!(loaded.rejections[0].id, "late");
        let b = &loaded.network.records()[1];
        assert!(b.flags.contains("tiljander") && b.flags.contains("other"));
        assert_eq!(b.series.get(1001), None);
        assert_eq!(loaded.network.records()[0].core_count, Some(12));
    }

    #[test]
    fn empty_and_malformed_inputs() {
        assert!(matches!(load("", VALUES), Err(ProxyError::Format { .. })));
        assert!(matches!(
            load("id,kind,core_count,flags,resolution\n", VALUES),
            Err(ProxyError::Format { .. })
        ));
        let bad_value = "year,a,b,late\n1000,1.0,x,\n";
        match load(META, bad_value) {
            Err(ProxyError::Format { line, file, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(file, "values.csv");
            }
            other => panic!("unexpected {other:?}"),
        }
        let dup = "id,kind,core_count,flags,resolution\na,coral,,,annual\na,coral,,,annual\n";
        assert!(matches!(load(dup, VALUES), Err(ProxyError::DuplicateId(_))));
    }

    #[test]
    fn write_then_load_round_trip() {
        let loaded = load(META, VALUES).unwrap();
        let (mut m, mut v) = (Vec::new(), Vec::new());
        write_network(&loaded.network, &mut m, &mut v).unwrap();
        let again = load_network_from_readers(m.as_slice(), "m", v.as_slice(), "v", 1000).unwrap();
        assert_eq!(again.network, loaded.network);
        assert!(again.rejections.is_empty());
    }
}
