//! CSV files for series and densities. Numbers use the shortest decimal
//! form that parses back to the same `f64`; absent values are empty.

use std::path::Path;

use entrydyn::kinetic::DensityGrid;
use entrydyn::{ObservableSeries, Record};

use crate::error::{CliError, CliResult};

pub fn format_f64(x: f64) -> String {
    format!("{x:?}")
}

fn optional(x: Option<f64>) -> String {
    x.map(format_f64).unwrap_or_default()
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(CliError::io(path))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Header `t,a,b,m_frac`, plus `stderr_a,stderr_b` for ensembles.
pub fn write_series(path: &Path, series: &ObservableSeries) -> CliResult<()> {
    let with_stderr = series.has_stderr();
    let mut header = vec!["t", "a", "b", "m_frac"];
    if with_stderr {
        header.extend(["stderr_a", "stderr_b"]);
    }
    let rows = series.records.iter().map(|r| {
        let mut row = vec![format_f64(r.t), format_f64(r.a), format_f64(r.b), optional(r.m_frac)];
        if with_stderr {
            row.extend([optional(r.stderr_a), optional(r.stderr_b)]);
        }
        row
    });
    write_rows(path, &header, rows)
}

pub fn read_series(path: &Path) -> CliResult<ObservableSeries> {
    let bad = |msg: String| CliError::Runtime(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let (Some(ti), Some(ai), Some(bi)) = (column("t"), column("a"), column("b")) else {
        return Err(bad("header must contain t, a and b".into()));
    };
    let (mi, sai, sbi) = (column("m_frac"), column("stderr_a"), column("stderr_b"));

    let mut series = ObservableSeries::new();
    for (line, row) in r.records().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let field = |i: usize| -> CliResult<Option<f64>> {
            match row.get(i).unwrap_or("") {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| bad(format!("row {}: cannot parse {s:?}", line + 2))),
            }
        };
        let required = |i: usize| -> CliResult<f64> {
            field(i)?.ok_or_else(|| bad(format!("row {}: missing value in column {}", line + 2, &headers[i])))
        };
        let maybe = |i: Option<usize>| -> CliResult<Option<f64>> { i.map(field).transpose().map(Option::flatten) };
        let record = Record {
            m_frac: maybe(mi)?,
            stderr_a: maybe(sai)?,
            stderr_b: maybe(sbi)?,
            ..Record::new(required(ti)?, required(ai)?, required(bi)?)
        };
        if let Some(prev) = series.records.last() {
            if record.t <= prev.t {
                return Err(bad(format!("row {}: t is not increasing", line + 2)));
            }
        }
        series.push(record);
    }
    if series.records.is_empty() {
        return Err(bad("no records".into()));
    }
    Ok(series)
}

/// Header `q,f`, one row per cell center.
pub fn write_density(path: &Path, density: &DensityGrid) -> CliResult<()> {
    write_rows(path, &["q", "f"], density.iter().map(|(q, f)| vec![format_f64(q), format_f64(f)]))
}

pub fn read_density(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.records()
        .map(|row| {
            let row = row.map_err(|e| csv_error(path, e))?;
            let parse = |i: usize| {
                row.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| CliError::Runtime(format!("{}: malformed row {row:?}", path.display())))
            };
            Ok((parse(0)?, parse(1)?))
        })
        .collect()
}

/// File name for a density captured at time `t`.
pub fn density_file_name(t: f64) -> String {
    format!("density_t{}.csv", format_f64(t))
}
