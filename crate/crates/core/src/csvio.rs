//! CSV reading shared by the input formats.

use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use csv::{ReaderBuilder, StringRecord, Trim};

use crate::error::{Error, Result};

/// Opens `path` and checks its header row against `expected`.
pub(crate) fn open(path: &Path, expected: &str) -> Result<csv::Reader<File>> {
    open_any(path, &[expected]).map(|(reader, _)| reader)
}

/// Opens `path`, accepting any of `headers`; returns which one matched.
pub(crate) fn open_any(path: &Path, headers: &[&str]) -> Result<(csv::Reader<File>, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = ReaderBuilder::new().flexible(true).trim(Trim::All).from_reader(file);
    let found = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    let found = found.trim_start_matches('\u{feff}');
    match headers.iter().position(|h| *h == found) {
        Some(i) => Ok((reader, i)),
        None => Err(Error::Header {
            path: path.to_path_buf(),
            expected: headers[0].to_string(),
            found: found.to_string(),
        }),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            field: "row".into(),
            reason: format!("{other:?}"),
        },
    }
}

/// Calls `f` with the line number and fields of every non-blank data row.
pub(crate) fn for_each_row(
    path: &Path,
    reader: &mut csv::Reader<File>,
    mut f: impl FnMut(usize, &StringRecord) -> Result<()>,
) -> Result<()> {
    let mut record = StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => return Ok(()),
            Ok(true) => {
                if record.iter().all(str::is_empty) {
                    continue;
                }
                let line = record.position().map_or(0, |p| p.line() as usize);
                f(line, &record)?;
            }
            Err(e) => return Err(csv_error(path, e)),
        }
    }
}

/// The fields of `record`, which must number exactly `names.len()`.
pub(crate) fn fields<'r>(path: &Path, line: usize, record: &'r StringRecord, names: &[&str]) -> Result<Vec<&'r str>> {
    if record.len() != names.len() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            field: names.get(record.len()).unwrap_or(&"<extra>").to_string(),
            reason: format!("expected {} fields, found {}", names.len(), record.len()),
        });
    }
    Ok(record.iter().collect())
}

pub(crate) fn parse<T: FromStr>(path: &Path, line: usize, field: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line,
        field: field.to_string(),
        reason: format!("`{value}`: {e}"),
    })
}
