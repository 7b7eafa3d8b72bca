//! Numeric column ingestion from delimited text.

use std::io::Read;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum InputError {
    #[error("cannot read {path}: {source}")]
    Open { path: String, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed rows (line: problem): {}", list_bad(.0))]
    Malformed(Vec<(u64, String)>),
}

fn list_bad(rows: &[(u64, String)]) -> String {
    let shown: Vec<String> = rows.iter().take(20).map(|(l, m)| format!("{l}: {m}")).collect();
    let more = rows.len().saturating_sub(20);
    if more > 0 {
        format!("{}; and {more} more", shown.join("; "))
    } else {
        shown.join("; ")
    }
}

/// Parses one number per record from `column` (0-based). Lines starting with
/// `#` and blank lines are skipped; every bad row is reported by line number.
pub fn read_column<R: Read>(reader: R, column: usize) -> Result<Vec<f64>, InputError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut bad = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        match record.get(column) {
            None => bad.push((line, format!("no column {column}"))),
            Some(field) => match field.parse::<f64>() {
                Ok(x) if x.is_finite() => values.push(x),
                Ok(_) => bad.push((line, format!("non-finite value {field:?}"))),
                Err(_) => bad.push((line, format!("not a number: {field:?}"))),
            },
        }
    }
    if bad.is_empty() {
        Ok(values)
    } else {
        Err(InputError::Malformed(bad))
    }
}

pub fn read_column_file(path: &Path, column: usize) -> Result<Vec<f64>, InputError> {
    let file = std::fs::File::open(path)
        .map_err(|source| InputError::Open { path: path.display().to_string(), source })?;
    read_column(std::io::BufReader::new(file), column)
}

/// Streams numbers from `column` one record at a time, for monitoring input
/// of unbounded length. Items carry the source line number.
pub struct ColumnStream<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    column: usize,
}

impl<R: Read> ColumnStream<R> {
    pub fn new(reader: R, column: usize) -> Self {
        let rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        Self { records: rdr.into_records(), column }
    }
}

impl<R: Read> Iterator for ColumnStream<R> {
    type Item = Result<(u64, f64), InputError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let record = match self.records.next()? {
                Ok(r) => r,
                Err(e) => return Some(Err(e.into())),
            };
            let line = record.position().map_or(0, |p| p.line());
            if record.iter().all(str::is_empty) {
                continue;
            }
            let parsed = record
                .get(self.column)
                .ok_or_else(|| format!("no column {}", self.column))
                .and_then(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| format!("not a finite number: {f:?}"))
                });
            return Some(match parsed {
                Ok(x) => Ok((line, x)),
                Err(msg) => Err(InputError::Malformed(vec![(line, msg)])),
            });
        }
    }
}
