//! Numeric CSV helpers shared by ensembles, families and reports.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits (exact round trip for f64).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Writes a header row followed by numeric rows.
pub fn write_numeric_csv<W: Write, S: AsRef<str>>(
    out: W,
    header: &[S],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(header.iter().map(|h| h.as_ref())).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|x| fmt_f64(*x))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV whose header row and body are all numeric.
pub fn read_numeric_csv<R: Read>(input: R) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let parse = |s: &str| -> Result<f64> {
        s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("bad number {s:?}: {e}")))
    };
    let header = r.headers().map_err(csv_err)?.iter().map(parse).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let row = rec.iter().map(parse).collect::<Result<Vec<_>>>()?;
        if row.len() != header.len() {
            return Err(Error::Parse(format!("row has {} fields, header has {}", row.len(), header.len())));
        }
        rows.push(row);
    }
    Ok((header, rows))
}
