//! Headerless numeric CSV reading and writing.
//!
//! Empty cells are read as `None` so callers can treat them as missing
//! entries. Values are written with Rust's shortest round-trip formatting.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Reads a rectangular CSV of decimals. Rows are 1-based in errors.
pub fn read_numeric_rows<R: Read>(reader: R) -> Result<Vec<Vec<Option<f64>>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    let mut width: Option<usize> = None;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::RaggedRow {
                    row: r + 1,
                    expected: w,
                    found: record.len(),
                })
            }
            _ => {}
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| parse_cell(field, r + 1, c + 1))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn parse_cell(field: &str, row: usize, col: usize) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field.parse::<f64>().map(Some).map_err(|e| Error::Parse {
        row,
        col,
        msg: format!("{field:?}: {e}"),
    })
}

/// Like [`read_numeric_rows`] but rejects empty cells.
pub fn read_dense_rows<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    read_numeric_rows(reader)?
        .into_iter()
        .enumerate()
        .map(|(r, row)| {
            row.into_iter()
                .enumerate()
                .map(|(c, v)| {
                    v.ok_or_else(|| Error::Parse {
                        row: r + 1,
                        col: c + 1,
                        msg: "empty cell".into(),
                    })
                })
                .collect()
        })
        .collect()
}

pub fn write_numeric_rows<W: Write, I>(writer: W, rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<Option<f64>>>,
{
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    for row in rows {
        let fields: Vec<String> = row
            .iter()
            .map(|v| v.map(|x| x.to_string()).unwrap_or_default())
            .collect();
        wtr.write_record(&fields)?;
    }
    wtr.flush()?;
    Ok(())
}
