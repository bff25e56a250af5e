//! Minimal reader/writer for the numeric CSV files used by the toolkit:
//! `#key=value` comment lines carry metadata, then one header line, then rows
//! of decimal floats.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NumericCsv {
    pub metadata: BTreeMap<String, String>,
    pub header: Vec<String>,
    /// Each row with the 1-based line number it came from.
    pub rows: Vec<(usize, Vec<f64>)>,
}

pub fn read_numeric_csv<R: BufRead>(reader: R, expected_header: &[&str]) -> Result<NumericCsv> {
    let mut out = NumericCsv::default();
    let mut header_seen = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once('=') {
                out.metadata.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if !header_seen {
            let header: Vec<String> = trimmed.split(',').map(|s| s.trim().to_string()).collect();
            if header != expected_header {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected header `{}`, found `{trimmed}`", expected_header.join(",")),
                });
            }
            out.header = header;
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != expected_header.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} fields, found {}", expected_header.len(), fields.len()),
            });
        }
        let mut values = Vec::with_capacity(fields.len());
        for f in fields {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("`{}` is not a number", f.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { line: line_no, message: format!("non-finite value `{f}`") });
            }
            values.push(v);
        }
        out.rows.push((line_no, values));
    }
    if !header_seen {
        return Err(Error::Parse { line: 0, message: "missing header line".into() });
    }
    Ok(out)
}

pub fn write_metadata<W: Write>(w: &mut W, metadata: &BTreeMap<String, String>) -> Result<()> {
    for (k, v) in metadata {
        writeln!(w, "#{k}={v}")?;
    }
    Ok(())
}
