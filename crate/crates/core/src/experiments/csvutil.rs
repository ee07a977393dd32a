//! Small CSV helpers shared by the sweep commands and the report builder.
//!
//! Sweep artifacts carry a provenance comment (config hash and tool version)
//! above the header so a results directory is self-describing. Readers skip
//! any number of leading `#` comment lines and check the header verbatim.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::{Error, Result};

/// Provenance comment stamped at the top of every sweep CSV.
pub(crate) fn provenance_line(config_hash: &str) -> String {
    format!(
        "# config_hash={config_hash} tool_version={}",
        super::TOOL_VERSION
    )
}

pub(crate) fn write_csv(
    path: &Path,
    comments: &[String],
    header: &str,
    rows: &[String],
) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(path, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut emit = |line: &str| -> Result<()> {
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))
    };
    for c in comments {
        emit(c)?;
    }
    emit(header)?;
    for row in rows {
        emit(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a CSV written by [`write_csv`]: skip comments, check the header,
/// split the remaining lines into fields.
pub(crate) fn read_csv(path: &Path, expected_header: &str) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            if line != expected_header {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected header {expected_header:?}, found {line:?}"),
                ));
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<String> = line.split(',').map(str::to_string).collect();
        let expected = expected_header.split(',').count();
        if fields.len() != expected {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {expected} fields, found {}", fields.len()),
            ));
        }
        rows.push(fields);
    }
    if !header_seen {
        return Err(Error::parse(path, 1, "missing header line".to_string()));
    }
    Ok(rows)
}

pub(crate) fn field_f64(path: &Path, row: usize, name: &str, value: &str) -> Result<f64> {
    value.parse::<f64>().map_err(|_| {
        Error::parse(path, row + 2, format!("field {name}: not a number: {value:?}"))
    })
}

/// Format a float so the CSV round-trips bit for bit.
pub(crate) fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        let mut buf = ryu_like(x);
        if !buf.contains('.') && !buf.contains('e') && !buf.contains("inf") && buf != "NaN" {
            buf.push_str(".0");
        }
        buf
    }
}

fn ryu_like(x: f64) -> String {
    // {:?} on f64 prints the shortest representation that parses back
    // to the same bits, which is exactly what an artifact needs.
    format!("{x:?}")
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; 0 for fewer than two points.
pub(crate) fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    var.sqrt()
}
