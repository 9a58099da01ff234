//! Numeric matrix CSV with an optional `dim_0..dim_{d-1}` header row.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};

/// Parse a matrix from CSV text. A first row that does not parse as numbers
/// is treated as a header and skipped.
pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(vals) => {
                if rows.is_empty() {
                    width = vals.len();
                } else if vals.len() != width {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: format!("expected {width} columns, found {}", vals.len()),
                    });
                }
                rows.push(vals);
            }
            Err(e) => {
                if i == 0 {
                    continue; // header row
                }
                return Err(Error::Parse { line: i + 1, msg: e.to_string() });
            }
        }
    }
    if rows.is_empty() {
        return Err(invalid("CSV contains no data rows"));
    }
    let n = rows.len();
    Ok(DMatrix::from_fn(n, width, |r, c| rows[r][c]))
}

pub fn write_matrix_csv(m: &DMatrix<f64>) -> String {
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("dim_{j}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    parse_matrix_csv(&std::fs::read_to_string(path)?)
}

pub fn save_matrix_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    Ok(std::fs::write(path, write_matrix_csv(m))?)
}
