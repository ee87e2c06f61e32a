//! CSV persistence for labelled matrices.
//!
//! Floats are written with 17 significant digits in scientific notation so
//! a write/read cycle is lossless and output never depends on locale.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Format with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        // avoid "-0e0" noise in diffs
        return "0.0000000000000000e0".into();
    }
    format!("{v:.16e}")
}

/// Write a matrix with a header row (`corner`, column names) and a leading
/// column of row names.
pub fn write_matrix_csv(
    path: &Path,
    corner: &str,
    row_names: &[String],
    col_names: &[String],
    m: &DMatrix<f64>,
) -> Result<()> {
    assert_eq!(row_names.len(), m.nrows());
    assert_eq!(col_names.len(), m.ncols());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![corner.to_owned()];
    header.extend(col_names.iter().cloned());
    w.write_record(&header)?;
    for (i, name) in row_names.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend((0..m.ncols()).map(|j| fmt_f64(m[(i, j)])));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A matrix read back from CSV with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledMatrix {
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
    pub values: DMatrix<f64>,
}

pub fn read_matrix_csv(path: &Path) -> Result<LabelledMatrix> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
            _ => Error::Csv(e),
        })?;
    let header = r.headers()?.clone();
    if header.is_empty() {
        return Err(Error::MalformedInput {
            row: 1,
            column: 1,
            message: format!("{}: empty header", path.display()),
        });
    }
    let col_names: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut row_names = Vec::new();
    let mut data = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != col_names.len() + 1 {
            return Err(Error::MalformedInput {
                row: i + 2,
                column: rec.len(),
                message: format!("{}: expected {} fields", path.display(), col_names.len() + 1),
            });
        }
        row_names.push(rec[0].to_owned());
        for (j, field) in rec.iter().skip(1).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::MalformedInput {
                row: i + 2,
                column: j + 2,
                message: format!("{}: not a number `{field}`", path.display()),
            })?;
            data.push(v);
        }
    }
    let values = DMatrix::from_row_slice(row_names.len(), col_names.len(), &data);
    Ok(LabelledMatrix {
        row_names,
        col_names,
        values,
    })
}

/// Write plain rows under a header; values are written verbatim.
pub fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.0), "0.0000000000000000e0");
    }

    proptest! {
        #[test]
        fn matrix_csv_is_lossless(vals in prop::collection::vec(-1e6f64..1e6, 6)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.csv");
            let m = DMatrix::from_row_slice(2, 3, &vals);
            let rows = vec!["a".to_string(), "b".to_string()];
            let cols = vec!["0".to_string(), "1".to_string(), "2".to_string()];
            write_matrix_csv(&path, "dataset", &rows, &cols, &m).unwrap();
            let back = read_matrix_csv(&path).unwrap();
            prop_assert_eq!(back.values, m);
            prop_assert_eq!(back.row_names, rows);
            prop_assert_eq!(back.col_names, cols);
        }
    }
}
