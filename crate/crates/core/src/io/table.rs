//! CSV tables: plain numeric matrices and labelled datasets.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::io::atomic_write;

/// Rows of `x` are samples; `y[r]` is the class of row `r`, in `0..classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: Vec<usize>, classes: usize) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::shape(format!("{} rows vs {} labels", x.nrows(), y.len())));
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::invalid("empty dataset"));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= classes) {
            return Err(Error::invalid(format!("label {bad} out of range for {classes} classes")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features".into()));
        }
        Ok(Dataset { x, y, classes })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn features(&self) -> usize {
        self.x.ncols()
    }

    /// First `n` rows (all rows when `n` exceeds the length).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset { x: self.x.rows(0, n).into_owned(), y: self.y[..n].to_vec(), classes: self.classes }
    }
}

fn parse_cell(s: &str, line: usize, col: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("row {line}, column {col}: '{s}' is not a number")))
}

fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok((header, rows))
}

/// Numeric CSV with a header row; one matrix row per line.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let (header, rows) = read_rows(path)?;
    if rows.is_empty() {
        return Err(Error::Parse(format!("{} has no data rows", path.display())));
    }
    let cols = header.len();
    let mut values = Vec::with_capacity(rows.len() * cols);
    for (i, row) in rows.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            values.push(parse_cell(cell, i + 1, j)?);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), cols, &values))
}

fn matrix_text(m: &DMatrix<f64>, header: &[String]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Header defaults to `c0,c1,...`.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>, header: Option<&[String]>) -> Result<()> {
    let names: Vec<String> = match header {
        Some(h) if h.len() == m.ncols() => h.to_vec(),
        Some(h) => return Err(Error::shape(format!("{} header names for {} columns", h.len(), m.ncols()))),
        None => (0..m.ncols()).map(|j| format!("c{j}")).collect(),
    };
    atomic_write(path, matrix_text(m, &names).as_bytes())
}

/// Feature columns plus an integer label column, named `label` or else the
/// last column. `classes` is one more than the largest label.
pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let (header, rows) = read_rows(path)?;
    if header.len() < 2 {
        return Err(Error::Parse("dataset CSV needs at least one feature and a label column".into()));
    }
    if rows.is_empty() {
        return Err(Error::Parse(format!("{} has no data rows", path.display())));
    }
    let label_col = header.iter().position(|h| h == "label").unwrap_or(header.len() - 1);
    let mut values = Vec::with_capacity(rows.len() * (header.len() - 1));
    let mut y = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            if j == label_col {
                let label = cell.trim().parse::<usize>().map_err(|_| {
                    Error::Parse(format!("row {}: label '{cell}' is not a non-negative integer", i + 1))
                })?;
                y.push(label);
            } else {
                values.push(parse_cell(cell, i + 1, j)?);
            }
        }
    }
    let classes = y.iter().max().map_or(0, |m| m + 1);
    let x = DMatrix::from_row_slice(rows.len(), header.len() - 1, &values);
    Dataset::new(x, y, classes.max(2))
}

pub fn write_dataset_csv(path: &Path, d: &Dataset) -> Result<()> {
    let mut out: Vec<String> = (0..d.features()).map(|j| format!("x{j}")).collect();
    out.push("label".into());
    let mut text = out.join(",");
    text.push('\n');
    for r in 0..d.len() {
        for j in 0..d.features() {
            text.push_str(&d.x[(r, j)].to_string());
            text.push(',');
        }
        text.push_str(&d.y[r].to_string());
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let x = DMatrix::from_row_slice(3, 2, &[0.1, -2.5e-7, 1.0 / 3.0, 4.0, 5.5, f64::MIN_POSITIVE]);
        let d = Dataset::new(x, vec![0, 2, 1], 3).unwrap();
        write_dataset_csv(&p, &d).unwrap();
        assert_eq!(read_dataset_csv(&p).unwrap(), d);
    }

    #[test]
    fn matrix_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        write_matrix_csv(&p, &m, None).unwrap();
        assert_eq!(read_matrix_csv(&p).unwrap(), m);
        std::fs::write(&p, "a,b\n1,x\n").unwrap();
        assert!(matches!(read_matrix_csv(&p), Err(Error::Parse(_))));
        std::fs::write(&p, "a,label\n1,-1\n").unwrap();
        assert!(matches!(read_dataset_csv(&p), Err(Error::Parse(_))));
    }

    #[test]
    fn label_column_found_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "label,f0,f1\n1,0.5,0.25\n0,1.5,2\n").unwrap();
        let d = read_dataset_csv(&p).unwrap();
        assert_eq!(d.y, vec![1, 0]);
        assert_eq!(d.x[(1, 1)], 2.0);
    }
}
