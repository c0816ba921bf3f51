//! CSV input (comma separated, header row, `.` decimal point) and JSON
//! output.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use scpc_core::{Result, ScpcError, SpatialDesign};
use serde::Serialize;

/// Numeric table read from CSV, stored by column.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

fn input(msg: impl Into<String>) -> ScpcError {
    ScpcError::Input(msg.into())
}

impl Table {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> =
            rdr.headers().map_err(|e| input(format!("cannot read CSV header: {e}")))?.iter().map(String::from).collect();
        if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
            return Err(input("CSV file has no header row"));
        }
        let mut columns = vec![Vec::new(); headers.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| input(format!("CSV row {}: {e}", row + 2)))?;
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    input(format!("CSV row {}, column '{}': '{field}' is not a number", row + 2, headers[j]))
                })?;
                columns[j].push(v);
            }
        }
        Ok(Table { headers, columns })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| input(format!("cannot open {}: {e}", path.display())))?;
        Self::from_reader(f)
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        let j = self.headers.iter().position(|h| h == name).ok_or_else(|| {
            input(format!("column '{name}' not found; available columns: {}", self.headers.join(", ")))
        })?;
        Ok(&self.columns[j])
    }

    pub fn vector(&self, name: &str) -> Result<DVector<f64>> {
        Ok(DVector::from_column_slice(self.column(name)?))
    }

    /// `rows × names.len()` matrix of the named columns.
    pub fn matrix(&self, names: &[String]) -> Result<DMatrix<f64>> {
        let cols = names.iter().map(|n| self.column(n)).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(self.rows(), cols.len(), |i, j| cols[j][i]))
    }

    pub fn design(&self, coord_cols: &[String]) -> Result<SpatialDesign> {
        if coord_cols.is_empty() {
            return Err(input("at least one coordinate column is required"));
        }
        SpatialDesign::from_matrix(&self.matrix(coord_cols)?)
    }
}

/// Pretty JSON to `out`, or to stdout when `out` is `None`.
pub fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| ScpcError::Numeric(format!("JSON encoding: {e}")))?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| input(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut so = std::io::stdout().lock();
            writeln!(so, "{text}").map_err(|e| input(format!("cannot write to stdout: {e}")))
        }
    }
}

/// Writes serializable rows as CSV with a header.
pub fn write_csv_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| input(format!("cannot write {}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| input(format!("CSV encoding: {e}")))?;
    }
    w.flush().map_err(|e| input(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_named_columns() {
        let t = Table::from_reader("x1,x2,y\n0,0,1.5\n1, 0.5 ,2\n".as_bytes()).unwrap();
        assert_eq!(t.rows(), 2);
        assert_eq!(t.column("y").unwrap(), &[1.5, 2.0]);
        let d = t.design(&["x1".into(), "x2".into()]).unwrap();
        assert_eq!(d.point(1), &[1.0, 0.5]);
    }

    #[test]
    fn missing_column_is_named() {
        let t = Table::from_reader("a,b\n1,2\n".as_bytes()).unwrap();
        let e = t.column("y").unwrap_err().to_string();
        assert!(e.contains("'y'") && e.contains("a, b"), "{e}");
    }

    #[test]
    fn non_numeric_cell_reports_row_and_column() {
        let e = Table::from_reader("a,b\n1,2\n3,zz\n".as_bytes()).unwrap_err().to_string();
        assert!(e.contains("row 3") && e.contains("'b'"), "{e}");
    }

    #[test]
    fn ragged_rows_are_input_errors() {
        assert!(Table::from_reader("a,b\n1,2\n3\n".as_bytes()).unwrap_err().is_input());
    }
}
