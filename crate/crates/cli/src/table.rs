//! Numeric result tables and their CSV form.
//!
//! Values are written with Rust's shortest round-trip float formatting, so
//! reading a file back reproduces the in-memory table bit for bit (NaN marks
//! an undefined entry).

use std::path::{Path, PathBuf};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem.
    pub name: String,
    /// Column names with units in brackets, e.g. `nu_var[1]`.
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch in {}", self.name);
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of the named column.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Bitwise equality, treating NaN entries as equal to NaN.
    pub fn same_values(&self, other: &Table) -> bool {
        self.columns == other.columns
            && self.rows.len() == other.rows.len()
            && self
                .rows
                .iter()
                .zip(&other.rows)
                .all(|(a, b)| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan())))
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| v.to_string()))?;
        }
        w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))
    }

    pub fn write_csv(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(format!("{}.csv", self.name));
        let bytes = self.to_csv_bytes()?;
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn read_csv(path: &Path) -> Result<Self, CliError> {
        let mut r = csv::Reader::from_path(path)?;
        let columns = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| CliError::Validation(vec![format!("{}: `{s}`: {e}", path.display())]))
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self { name, columns, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let mut t = Table::new("t", &["x[sigma]", "y[1]"]);
        t.push(vec![0.1 + 0.2, f64::NAN]);
        t.push(vec![1e-300, -3.5e17]);
        t.push(vec![f64::INFINITY, 2.0 / 3.0]);
        let dir = std::env::temp_dir().join(format!("table-rt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = t.write_csv(&dir).unwrap();
        let back = Table::read_csv(&p).unwrap();
        assert!(back.same_values(&t));
        assert_eq!(back.name, "t");
        std::fs::remove_dir_all(dir).unwrap();
    }
}
