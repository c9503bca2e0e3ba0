//! Rectangular tables written as CSV with a fixed float format.

use std::fmt;
use std::path::Path;

use crate::error::RunError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Float(v) => write!(f, "{}", format_float(*v)),
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

/// Nine significant digits in scientific notation: `1.0 → 1.00000000e0`.
pub fn format_float(v: f64) -> String {
    format!("{v:.8e}")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Header `prefix_0..prefix_{d-1}` appended to `fixed`.
    pub fn with_vector(fixed: &[&str], prefix: &str, d: usize) -> Self {
        let mut header: Vec<String> = fixed.iter().map(|s| s.to_string()).collect();
        header.extend((0..d).map(|i| format!("{prefix}_{i}")));
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }
}

/// Writes `table` to `path`. Rows must match the header width and floats
/// must be finite.
pub fn emit_csv(table: &Table, path: &Path) -> Result<(), RunError> {
    for (i, row) in table.rows.iter().enumerate() {
        if row.len() != table.header.len() {
            return Err(RunError::Numerical(format!(
                "row {i} of {} has {} cells, header has {}",
                path.display(),
                row.len(),
                table.header.len()
            )));
        }
        if let Some(Cell::Float(v)) = row.iter().find(|c| matches!(c, Cell::Float(v) if !v.is_finite())) {
            return Err(RunError::Numerical(format!("non-finite value {v} in row {i} of {}", path.display())));
        }
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| RunError::io(path, e))?;
    w.write_record(&table.header).map_err(|e| RunError::io(path, e))?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::to_string)).map_err(|e| RunError::io(path, e))?;
    }
    w.flush().map_err(|e| RunError::io(path, e))
}
