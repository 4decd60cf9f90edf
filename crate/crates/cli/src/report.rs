use std::io::Write;
use std::path::Path;

use ldx_core::engine::ExpansionDiagnostics;
use ldx_core::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::cli::Format;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn to_csv(&self) -> String {
        match self {
            // 17 significant digits round-trip every binary64 value.
            Cell::Num(x) if x.is_finite() => format!("{x:.16e}"),
            Cell::Num(x) if x.is_nan() => "nan".into(),
            Cell::Num(x) => if *x > 0.0 { "inf" } else { "-inf" }.into(),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            // Non-finite values have no JSON literal and become null.
            Cell::Num(x) => Value::from(*x),
            Cell::Int(i) => Value::from(*i),
            Cell::Text(s) => Value::from(s.clone()),
            Cell::Bool(b) => Value::from(*b),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<u64> for Cell {
    fn from(i: u64) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Aggregated engine diagnostics for the `.diag.json` sidecar.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub gap: Option<f64>,
    pub max_imag_discarded: Option<f64>,
    pub continuation_radius: Option<f64>,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    /// Folds in one expansion run: worst gap and imaginary residue,
    /// smallest circle radius.
    pub fn absorb(&mut self, d: &ExpansionDiagnostics) {
        self.gap = Some(self.gap.map_or(d.gap, |g| g.max(d.gap)));
        self.max_imag_discarded =
            Some(self.max_imag_discarded.map_or(d.max_imag_discarded, |m| m.max(d.max_imag_discarded)));
        self.continuation_radius =
            Some(self.continuation_radius.map_or(d.continuation_radius, |r| r.min(d.continuation_radius)));
        // The engine has already logged these.
        for w in &d.warnings {
            if !self.warnings.contains(w) {
                self.warnings.push(w.clone());
            }
        }
    }

    /// Records a warning once and echoes it on the log channel.
    pub fn warn(&mut self, w: String) {
        if !self.warnings.contains(&w) {
            log::warn!("{w}");
            self.warnings.push(w);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub command: &'static str,
    pub tables: Vec<Table>,
    pub diagnostics: Diagnostics,
}

impl Report {
    pub fn render(&self, format: Format) -> Result<Vec<u8>> {
        match format {
            Format::Csv => self.render_csv(),
            Format::Json => {
                let tables: Vec<Value> = self
                    .tables
                    .iter()
                    .map(|t| {
                        let rows: Vec<Value> =
                            t.rows.iter().map(|r| Value::Array(r.iter().map(Cell::to_json).collect())).collect();
                        json!({ "name": t.name, "columns": t.columns, "rows": rows })
                    })
                    .collect();
                let doc = json!({ "command": self.command, "tables": tables });
                let mut out = serde_json::to_vec_pretty(&doc).map_err(|e| Error::Config(e.to_string()))?;
                out.push(b'\n');
                Ok(out)
            }
        }
    }

    /// One CSV block per table; with several tables each block starts with
    /// a `# name` line and blocks are separated by a blank line.
    fn render_csv(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let several = self.tables.len() > 1;
        for (i, t) in self.tables.iter().enumerate() {
            if i > 0 {
                out.push(b'\n');
            }
            if several {
                writeln!(out, "# {}", t.name).map_err(io_error)?;
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&t.columns).map_err(csv_error)?;
            for row in &t.rows {
                w.write_record(row.iter().map(Cell::to_csv)).map_err(csv_error)?;
            }
            out.extend(w.into_inner().map_err(|e| Error::Config(e.to_string()))?);
        }
        Ok(out)
    }

    /// Writes the rendered report to `out` (or stdout) and the sidecar next
    /// to `out`.
    pub fn emit(&self, format: Format, out: Option<&Path>) -> Result<()> {
        let bytes = self.render(format)?;
        match out {
            Some(path) => {
                std::fs::write(path, &bytes).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
                let mut side = path.as_os_str().to_owned();
                side.push(".diag.json");
                let mut doc = serde_json::to_vec_pretty(&self.diagnostics).map_err(|e| Error::Config(e.to_string()))?;
                doc.push(b'\n');
                std::fs::write(&side, doc)
                    .map_err(|e| Error::Config(format!("cannot write {}: {e}", Path::new(&side).display())))?;
            }
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(&bytes).map_err(io_error)?;
                stdout.flush().map_err(io_error)?;
            }
        }
        Ok(())
    }
}

fn io_error(e: std::io::Error) -> Error {
    Error::Config(format!("output error: {e}"))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Config(format!("output error: {e}"))
}
