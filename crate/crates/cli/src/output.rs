//! CSV and JSON rendering.

use std::io::Write;
use std::path::Path;

use serde_json::{Map, Value};

use crate::config::Format;
use crate::CliError;

pub const VERSION_HEADER: &str = concat!("# qmeas ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_columns(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    fn to_json(&self) -> Value {
        let mut m = Map::new();
        for (k, name) in self.columns.iter().enumerate() {
            m.insert(name.clone(), Value::from(self.rows.iter().map(|r| r[k]).collect::<Vec<_>>()));
        }
        Value::Object(m)
    }
}

/// A command's result: a summary plus an optional time series.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub summary: Map<String, Value>,
    pub table: Option<Table>,
}

impl Output {
    pub fn summary(summary: Value) -> Self {
        let summary = match summary {
            Value::Object(m) => m,
            other => Map::from_iter([("value".to_string(), other)]),
        };
        Self { summary, table: None }
    }

    pub fn with_table(mut self, table: Table) -> Self {
        self.table = Some(table);
        self
    }

    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Json => {
                let mut m = self.summary.clone();
                if let Some(t) = &self.table {
                    m.insert("series".into(), t.to_json());
                }
                let mut s = serde_json::to_string_pretty(&Value::Object(m))
                    .map_err(|e| CliError::Numerical(format!("cannot encode output: {e}")))?;
                s.push('\n');
                Ok(s)
            }
            Format::Csv => {
                let t = self
                    .table
                    .as_ref()
                    .ok_or_else(|| CliError::Config("this command has no tabular output; use --format json".into()))?;
                Ok(render_csv(t))
            }
        }
    }

    pub fn write(&self, format: Format, path: Option<&Path>) -> Result<(), CliError> {
        let text = self.render(format)?;
        match path {
            Some(p) => std::fs::write(p, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display()))),
            None => std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Config(format!("cannot write to stdout: {e}"))),
        }
    }
}

/// Seventeen significant digits round-trip every double.
pub fn format_number(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn render_csv(t: &Table) -> String {
    let mut s = String::new();
    s.push_str(VERSION_HEADER);
    s.push('\n');
    s.push_str(&t.columns.join(","));
    s.push('\n');
    for row in &t.rows {
        let cells: Vec<String> = row.iter().map(|&x| format_number(x)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}
