//! CSV tables with `#` metadata lines.

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            metadata: Vec::new(),
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.to_string(), value.to_string()));
    }

    /// Renders the table. The timestamp line is omitted when `deterministic`.
    pub fn render(&self, command: &str, deterministic: bool) -> String {
        let mut s = format!("# demsim {}\n# command = {command}\n", env!("CARGO_PKG_VERSION"));
        for (k, v) in &self.metadata {
            s.push_str(&format!("# {k} = {v}\n"));
        }
        if !deterministic {
            let secs = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            s.push_str(&format!("# timestamp = {secs}\n"));
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, command: &str, deterministic: bool, out: Option<&Path>) -> Result<(), CliError> {
        let text = self.render(command, deterministic);
        match out {
            Some(path) => std::fs::write(path, text)
                .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display()))),
            None => std::io::stdout()
                .lock()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Runtime(format!("cannot write output: {e}"))),
        }
    }
}

/// Shortest round-trip formatting, with an exponent for very small or large
/// magnitudes.
pub fn num(x: f64) -> String {
    if x.is_infinite() && x > 0.0 {
        "inf".to_string()
    } else if x != 0.0 && (x.abs() < 1e-4 || x.abs() >= 1e16) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// Empty for `None`.
pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
