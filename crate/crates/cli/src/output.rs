//! CSV and summary writers.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use crate::CliError;

/// Nine significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        x.to_string()
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// A CSV table built in memory and written in one go.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(File::create(path)?);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Named tables plus a free-text summary, written under one directory.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub tables: Vec<(String, Table)>,
    pub summary: Vec<String>,
}

impl Artifacts {
    pub fn add(&mut self, name: &str, table: Table) {
        self.tables.push((name.to_string(), table));
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn line(&mut self, text: impl Into<String>) {
        self.summary.push(text.into());
    }

    /// Writes every table as `<name>.csv` and the summary as `summary.txt`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, table) in &self.tables {
            let path = dir.join(format!("{name}.csv"));
            table.write(&path)?;
            written.push(path);
        }
        let path = dir.join("summary.txt");
        let mut text = self.summary.join("\n");
        text.push('\n');
        fs::write(&path, text)?;
        written.push(path);
        Ok(written)
    }
}
