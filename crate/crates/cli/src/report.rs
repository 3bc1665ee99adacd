//! Self-describing CSV reports.
//!
//! A report starts with `# ` metadata lines (tool version, config hash,
//! seed and run sizes, then the canonical config) followed by one or more
//! `# section NAME` blocks of comma-separated rows. Reals are written with
//! 17 significant digits; undefined values are `nan`.

use std::fmt::Write as _;

use uvturb_core::engine::CHUNK_SIZE;

use crate::config::ScenarioConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(u64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        Cell::Real(v.unwrap_or(f64::NAN))
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

pub fn format_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    text: String,
}

impl Report {
    pub fn new(command: &str) -> Self {
        let mut r = Self::default();
        r.meta("uvturb", env!("CARGO_PKG_VERSION"));
        r.meta("command", command);
        r
    }

    /// Adds the config hash, run sizes and the canonical config.
    pub fn with_config(mut self, cfg: &ScenarioConfig) -> Self {
        self.meta("config_sha256", cfg.sha256());
        self.meta("seed", cfg.seed);
        self.meta("workers", cfg.workers);
        self.meta("samples", cfg.samples);
        self.meta("orders", cfg.orders);
        self.meta("chunk_size", CHUNK_SIZE);
        for line in cfg.to_canonical_string().lines() {
            let _ = writeln!(self.text, "# config: {line}");
        }
        self
    }

    pub fn meta(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.text, "# {key}: {value}");
    }

    pub fn note(&mut self, msg: &str) {
        let _ = writeln!(self.text, "# note: {msg}");
    }

    pub fn section(&mut self, name: &str, columns: &[&str]) {
        let _ = writeln!(self.text, "# section {name}");
        let _ = writeln!(self.text, "{}", columns.join(","));
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        let line: Vec<String> = cells
            .into_iter()
            .map(|c| match c {
                Cell::Real(v) => format_real(v),
                Cell::Int(n) => n.to_string(),
                Cell::Text(s) => s.replace([',', '\n', '\r'], ";"),
            })
            .collect();
        let _ = writeln!(self.text, "{}", line.join(","));
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn into_string(self) -> String {
        self.text
    }

    /// Rows of a section, without the column line.
    pub fn section_rows(&self, name: &str) -> Vec<Vec<String>> {
        let marker = format!("# section {name}");
        let mut lines = self.text.lines().skip_while(|l| *l != marker).skip(2);
        let mut rows = Vec::new();
        for line in lines.by_ref() {
            if line.starts_with('#') {
                break;
            }
            rows.push(line.split(',').map(str::to_string).collect());
        }
        rows
    }

    /// Everything from the first section on.
    pub fn data_sections(&self) -> &str {
        self.text.find("# section ").map_or("", |i| &self.text[i..])
    }
}
