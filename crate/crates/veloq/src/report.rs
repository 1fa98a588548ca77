//! Runner outputs: CSV tables, a JSON summary and embedded checks.

use std::path::Path;

use anyhow::{Context as _, Result};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }

    /// `|value − expected| ≤ tol`.
    pub fn within(name: &str, value: f64, expected: f64, tol: f64) -> Self {
        let diff = (value - expected).abs();
        Self::new(name, diff <= tol, format!("value {value:.6e}, expected {expected:.6e}, |diff| {diff:.3e} (tol {tol:.1e})"))
    }

    /// `|value/expected − 1| ≤ rel`.
    pub fn relative(name: &str, value: f64, expected: f64, rel: f64) -> Self {
        let r = (value / expected - 1.0).abs();
        Self::new(name, r <= rel, format!("value {value:.6e}, expected {expected:.6e}, rel. error {r:.3e} (tol {rel:.1e})"))
    }

    pub fn in_range(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self::new(name, (lo..=hi).contains(&value), format!("value {value:.4} in [{lo}, {hi}]"))
    }
}

/// Everything one runner produces.
#[derive(Debug, Clone, Serialize)]
pub struct FigureOutput {
    pub id: String,
    #[serde(skip)]
    pub tables: Vec<(String, String)>,
    pub summary: serde_json::Value,
    pub checks: Vec<Check>,
}

impl FigureOutput {
    pub fn new(id: &str) -> Self {
        Self { id: id.into(), tables: Vec::new(), summary: serde_json::Value::Null, checks: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Writes every table plus `<id>.json` into `dir`; returns the file names.
    pub fn write(&self, dir: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut names = Vec::new();
        for (name, body) in &self.tables {
            std::fs::write(dir.join(name), body).with_context(|| format!("writing {name}"))?;
            names.push(name.clone());
        }
        let json_name = format!("{}.json", self.id);
        std::fs::write(dir.join(&json_name), serde_json::to_string_pretty(self)? + "\n")?;
        names.push(json_name);
        Ok(names)
    }

    /// Human-readable list of failing checks.
    pub fn diff_report(&self) -> String {
        self.checks.iter().filter(|c| !c.passed).map(|c| format!("  {} FAILED: {}\n", c.name, c.detail)).collect()
    }
}

/// CSV table built from a header and rows of displayable cells.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header)?;
        Ok(Self { writer })
    }

    pub fn row<I, S>(&mut self, cells: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(cells)?;
        Ok(())
    }

    pub fn finish(self) -> Result<String> {
        let bytes = self.writer.into_inner().map_err(|e| anyhow::anyhow!("flushing CSV: {e}"))?;
        Ok(String::from_utf8(bytes)?)
    }
}

/// Shortest round-trip representation, so CSVs are exact and stable.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
