//! CSV outputs with configuration header comments, and the PASS/FAIL summary.

use std::fmt::Display;
use std::path::PathBuf;

use anyhow::{Context, Result};

use mcwm_core::diagnostics::GridSpec;
use mcwm_core::experiments::Check;

pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) {
        self.rows.push(cells.into_iter().collect());
    }
}

pub struct Report {
    dir: PathBuf,
    config: Vec<(String, String)>,
    checks: Vec<Check>,
}

impl Report {
    pub fn new(dir: PathBuf) -> Self {
        Self { dir, config: Vec::new(), checks: Vec::new() }
    }

    pub fn config(&mut self, key: &str, value: impl Display) {
        self.config.push((key.to_string(), value.to_string()));
    }

    pub fn grid(&mut self, grid: GridSpec) {
        self.config("grid", format!("[{}, {}] x {}", grid.lo, grid.hi, grid.points));
    }

    fn header(&self) -> String {
        self.config.iter().map(|(k, v)| format!("# {k} = {v}\n")).collect()
    }

    pub fn write_table(&self, name: &str, table: &Table) -> Result<()> {
        let mut text = table.header.join(",");
        text.push('\n');
        for row in &table.rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        self.write_raw(name, text.as_bytes())
    }

    /// Writes `body` after the configuration header.
    pub fn write_raw(&self, name: &str, body: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        let mut bytes = self.header().into_bytes();
        bytes.extend_from_slice(body);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
    }

    pub fn checks<I: IntoIterator<Item = Check>>(&mut self, checks: I) {
        self.checks.extend(checks);
    }

    /// Prints one line per check; `true` iff all passed.
    pub fn finish(self) -> Result<bool> {
        for c in &self.checks {
            println!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        println!("{} checks, {failed} failed; outputs in {}", self.checks.len(), self.dir.display());
        Ok(failed == 0)
    }
}
