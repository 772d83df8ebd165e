//! CSV and JSON emission.
//!
//! Floats use Rust's shortest round-trip formatting, so reruns are
//! byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};

pub struct Csv {
    meta: Vec<(String, String)>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            meta: Vec::new(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        ensure!(values.len() == self.header.len(), "row has {} fields, header {}", values.len(), self.header.len());
        self.rows.push(values.iter().map(|v| v.to_string()).collect());
        Ok(())
    }

    pub fn row_text(&mut self, values: Vec<String>) -> Result<()> {
        ensure!(values.len() == self.header.len(), "row has {} fields, header {}", values.len(), self.header.len());
        self.rows.push(values);
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::from("#");
        for (i, (k, v)) in self.meta.iter().enumerate() {
            let sep = if i == 0 { " " } else { "; " };
            let _ = write!(out, "{sep}{k}={v}");
        }
        out.push('\n');
        out.push_str(&self.header.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, self.render()).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Figure data: `u0, R0` and three `Psi` curves on one grid.
pub fn figure1_csv(u0: &[f64], r0: &[f64], psi: &[Vec<f64>; 3], nus: [f64; 3], hash: &str) -> Result<Csv> {
    ensure!(!u0.is_empty(), "empty u0 grid");
    ensure!(
        r0.len() == u0.len() && psi.iter().all(|p| p.len() == u0.len()),
        "curves are not sampled on a common u0 grid"
    );
    let mut csv = Csv::new(&["u0", "R0", "Psi_nu1", "Psi_nu2", "Psi_nu3"])
        .meta("config_sha256", hash)
        .meta("nu1", nus[0])
        .meta("nu2", nus[1])
        .meta("nu3", nus[2]);
    for i in 0..u0.len() {
        csv.row(&[u0[i], r0[i], psi[0][i], psi[1][i], psi[2][i]])?;
    }
    Ok(csv)
}

pub fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
