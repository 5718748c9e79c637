use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::Result;

use super::config::{ExperimentConfig, Format};

/// A table cell. Missing values print as empty CSV fields and JSON nulls.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Missing,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
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

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(if v { "pass" } else { "fail" }.into())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Num)
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) if v.is_finite() => json!(v),
            Cell::Num(v) => json!(v.to_string()),
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Missing => Value::Null,
        }
    }
}

/// Results table with a fixed column order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(Cell::csv).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let m: Map<String, Value> = self.columns.iter().zip(r).map(|(c, v)| (c.to_string(), v.json())).collect();
                Value::Object(m)
            })
            .collect();
        serde_json::to_string_pretty(&rows).expect("serializable") + "\n"
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

/// One acceptance threshold and its outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, threshold: impl Into<String>, pass: bool) -> Self {
        Check {
            name: name.into(),
            value,
            threshold: threshold.into(),
            pass,
        }
    }
}

/// The three files of a run, held in memory until written.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub results_name: String,
    pub results: String,
    pub manifest: String,
    pub passfail: String,
    pub pass: bool,
    /// Names and values of the failed checks.
    pub failed: Vec<String>,
}

pub fn passfail_json(experiment: &str, checks: &[Check]) -> String {
    let pass = checks.iter().all(|c| c.pass);
    let v = json!({ "experiment": experiment, "pass": pass, "checks": checks });
    serde_json::to_string_pretty(&v).expect("serializable") + "\n"
}

pub fn build_artifacts(config: &ExperimentConfig, table: &Table, checks: &[Check]) -> Artifacts {
    let results = table.render(config.format);
    let results_name = format!("results.{}", config.format.extension());
    let digest = Sha256::digest(results.as_bytes());
    let hash: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let manifest = json!({
        "program": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": config.experiment.name(),
        "seed": config.seed,
        "config": config.canonical(),
        "results": results_name,
        "results_sha256": hash,
    });
    Artifacts {
        results_name,
        results,
        manifest: serde_json::to_string_pretty(&manifest).expect("serializable") + "\n",
        passfail: passfail_json(config.experiment.name(), checks),
        pass: checks.iter().all(|c| c.pass),
        failed: checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("{}: {} (want {})", c.name, c.value, c.threshold))
            .collect(),
    }
}

impl Artifacts {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(&self.results_name), &self.results)?;
        fs::write(dir.join("manifest.json"), &self.manifest)?;
        fs::write(dir.join("passfail.json"), &self.passfail)?;
        Ok(())
    }
}

/// Writes the rows finished so far, so an interrupted run keeps them.
pub fn flush_partial(dir: &Path, config: &ExperimentConfig, table: &Table) -> Result<()> {
    fs::create_dir_all(dir)?;
    let name = format!("results.{}", config.format.extension());
    fs::write(dir.join(name), table.render(config.format))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_share_columns() {
        let mut t = Table::new(&["n", "total", "total_se", "note"]);
        t.push(vec![Cell::Int(1000), 0.25.into(), Cell::Missing, "x".into()]);
        assert_eq!(t.to_csv(), "n,total,total_se,note\n1000,2.5e-1,,x\n");
        let v: Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(v[0]["total"], json!(0.25));
        assert!(v[0]["total_se"].is_null());
    }
}
