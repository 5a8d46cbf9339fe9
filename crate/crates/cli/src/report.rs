//! Run reports: a deterministic `results` block (checks and tables) plus
//! non-deterministic run info kept separate so reruns with the same config
//! and seed reproduce the results byte for byte.

use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentConfig;

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub config: ExperimentConfig,
    pub results: serde_json::Value,
    pub passed: bool,
    pub run_info: RunInfo,
}

#[derive(Debug, Serialize)]
pub struct RunInfo {
    pub version: String,
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn new(
        command: &str,
        config: &ExperimentConfig,
        results: serde_json::Value,
        passed: bool,
        wall_time_s: f64,
    ) -> Self {
        Self {
            command: command.to_string(),
            config: config.clone(),
            results,
            passed,
            run_info: RunInfo {
                version: env!("CARGO_PKG_VERSION").to_string(),
                wall_time_s,
            },
        }
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("report.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Serialization of the deterministic portion only.
    pub fn deterministic_bytes(&self) -> anyhow::Result<Vec<u8>> {
        Ok(serde_json::to_vec(&serde_json::json!({
            "command": self.command,
            "results": self.results,
            "passed": self.passed,
        }))?)
    }
}

/// Accumulates named pass/fail checks for the report.
#[derive(Debug, Default)]
pub struct CheckList {
    checks: Vec<serde_json::Value>,
    all_passed: bool,
}

impl CheckList {
    pub fn new() -> Self {
        Self {
            checks: Vec::new(),
            all_passed: true,
        }
    }

    pub fn push(&mut self, name: &str, passed: bool, value: f64, threshold: f64, cmp: &str) {
        if !passed {
            self.all_passed = false;
        }
        self.checks.push(serde_json::json!({
            "name": name,
            "passed": passed,
            "value": value,
            "threshold": threshold,
            "comparator": cmp,
        }));
    }

    /// `value ≤ threshold` check.
    pub fn le(&mut self, name: &str, value: f64, threshold: f64) {
        self.push(name, value <= threshold, value, threshold, "<=");
    }

    /// `value ≥ threshold` check.
    pub fn ge(&mut self, name: &str, value: f64, threshold: f64) {
        self.push(name, value >= threshold, value, threshold, ">=");
    }

    /// `lo ≤ value ≤ hi` check.
    pub fn in_band(&mut self, name: &str, value: f64, lo: f64, hi: f64) {
        let passed = value >= lo && value <= hi;
        if !passed {
            self.all_passed = false;
        }
        self.checks.push(serde_json::json!({
            "name": name,
            "passed": passed,
            "value": value,
            "band": [lo, hi],
        }));
    }

    pub fn assert_true(&mut self, name: &str, passed: bool) {
        if !passed {
            self.all_passed = false;
        }
        self.checks.push(serde_json::json!({
            "name": name,
            "passed": passed,
        }));
    }

    pub fn all_passed(&self) -> bool {
        self.all_passed
    }

    pub fn into_json(self) -> serde_json::Value {
        serde_json::Value::Array(self.checks)
    }
}

/// Writes a CSV table with the given header and float rows.
pub fn write_table(
    dir: &Path,
    name: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(name))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}
