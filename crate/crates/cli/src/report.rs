//! Self-describing run reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use relgrade_core::hashing::sha256_hex;

#[derive(Debug, Serialize)]
pub struct Report<'a, C: Serialize, R: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: &'a C,
    pub config_hash: String,
    pub inputs: &'a BTreeMap<String, String>,
    pub warnings: &'a [String],
    pub results: &'a R,
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

/// Write `report.json` (and `report.txt` when `table` is non-empty) to `out`.
pub fn emit<C: Serialize, R: Serialize>(
    out: &Path,
    command: &str,
    config: &C,
    inputs: &BTreeMap<String, String>,
    warnings: &[String],
    results: &R,
    table: &str,
) -> Result<()> {
    let report = Report {
        tool: "relgrade",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        config_hash: sha256_hex(&serde_json::to_vec(config)?),
        inputs,
        warnings,
        results,
    };
    write_json(&out.join("report.json"), &report)?;
    if !table.is_empty() {
        fs::write(out.join("report.txt"), table).with_context(|| format!("cannot write {}", out.display()))?;
        print!("{table}");
    }
    Ok(())
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("cannot create directory {}", path.display()))
}
