//! CSV/JSON artifacts and the run manifest.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use super::Config;
use crate::error::Result;

/// One CSV file: `name` is the file name, rows exclude the header.
#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub header: String,
    pub rows: Vec<String>,
}

impl Table {
    pub fn new(name: &str, header: &str) -> Self {
        Table {
            name: name.to_string(),
            header: header.to_string(),
            rows: Vec::new(),
        }
    }

    /// File contents: hash comment, header, rows.
    pub fn render(&self, config_hash: &str) -> String {
        let mut s = format!("# config_hash={config_hash}\n{}\n", self.header);
        for r in &self.rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Assertion {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// Everything a run produces, computed before any file is written.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    pub summary: Value,
    pub assertions: Vec<Assertion>,
}

impl RunOutput {
    pub fn all_pass(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_hash: String,
    pub version: String,
    pub seed: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<String>,
    pub assertions: Vec<Assertion>,
    pub all_pass: bool,
    pub config: Value,
}

pub(crate) fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, dir.join(name))?;
    Ok(())
}

/// Writes the tables, `summary.json` and finally `manifest.json` into `dir`.
pub fn write_run(config: &Config, out: &RunOutput, dir: &Path, started_unix_ms: u128) -> Result<Manifest> {
    let hash = config.hash();
    fs::create_dir_all(dir)?;
    let mut outputs = Vec::new();
    for t in &out.tables {
        write_atomic(dir, &t.name, &t.render(&hash))?;
        outputs.push(t.name.clone());
    }
    let mut summary = out.summary.clone();
    if let Value::Object(m) = &mut summary {
        m.insert("config_hash".into(), Value::String(hash.clone()));
    }
    write_atomic(dir, "summary.json", &(serde_json::to_string_pretty(&summary).expect("values serialize") + "\n"))?;
    outputs.push("summary.json".into());
    let manifest = Manifest {
        experiment: config.kind().as_str().to_string(),
        config_hash: hash,
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed.to_string(),
        started_unix_ms,
        finished_unix_ms: now_ms(),
        outputs,
        assertions: out.assertions.clone(),
        all_pass: out.all_pass(),
        config: config.canonical.clone(),
    };
    write_atomic(dir, "manifest.json", &(serde_json::to_string_pretty(&manifest).expect("values serialize") + "\n"))?;
    Ok(manifest)
}
