//! Machine-readable run reports: effective config, content hashes of every
//! input file, output names, and per-command counts. No timestamps — two
//! runs over identical inputs produce byte-identical reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub inputs: BTreeMap<String, InputDigest>,
    pub outputs: Vec<String>,
    pub counts: BTreeMap<String, serde_json::Value>,
}

impl RunReport {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        RunReport {
            command: command.to_string(),
            seed: config.seed,
            config: config.clone(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            counts: BTreeMap::new(),
        }
    }

    /// Record an input file with its content hash.
    pub fn add_input(&mut self, name: &str, path: &Path) -> Result<()> {
        let bytes =
            fs::read(path).with_context(|| format!("cannot read input {}", path.display()))?;
        self.inputs.insert(
            name.to_string(),
            InputDigest {
                path: path.display().to_string(),
                sha256: hex::encode(Sha256::digest(&bytes)),
                bytes: bytes.len() as u64,
            },
        );
        Ok(())
    }

    pub fn count(&mut self, key: &str, value: impl Serialize) {
        self.counts.insert(
            key.to_string(),
            serde_json::to_value(value).expect("count values serialize"),
        );
    }

    /// Write an output file under `out` and record its fixed name.
    pub fn write_output(&mut self, out: &Path, name: &str, content: &str) -> Result<()> {
        fs::create_dir_all(out)
            .with_context(|| format!("cannot create output dir {}", out.display()))?;
        let path = out.join(name);
        fs::write(&path, content).with_context(|| format!("cannot write {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    /// Finalize: write `run_report.json` into the output directory.
    pub fn finish(mut self, out: &Path) -> Result<()> {
        self.outputs.push("run_report.json".to_string());
        self.outputs.sort();
        self.outputs.dedup();
        let json = serde_json::to_string_pretty(&self).expect("report serializes");
        fs::create_dir_all(out)
            .with_context(|| format!("cannot create output dir {}", out.display()))?;
        fs::write(out.join("run_report.json"), json + "\n")
            .with_context(|| format!("cannot write run report in {}", out.display()))?;
        Ok(())
    }
}

/// Read a text file and split it into non-empty-preserving lines.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Join records into JSONL content with a trailing newline.
pub fn to_jsonl<T: Serialize>(records: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    out
}
