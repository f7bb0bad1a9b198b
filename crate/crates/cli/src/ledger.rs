//! Append-only run ledger, one JSON object per line.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::canonical::{sha256_hex, to_canonical_json};
use crate::CliError;

pub const LEDGER_FILE: &str = "ledger.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedgerEntry {
    pub run_id: String,
    pub timestamp: String,
    pub command: String,
    pub config_hash: String,
    /// Canonical config text; parsing it back reproduces the run.
    pub config: String,
    pub version: String,
    pub workers: usize,
    pub exit_code: i32,
    pub outputs: Vec<OutputRecord>,
    pub wall_time_s: f64,
}

pub fn artifact_version() -> String {
    format!("polymer-lab v{}", env!("CARGO_PKG_VERSION"))
}

pub fn ledger_path(out: &Path) -> PathBuf {
    out.join(LEDGER_FILE)
}

pub fn read(out: &Path) -> Result<Vec<RunLedgerEntry>, CliError> {
    let path = ledger_path(out);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(&path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Config(format!("ledger line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn append(out: &Path, entry: &RunLedgerEntry) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    let mut file = OpenOptions::new().create(true).append(true).open(ledger_path(out))?;
    let line = to_canonical_json(entry).map_err(|e| CliError::Config(e.to_string()))?;
    writeln!(file, "{line}")?;
    Ok(())
}

/// First unused `<hash12>-<seq>` directory name under `out`.
pub fn next_run_id(out: &Path, config_hash: &str) -> String {
    let stem = &config_hash[..12];
    (0u32..)
        .map(|k| format!("{stem}-{k:03}"))
        .find(|id| !out.join(id).exists())
        .expect("some run id is free")
}

/// Writes the files of one run under `out/run_id` and returns their records.
pub fn write_outputs(out: &Path, run_id: &str, files: &[(String, Vec<u8>)]) -> Result<Vec<OutputRecord>, CliError> {
    let dir = out.join(run_id);
    fs::create_dir_all(&dir)?;
    let mut records = Vec::new();
    for (name, bytes) in files {
        fs::write(dir.join(name), bytes)?;
        records.push(OutputRecord {
            path: format!("{run_id}/{name}"),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub entries: usize,
    pub files_checked: usize,
    pub problems: Vec<String>,
}

/// Every ledger output exists with its recorded digest, and every file under
/// the run directories is referenced by exactly one entry.
pub fn verify(out: &Path) -> Result<VerifyReport, CliError> {
    let entries = read(out)?;
    let mut problems = Vec::new();
    let mut refs: BTreeMap<String, usize> = BTreeMap::new();
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &entries {
        *ids.entry(&e.run_id).or_default() += 1;
        for o in &e.outputs {
            *refs.entry(o.path.clone()).or_default() += 1;
            match fs::read(out.join(&o.path)) {
                Ok(bytes) if sha256_hex(&bytes) == o.sha256 => {}
                Ok(_) => problems.push(format!("{}: digest mismatch", o.path)),
                Err(_) => problems.push(format!("{}: missing", o.path)),
            }
        }
    }
    for (id, count) in ids {
        if count > 1 {
            problems.push(format!("run id {id} appears {count} times"));
        }
    }
    let mut on_disk = Vec::new();
    for dir in fs::read_dir(out)? {
        let dir = dir?;
        if !dir.file_type()?.is_dir() {
            continue;
        }
        for f in fs::read_dir(dir.path())? {
            let f = f?;
            if f.file_type()?.is_file() {
                on_disk.push(format!(
                    "{}/{}",
                    dir.file_name().to_string_lossy(),
                    f.file_name().to_string_lossy()
                ));
            }
        }
    }
    on_disk.sort();
    for path in &on_disk {
        match refs.get(path) {
            None => problems.push(format!("{path}: not referenced by the ledger")),
            Some(&1) => {}
            Some(k) => problems.push(format!("{path}: referenced {k} times")),
        }
    }
    Ok(VerifyReport {
        entries: entries.len(),
        files_checked: on_disk.len(),
        problems,
    })
}
