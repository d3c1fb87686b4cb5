use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::experiments::{Outcome, Table, Verdict};
use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub version: String,
    pub started: String,
    pub finished: String,
    /// `pass`, `fail` or `error`.
    pub status: String,
    pub error: Option<String>,
    pub results: Value,
    pub verdicts: Vec<Verdict>,
}

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Creates a fresh run directory; existing runs are never touched.
pub fn new_run_dir(cfg: &ExperimentConfig, stamp: &str) -> Result<PathBuf, CliError> {
    let parent = cfg.output_dir.join(&cfg.experiment);
    fs::create_dir_all(&parent).map_err(|e| io(&parent, e))?;
    for n in 0.. {
        let dir = parent.join(format!("{stamp}-s{}-{n}", cfg.seed));
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(io(&dir, e)),
        }
    }
    unreachable!()
}

/// The reproducible part of a run: identical configs give identical bytes.
pub fn results_payload(cfg: &ExperimentConfig, out: &Outcome) -> Value {
    json!({
        "experiment": cfg.experiment,
        "params": cfg.params,
        "seed": cfg.seed,
        "results": out.results,
        "verdicts": out.verdicts,
        "series": out.series,
    })
}

pub fn write_json(path: &Path, v: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| io(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io(path, e))
}

pub fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    serde_json::from_str(&text).map_err(|e| io(path, e))
}

pub fn write_table(dir: &Path, t: &Table) -> Result<(), CliError> {
    let path = dir.join(format!("{}.csv", t.name));
    let mut w = csv::Writer::from_path(&path).map_err(|e| io(&path, e))?;
    w.write_record(&t.header).map_err(|e| io(&path, e))?;
    for row in &t.rows {
        w.write_record(row).map_err(|e| io(&path, e))?;
    }
    w.flush().map_err(|e| io(&path, e))
}

/// Accepts a run directory or a JSON file inside one.
pub fn results_path(record: &Path) -> PathBuf {
    if record.is_dir() {
        record.join("results.json")
    } else {
        record.to_path_buf()
    }
}

/// Run directories under `out`, oldest first.
pub fn stored_runs(out: &Path) -> Vec<PathBuf> {
    let mut runs = Vec::new();
    let Ok(experiments) = fs::read_dir(out) else { return runs };
    for e in experiments.flatten() {
        if let Ok(inner) = fs::read_dir(e.path()) {
            runs.extend(inner.flatten().map(|r| r.path()).filter(|p| p.join("record.json").is_file()));
        }
    }
    runs.sort();
    runs
}
