use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::RunLog;
use crate::error::{Error, Result};

pub const RUN_LOG_HEADER: [&str; 11] = [
    "strategy",
    "seed",
    "iteration",
    "labeled_size",
    "precision",
    "recall",
    "f1",
    "mispred_selected",
    "batch_risk_mean",
    "sampler_ms",
    "swaps",
];

const FILES: [&str; 4] = ["run_log.csv", "config.json", "environment.json", "queries.jsonl"];

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `run_log.csv`, `config.json`, `environment.json` and
/// `queries.jsonl` into `dir`. Existing files are only replaced with
/// `force`.
pub fn emit_run_log(log: &RunLog, dir: &Path, force: bool) -> Result<Vec<PathBuf>> {
    let paths: Vec<PathBuf> = FILES.iter().map(|f| dir.join(f)).collect();
    if !force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(Error::WouldOverwrite(p.clone()));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut csv = csv::Writer::from_path(&paths[0])?;
    csv.write_record(RUN_LOG_HEADER)?;
    for r in &log.records {
        csv.write_record([
            r.strategy.to_string(),
            r.seed.to_string(),
            r.iteration.to_string(),
            r.labeled_size.to_string(),
            r.precision.to_string(),
            r.recall.to_string(),
            r.f1.to_string(),
            opt(r.mispred_selected),
            opt(r.batch_risk_mean),
            opt(r.sampler_ms),
            opt(r.swaps),
        ])?;
    }
    csv.flush().map_err(|e| Error::io(&paths[0], e))?;

    write_json(&paths[1], &log.config)?;
    write_json(&paths[2], &log.environment)?;

    let f = File::create(&paths[3]).map_err(|e| Error::io(&paths[3], e))?;
    let mut w = BufWriter::new(f);
    for q in &log.queries {
        serde_json::to_writer(&mut w, q)?;
        w.write_all(b"\n").map_err(|e| Error::io(&paths[3], e))?;
    }
    w.flush().map_err(|e| Error::io(&paths[3], e))?;
    Ok(paths)
}
