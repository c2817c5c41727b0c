//! CSV and JSON emission. Output is a pure function of the records, so a
//! fixed config and seed reproduce files byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

use super::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// One compact JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut text = String::new();
    for row in rows {
        text.push_str(&serde_json::to_string(row)?);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    config: &'a ExperimentConfig,
    records: &'a [T],
}

/// Write a record table under `dir` as `<stem>.csv` or `<stem>.json`, plus
/// a `<stem>_summary.json` carrying the config alongside the records.
/// Returns the written paths.
pub fn emit_records<T: Serialize>(
    dir: &Path,
    stem: &str,
    records: &[T],
    cfg: &ExperimentConfig,
    format: OutputFormat,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match format {
        OutputFormat::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            write_csv(&path, records)?;
            written.push(path);
        }
        OutputFormat::Json => {
            let path = dir.join(format!("{stem}.json"));
            write_json(&path, &records)?;
            written.push(path);
        }
    }
    let summary = dir.join(format!("{stem}_summary.json"));
    write_json(&summary, &Summary { config: cfg, records })?;
    written.push(summary);
    Ok(written)
}
