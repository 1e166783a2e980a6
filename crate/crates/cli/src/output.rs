//! CSV tables, the JSON sidecar, and the per-cell resume cache.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cell::CellMeta;
use crate::CliError;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(path.to_path_buf(), e.to_string())
}

pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn write_csv<S: AsRef<str>>(path: &Path, header: &[&str], records: &[Vec<S>]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in records {
        w.write_record(r.iter().map(AsRef::as_ref)).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// One finished cell as stored in the cache file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheLine {
    pub spec_hash: String,
    pub cell_hash: String,
    pub records: Vec<Vec<String>>,
    pub meta: CellMeta,
}

/// Append-only JSON-lines cache of finished cells.
pub struct CellCache {
    path: PathBuf,
    file: File,
}

impl CellCache {
    /// Opens the cache. Without `resume` any previous content is dropped.
    /// Returns the reusable lines for `spec_hash`, keyed by cell hash.
    pub fn open(path: &Path, spec_hash: &str, resume: bool) -> Result<(Self, BTreeMap<String, CacheLine>), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        let mut done = BTreeMap::new();
        if resume && path.exists() {
            let f = File::open(path).map_err(|e| io_err(path, e))?;
            for line in BufReader::new(f).lines() {
                let line = line.map_err(|e| io_err(path, e))?;
                // a torn final line from an interrupted run is skipped
                if let Ok(entry) = serde_json::from_str::<CacheLine>(&line) {
                    if entry.spec_hash == spec_hash {
                        done.insert(entry.cell_hash.clone(), entry);
                    }
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(!resume)
            .append(resume)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        // drop entries of other specs so the file only grows with this one
        let mut cache = Self {
            path: path.to_path_buf(),
            file,
        };
        if resume {
            cache.rewrite(done.values())?;
        }
        Ok((cache, done))
    }

    fn rewrite<'a>(&mut self, lines: impl Iterator<Item = &'a CacheLine>) -> Result<(), CliError> {
        let mut text = String::new();
        for l in lines {
            text.push_str(&serde_json::to_string(l).map_err(|e| io_err(&self.path, e))?);
            text.push('\n');
        }
        fs::write(&self.path, text).map_err(|e| io_err(&self.path, e))?;
        self.file = OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| io_err(&self.path, e))?;
        Ok(())
    }

    pub fn append(&mut self, line: &CacheLine) -> Result<(), CliError> {
        let mut text = serde_json::to_string(line).map_err(|e| io_err(&self.path, e))?;
        text.push('\n');
        self.file.write_all(text.as_bytes()).map_err(|e| io_err(&self.path, e))?;
        self.file.flush().map_err(|e| io_err(&self.path, e))
    }
}
