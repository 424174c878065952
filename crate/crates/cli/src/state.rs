//! Data-root layout, run ledger, store persistence, and the fit lock.

use crate::config::PipelineConfig;
use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use narratives::clusterer::{FitReport, NarrativeStore};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Marker for input/state problems → exit code 2.
#[derive(Debug)]
pub struct DataError(pub String);

impl std::fmt::Display for DataError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}
impl std::error::Error for DataError {}

/// Marker for external-service failures → exit code 3.
#[derive(Debug)]
pub struct ExternalError(pub String);

impl std::fmt::Display for ExternalError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}
impl std::error::Error for ExternalError {}

pub struct DataRoot {
    root: PathBuf,
}

impl DataRoot {
    pub fn new(root: &Path) -> Result<DataRoot> {
        fs::create_dir_all(root)
            .with_context(|| format!("creating data root {}", root.display()))?;
        fs::create_dir_all(root.join("staged"))?;
        fs::create_dir_all(root.join("snapshots"))?;
        fs::create_dir_all(root.join("reports"))?;
        Ok(DataRoot {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn store_path(&self) -> PathBuf {
        self.root.join("store.snap")
    }

    pub fn day_snapshot_path(&self, day: NaiveDate) -> PathBuf {
        self.root.join("snapshots").join(format!("{day}.snap"))
    }

    pub fn staged_path(&self, day: NaiveDate) -> PathBuf {
        self.root.join("staged").join(format!("{day}.jsonl"))
    }

    pub fn staged_days(&self) -> Result<Vec<NaiveDate>> {
        let mut days = Vec::new();
        for entry in fs::read_dir(self.root.join("staged"))? {
            let entry = entry?;
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if let Some(stem) = name.strip_suffix(".jsonl") {
                if let Ok(day) = stem.parse::<NaiveDate>() {
                    days.push(day);
                }
            }
        }
        days.sort();
        Ok(days)
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.root.join("ledger.jsonl")
    }

    pub fn factchecks_path(&self) -> PathBuf {
        self.root.join("factchecks.jsonl")
    }

    pub fn factcheck_matches_path(&self) -> PathBuf {
        self.root.join("factcheck_matches.jsonl")
    }

    pub fn labels_path(&self) -> PathBuf {
        self.root.join("labels.jsonl")
    }

    /// Loads the latest committed store, or a fresh one matching the config.
    pub fn load_store(&self, config: &PipelineConfig) -> Result<NarrativeStore> {
        let path = self.store_path();
        if !path.exists() {
            return Ok(NarrativeStore::new(config.dimension, config.lambda));
        }
        let blob = fs::read(&path)
            .with_context(|| format!("reading store snapshot {}", path.display()))?;
        let store = NarrativeStore::snapshot_load(&blob)
            .map_err(|e| DataError(format!("loading {}: {e}", path.display())))?;
        if store.dim() != config.dimension {
            bail!(DataError(format!(
                "store dimension {} does not match configured {}",
                store.dim(),
                config.dimension
            )));
        }
        Ok(store)
    }

    /// Requires an existing committed store.
    pub fn load_existing_store(&self, config: &PipelineConfig) -> Result<NarrativeStore> {
        if !self.store_path().exists() {
            bail!(DataError(format!(
                "no store snapshot at {}; run `fit` first",
                self.store_path().display()
            )));
        }
        self.load_store(config)
    }

    /// Writes a snapshot atomically (temp file + rename) and returns its id.
    pub fn save_store(&self, store: &NarrativeStore, day: Option<NaiveDate>) -> Result<String> {
        let blob = store.snapshot_save();
        let id = NarrativeStore::snapshot_id(&blob);
        write_atomic(&self.store_path(), &blob)?;
        if let Some(day) = day {
            write_atomic(&self.day_snapshot_path(day), &blob)?;
        }
        Ok(id)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// One committed day in the run ledger.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub date: NaiveDate,
    pub report: FitReport,
    pub snapshot_id: String,
    pub config_hash: String,
}

pub struct Ledger {
    path: PathBuf,
    pub entries: Vec<LedgerEntry>,
}

impl Ledger {
    pub fn load(root: &DataRoot) -> Result<Ledger> {
        let path = root.ledger_path();
        let mut entries = Vec::new();
        if path.exists() {
            for (number, line) in fs::read_to_string(&path)?.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let entry: LedgerEntry = serde_json::from_str(line)
                    .map_err(|e| DataError(format!("ledger line {}: {e}", number + 1)))?;
                entries.push(entry);
            }
        }
        Ok(Ledger { path, entries })
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.entries.last().map(|e| e.date)
    }

    /// Appends one entry; dates must be strictly increasing.
    pub fn append(&mut self, entry: LedgerEntry) -> Result<()> {
        if let Some(last) = self.last_date() {
            if entry.date <= last {
                bail!(DataError(format!(
                    "ledger date {} not after last committed {last}",
                    entry.date
                )));
            }
        }
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)?;
        serde_json::to_writer(&mut file, &entry)?;
        file.write_all(b"\n")?;
        self.entries.push(entry);
        Ok(())
    }
}

/// Exclusive lock guarding the store against concurrent fits. Released on
/// drop.
pub struct FitLock {
    path: PathBuf,
}

impl FitLock {
    pub fn acquire(root: &DataRoot) -> Result<FitLock> {
        let path = root.path().join(".fit.lock");
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(FitLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => bail!(DataError(format!(
                "another fit holds the lock at {} (remove it if stale)",
                path.display()
            ))),
            Err(e) => Err(e).context("acquiring fit lock"),
        }
    }
}

impl Drop for FitLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Reads line-delimited JSON records of any deserializable type.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (number, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(line)
            .map_err(|e| DataError(format!("{} line {}: {e}", path.display(), number + 1)))?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for record in records {
        serde_json::to_writer(&mut buf, record)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}
