//! Report output: tab-delimited tables by default, line-delimited JSON with
//! `--jsonl`, always stamped with provenance (config hash, snapshot id, code
//! version).

use anyhow::{Context, Result};
use serde::Serialize;
use std::io::Write;
use std::path::PathBuf;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_id: Option<String>,
    pub version: String,
}

impl Provenance {
    pub fn new(config_hash: String, snapshot_id: Option<String>) -> Provenance {
        Provenance {
            config_hash,
            snapshot_id,
            version: VERSION.to_string(),
        }
    }

    fn comment(&self) -> String {
        match &self.snapshot_id {
            Some(id) => format!(
                "# config={} snapshot={} version={}",
                self.config_hash, id, self.version
            ),
            None => format!("# config={} version={}", self.config_hash, self.version),
        }
    }
}

pub struct Report {
    sink: Box<dyn Write>,
    jsonl: bool,
}

impl Report {
    /// Opens the output target (file or stdout) and writes the provenance
    /// line. In JSONL mode the first record is a meta object.
    pub fn open(output: Option<&PathBuf>, jsonl: bool, provenance: &Provenance) -> Result<Report> {
        let sink: Box<dyn Write> = match output {
            Some(path) => Box::new(
                std::fs::File::create(path)
                    .with_context(|| format!("creating {}", path.display()))?,
            ),
            None => Box::new(std::io::stdout()),
        };
        let mut report = Report { sink, jsonl };
        if jsonl {
            let meta = serde_json::json!({ "meta": provenance });
            writeln!(report.sink, "{meta}")?;
        } else {
            writeln!(report.sink, "{}", provenance.comment())?;
        }
        Ok(report)
    }

    /// Column header (tab mode only; JSONL records are self-describing).
    pub fn header(&mut self, columns: &[&str]) -> Result<()> {
        if !self.jsonl {
            writeln!(self.sink, "{}", columns.join("\t"))?;
        }
        Ok(())
    }

    /// One table row; `record` carries the same data for JSONL mode.
    pub fn row<T: Serialize>(&mut self, cells: &[String], record: &T) -> Result<()> {
        if self.jsonl {
            serde_json::to_writer(&mut self.sink, record)?;
            writeln!(self.sink)?;
        } else {
            writeln!(self.sink, "{}", cells.join("\t"))?;
        }
        Ok(())
    }

    /// Free-form note (tab mode comment / skipped in JSONL).
    pub fn note(&mut self, text: &str) -> Result<()> {
        if !self.jsonl {
            writeln!(self.sink, "# {text}")?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.sink.flush()?;
        Ok(())
    }
}

pub fn fmt_f64(value: f64) -> String {
    if value.is_infinite() {
        return if value > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    format!("{value:.6}")
}
