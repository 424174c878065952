//! `export` (clusters, ledger, labels) and `snapshot` (save, load, list).

use crate::cmd::analyze::snapshot_provenance;
use crate::config::PipelineConfig;
use crate::output::{fmt_f64, Provenance, Report};
use crate::state::{read_jsonl, write_atomic, DataError, DataRoot, Ledger};
use anyhow::{bail, Result};
use narratives::clusterer::NarrativeStore;
use narratives::curation::NarrativeLabel;
use serde::Serialize;
use std::path::{Path, PathBuf};

pub fn clusters(
    config: &PipelineConfig,
    root: &DataRoot,
    include_centroids: bool,
    output: Option<&PathBuf>,
) -> Result<()> {
    let store = root.load_existing_store(config)?;
    let provenance = snapshot_provenance(config, &store);
    let mut sink: Box<dyn std::io::Write> = match output {
        Some(path) => Box::new(std::fs::File::create(path)?),
        None => Box::new(std::io::stdout()),
    };
    let meta = serde_json::json!({ "meta": provenance });
    writeln!(sink, "{meta}")?;
    store.export_clusters_jsonl(include_centroids, &mut sink)?;
    sink.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct LedgerRow {
    date: chrono::NaiveDate,
    points: u64,
    clusters_created: u64,
    iterations: u32,
    mean_similarity: f64,
    snapshot_id: String,
    config_hash: String,
}

pub fn ledger(
    config: &PipelineConfig,
    root: &DataRoot,
    output: Option<&PathBuf>,
    jsonl: bool,
) -> Result<()> {
    let ledger = Ledger::load(root)?;
    let provenance = Provenance::new(config.hash(), None);
    let mut report = Report::open(output, jsonl, &provenance)?;
    report.header(&[
        "date",
        "points",
        "created",
        "iterations",
        "mean_similarity",
        "snapshot",
        "config",
    ])?;
    for entry in &ledger.entries {
        report.row(
            &[
                entry.date.to_string(),
                entry.report.points_assigned.to_string(),
                entry.report.clusters_created.to_string(),
                entry.report.iterations_run.to_string(),
                fmt_f64(entry.report.mean_assignment_similarity),
                entry.snapshot_id.clone(),
                entry.config_hash.clone(),
            ],
            &LedgerRow {
                date: entry.date,
                points: entry.report.points_assigned,
                clusters_created: entry.report.clusters_created,
                iterations: entry.report.iterations_run,
                mean_similarity: entry.report.mean_assignment_similarity,
                snapshot_id: entry.snapshot_id.clone(),
                config_hash: entry.config_hash.clone(),
            },
        )?;
    }
    report.finish()
}

pub fn labels(
    config: &PipelineConfig,
    root: &DataRoot,
    output: Option<&PathBuf>,
    jsonl: bool,
) -> Result<()> {
    let path = root.labels_path();
    if !path.exists() {
        bail!(DataError("no labels; run `curate` first".into()));
    }
    let store = root.load_existing_store(config)?;
    let labels: Vec<NarrativeLabel> = read_jsonl(&path)?;
    let mut report = Report::open(output, jsonl, &snapshot_provenance(config, &store))?;
    report.header(&[
        "cluster_id",
        "keywords",
        "summary_source",
        "representatives",
        "summary",
    ])?;
    for label in &labels {
        report.row(
            &[
                label.cluster_id.to_string(),
                label.keywords.join(" "),
                if label.summary_is_fallback {
                    "fallback".into()
                } else {
                    "summarizer".into()
                },
                label
                    .representative_passage_ids
                    .iter()
                    .map(|p| p.as_str())
                    .collect::<Vec<_>>()
                    .join(","),
                label.summary.clone().unwrap_or_default(),
            ],
            label,
        )?;
    }
    report.finish()
}

pub fn snapshot_save(root: &DataRoot, output: &Path) -> Result<()> {
    let source = root.store_path();
    if !source.exists() {
        bail!(DataError("no store snapshot to save".into()));
    }
    let bytes = std::fs::read(&source)?;
    write_atomic(output, &bytes)?;
    println!(
        "saved snapshot {} ({} bytes)",
        NarrativeStore::snapshot_id(&bytes),
        bytes.len()
    );
    Ok(())
}

pub fn snapshot_load(root: &DataRoot, input: &Path) -> Result<()> {
    let bytes = std::fs::read(input)?;
    let store = NarrativeStore::snapshot_load(&bytes)
        .map_err(|e| DataError(format!("{}: {e}", input.display())))?;
    store
        .validate()
        .map_err(|e| DataError(format!("snapshot inconsistent: {e}")))?;
    write_atomic(&root.store_path(), &bytes)?;
    println!(
        "installed snapshot {} ({} clusters, {} passages)",
        NarrativeStore::snapshot_id(&bytes),
        store.cluster_count(),
        store.passage_store().len()
    );
    println!("note: the run ledger is not rewritten; keep it consistent with the snapshot");
    Ok(())
}

pub fn snapshot_list(root: &DataRoot) -> Result<()> {
    let store_path = root.store_path();
    if store_path.exists() {
        let bytes = std::fs::read(&store_path)?;
        println!(
            "current\t{}\t{} bytes",
            NarrativeStore::snapshot_id(&bytes),
            bytes.len()
        );
    } else {
        println!("current\t(none)");
    }
    let dir = root.path().join("snapshots");
    let mut entries: Vec<_> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "snap"))
        .collect();
    entries.sort();
    for path in entries {
        let bytes = std::fs::read(&path)?;
        println!(
            "{}\t{}\t{} bytes",
            path.file_stem().unwrap_or_default().to_string_lossy(),
            NarrativeStore::snapshot_id(&bytes),
            bytes.len()
        );
    }
    Ok(())
}
