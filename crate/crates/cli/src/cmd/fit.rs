//! `fit` (one day or a range) and `run-daily` (ingest → validate → fit →
//! curate → snapshot → ledger, atomically per day).

use crate::config::PipelineConfig;
use crate::output::{fmt_f64, Provenance, Report};
use crate::state::{read_jsonl, write_jsonl, DataError, DataRoot, FitLock, Ledger, LedgerEntry};
use anyhow::{bail, Result};
use chrono::NaiveDate;
use narratives::clusterer::NarrativeStore;
use narratives::embedding::RawEmbeddingRecord;
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Serialize)]
struct FitRow {
    date: NaiveDate,
    points_assigned: u64,
    clusters_created: u64,
    clusters_total: u64,
    iterations_run: u32,
    mean_assignment_similarity: f64,
    ingest_accepted: u64,
    ingest_rejected: u64,
    snapshot_id: String,
}

/// Commits one day into the store: stage-file ingest, partial fit, snapshot,
/// ledger entry.
fn commit_day(
    config: &PipelineConfig,
    root: &DataRoot,
    store: &mut NarrativeStore,
    ledger: &mut Ledger,
    day: NaiveDate,
) -> Result<FitRow> {
    let staged_path = root.staged_path(day);
    let (ingest_accepted, ingest_rejected) = if staged_path.exists() {
        let records: Vec<RawEmbeddingRecord> = read_jsonl(&staged_path)?;
        let report = store.passage_store_mut().ingest(records);
        (report.accepted, report.rejected)
    } else {
        (0, 0)
    };
    let report = store
        .partial_fit_day(day, &config.fit_config())
        .map_err(|e| DataError(e.to_string()))?;
    let snapshot_id = root.save_store(store, Some(day))?;
    let entry = LedgerEntry {
        date: day,
        report: report.clone(),
        snapshot_id: snapshot_id.clone(),
        config_hash: config.hash(),
    };
    ledger.append(entry)?;
    Ok(FitRow {
        date: day,
        points_assigned: report.points_assigned,
        clusters_created: report.clusters_created,
        clusters_total: store.cluster_count() as u64,
        iterations_run: report.iterations_run,
        mean_assignment_similarity: report.mean_assignment_similarity,
        ingest_accepted,
        ingest_rejected,
        snapshot_id,
    })
}

fn guard_no_skipped_days(root: &DataRoot, last: Option<NaiveDate>, first: NaiveDate) -> Result<()> {
    for staged in root.staged_days()? {
        let after_last = last.is_none_or(|l| staged > l);
        if after_last && staged < first {
            bail!(DataError(format!(
                "staged data for {staged} would be silently skipped by fitting {first}; fit it first"
            )));
        }
    }
    Ok(())
}

fn write_report(
    config: &PipelineConfig,
    rows: &[FitRow],
    output: Option<&PathBuf>,
    jsonl: bool,
) -> Result<()> {
    let provenance = Provenance::new(config.hash(), rows.last().map(|r| r.snapshot_id.clone()));
    let mut report = Report::open(output, jsonl, &provenance)?;
    report.header(&[
        "date",
        "points",
        "created",
        "clusters",
        "iterations",
        "mean_similarity",
        "ingested",
        "ingest_rejected",
        "snapshot",
    ])?;
    for row in rows {
        report.row(
            &[
                row.date.to_string(),
                row.points_assigned.to_string(),
                row.clusters_created.to_string(),
                row.clusters_total.to_string(),
                row.iterations_run.to_string(),
                fmt_f64(row.mean_assignment_similarity),
                row.ingest_accepted.to_string(),
                row.ingest_rejected.to_string(),
                row.snapshot_id.clone(),
            ],
            row,
        )?;
    }
    report.finish()
}

/// Fits one day or an inclusive day range.
pub fn fit(
    config: &PipelineConfig,
    root: &DataRoot,
    date: Option<NaiveDate>,
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
    output: Option<&PathBuf>,
    jsonl: bool,
) -> Result<()> {
    let (first, last_day) = match (date, from, to) {
        (Some(d), None, None) => (d, d),
        (None, Some(a), Some(b)) if a <= b => (a, b),
        _ => bail!(DataError(
            "pass either --date D or --from A --to B (A <= B)".into()
        )),
    };
    let _lock = FitLock::acquire(root)?;
    let mut store = root.load_store(config)?;
    let mut ledger = Ledger::load(root)?;
    if let Some(last) = ledger.last_date() {
        if first <= last {
            bail!(DataError(format!(
                "already_committed: day {first} is not after the last committed day {last}"
            )));
        }
    }
    guard_no_skipped_days(root, ledger.last_date(), first)?;

    let mut rows = Vec::new();
    let mut day = first;
    while day <= last_day {
        rows.push(commit_day(config, root, &mut store, &mut ledger, day)?);
        day = day.succ_opt().expect("date overflow");
    }
    write_report(config, &rows, output, jsonl)
}

/// Full daily cycle from raw inputs: article admission/segmentation
/// validation, embedding staging, fit, curation refresh.
pub fn run_daily(
    config: &PipelineConfig,
    root: &DataRoot,
    day: NaiveDate,
    articles_path: &Path,
    embeddings_path: &Path,
    output: Option<&PathBuf>,
    jsonl: bool,
) -> Result<()> {
    use narratives::corpus::{
        admit_article, normalize_text, segment_article, Admission, ArticleDoc,
    };

    let _lock = FitLock::acquire(root)?;
    let mut store = root.load_store(config)?;
    let mut ledger = Ledger::load(root)?;
    if let Some(last) = ledger.last_date() {
        if day <= last {
            bail!(DataError(format!(
                "already_committed: day {day} is not after the last committed day {last}"
            )));
        }
    }
    guard_no_skipped_days(root, ledger.last_date(), day)?;

    // Admission + segmentation: the embeddings must correspond to passages
    // of admitted same-day articles.
    let window = config.study_window();
    let articles: Vec<ArticleDoc> = read_jsonl(articles_path)?;
    let mut valid_passages: std::collections::BTreeSet<String> = Default::default();
    for article in &articles {
        if article.published_date != day {
            continue;
        }
        if let Admission::Admit = admit_article(article, &window) {
            let mut body = normalize_text(&article.body);
            if config.include_title {
                if let Some(title) = &article.title {
                    let title = normalize_text(title);
                    if !title.is_empty() {
                        body = format!("{title}\n{body}");
                    }
                }
            }
            let normalized = ArticleDoc {
                body,
                ..article.clone()
            };
            for p in segment_article(&normalized, config.max_tokens) {
                valid_passages.insert(p.passage_id.0);
            }
        }
    }

    let records: Vec<RawEmbeddingRecord> = read_jsonl(embeddings_path)?;
    let mut staged: Vec<RawEmbeddingRecord> = Vec::new();
    let mut unmatched = 0u64;
    for record in records {
        if record.published_date != day {
            continue;
        }
        if valid_passages.contains(&record.passage_id) {
            staged.push(record);
        } else {
            unmatched += 1;
        }
    }
    if staged.is_empty() {
        bail!(DataError(format!(
            "no embeddings for {day} correspond to admitted article passages ({unmatched} unmatched)"
        )));
    }
    staged.sort_by(|a, b| a.passage_id.cmp(&b.passage_id));
    write_jsonl(&root.staged_path(day), &staged)?;

    let row = commit_day(config, root, &mut store, &mut ledger, day)?;

    // Curation refresh for downstream read-only commands.
    let labels = narratives::curation::curate(&store, &config.curation_config(), None);
    write_jsonl(&root.labels_path(), &labels)?;

    write_report(config, &[row], output, jsonl)
}
