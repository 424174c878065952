//! `ingest articles` (admission + segmentation) and `ingest embeddings`
//! (validation + staging by day).

use crate::config::PipelineConfig;
use crate::output::{Provenance, Report};
use crate::state::{read_jsonl, write_jsonl, DataError, DataRoot, Ledger};
use anyhow::{bail, Result};
use narratives::corpus::{admit_article, normalize_text, segment_article, Admission, ArticleDoc};
use narratives::embedding::{EmbeddingVector, RawEmbeddingRecord};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

#[derive(Serialize)]
struct PassageOut {
    passage_id: String,
    article_id: String,
    domain: String,
    published_date: chrono::NaiveDate,
    ordinal: u32,
    token_count: usize,
    text: String,
}

#[derive(Serialize)]
struct CountRow {
    metric: String,
    count: u64,
}

/// Admits and segments articles; writes plain passages for an external
/// embedder.
pub fn articles(
    config: &PipelineConfig,
    input: &Path,
    output: &Path,
    report_output: Option<&PathBuf>,
    jsonl: bool,
) -> Result<()> {
    let window = config.study_window();
    let articles: Vec<ArticleDoc> = read_jsonl(input)?;
    let mut passages = Vec::new();
    let mut admitted = 0u64;
    let mut rejected: BTreeMap<String, u64> = BTreeMap::new();
    for article in &articles {
        match admit_article(article, &window) {
            Admission::Reject(reason) => {
                *rejected.entry(reason.to_string()).or_insert(0) += 1;
            }
            Admission::Admit => {
                admitted += 1;
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
                    passages.push(PassageOut {
                        passage_id: p.passage_id.0,
                        article_id: p.article_id.0,
                        domain: article.domain.clone(),
                        published_date: article.published_date,
                        ordinal: p.ordinal,
                        token_count: p.token_count,
                        text: p.text,
                    });
                }
            }
        }
    }
    write_jsonl(output, &passages)?;

    let provenance = Provenance::new(config.hash(), None);
    let mut report = Report::open(report_output, jsonl, &provenance)?;
    report.header(&["metric", "count"])?;
    let mut rows = vec![
        ("articles_read".to_string(), articles.len() as u64),
        ("articles_admitted".to_string(), admitted),
        ("passages_emitted".to_string(), passages.len() as u64),
    ];
    for (reason, count) in &rejected {
        rows.push((format!("rejected_{reason}"), *count));
    }
    for (metric, count) in rows {
        report.row(
            &[metric.clone(), count.to_string()],
            &CountRow { metric, count },
        )?;
    }
    report.finish()
}

#[derive(serde::Deserialize)]
struct PassageIn {
    passage_id: String,
    article_id: String,
    domain: String,
    published_date: chrono::NaiveDate,
    ordinal: u32,
    text: String,
}

/// Embeds plain passages through the remote provider and writes standard
/// embedding records.
pub fn embed_remote(
    config: &PipelineConfig,
    input: &Path,
    output: &Path,
    endpoint: Option<String>,
    batch_size: usize,
) -> Result<()> {
    use crate::state::ExternalError;
    use narratives::clients::{EndpointConfig, HttpEmbeddingProvider};

    let url = endpoint
        .or_else(|| config.embedding_endpoint.clone())
        .ok_or_else(|| ExternalError("no embedding endpoint configured".into()))?;
    let provider = HttpEmbeddingProvider {
        config: EndpointConfig {
            url,
            timeout_ms: config.endpoint_timeout_ms,
            max_retries: config.endpoint_retries,
        },
    };
    let passages: Vec<PassageIn> = read_jsonl(input)?;
    let mut records = Vec::with_capacity(passages.len());
    for batch in passages.chunks(batch_size.max(1)) {
        let texts: Vec<String> = batch.iter().map(|p| p.text.clone()).collect();
        let vectors = narratives::embedding::embed_remote(&texts, &provider, config.dimension)
            .map_err(|e| ExternalError(e.to_string()))?;
        for (p, v) in batch.iter().zip(vectors) {
            records.push(RawEmbeddingRecord {
                passage_id: p.passage_id.clone(),
                article_id: p.article_id.clone(),
                domain: p.domain.clone(),
                published_date: p.published_date,
                ordinal: p.ordinal,
                vector: v.as_slice().to_vec(),
                text: Some(p.text.clone()),
            });
        }
    }
    write_jsonl(output, &records)?;
    println!("embedded {} passages", records.len());
    Ok(())
}

/// Validates embedding records and stages the survivors by publication day.
pub fn embeddings(
    config: &PipelineConfig,
    root: &DataRoot,
    input: &Path,
    report_output: Option<&PathBuf>,
    jsonl: bool,
) -> Result<()> {
    let records: Vec<RawEmbeddingRecord> = read_jsonl(input)?;
    let store = root.load_store(config)?;
    let ledger = Ledger::load(root)?;
    let window = config.study_window();

    let mut seen: BTreeSet<String> = store
        .passage_store()
        .passages()
        .map(|p| p.passage_id.as_str().to_string())
        .collect();
    // Ids already staged for any day.
    let mut staged: BTreeMap<chrono::NaiveDate, Vec<RawEmbeddingRecord>> = BTreeMap::new();
    for day in root.staged_days()? {
        let existing: Vec<RawEmbeddingRecord> = read_jsonl(&root.staged_path(day))?;
        for r in &existing {
            seen.insert(r.passage_id.clone());
        }
        staged.insert(day, existing);
    }

    let mut accepted = 0u64;
    let mut renormalized = 0u64;
    let mut rejected: BTreeMap<String, u64> = BTreeMap::new();
    let reject = |reasons: &mut BTreeMap<String, u64>, reason: &str| {
        *reasons.entry(reason.to_string()).or_insert(0) += 1;
    };
    let mut touched: BTreeSet<chrono::NaiveDate> = BTreeSet::new();
    for record in records {
        if !window.contains(record.published_date) {
            reject(&mut rejected, "out_of_window");
            continue;
        }
        if ledger
            .last_date()
            .is_some_and(|last| record.published_date <= last)
        {
            reject(&mut rejected, "day_already_committed");
            continue;
        }
        match EmbeddingVector::new(record.vector.clone(), config.dimension) {
            Err(narratives::embedding::EmbeddingError::BadDimension { .. }) => {
                reject(&mut rejected, "bad_dimension");
                continue;
            }
            Err(narratives::embedding::EmbeddingError::ZeroVector) => {
                reject(&mut rejected, "zero_vector");
                continue;
            }
            Err(_) => {
                reject(&mut rejected, "non_finite");
                continue;
            }
            Ok((_, warned)) => {
                if warned {
                    renormalized += 1;
                }
            }
        }
        if !seen.insert(record.passage_id.clone()) {
            reject(&mut rejected, "duplicate_passage_id");
            continue;
        }
        accepted += 1;
        touched.insert(record.published_date);
        staged
            .entry(record.published_date)
            .or_default()
            .push(record);
    }

    for day in &touched {
        let mut batch = staged.remove(day).unwrap_or_default();
        batch.sort_by(|a, b| a.passage_id.cmp(&b.passage_id));
        write_jsonl(&root.staged_path(*day), &batch)?;
    }

    let provenance = Provenance::new(config.hash(), None);
    let mut report = Report::open(report_output, jsonl, &provenance)?;
    report.header(&["metric", "count"])?;
    let mut rows = vec![
        ("accepted".to_string(), accepted),
        ("renormalized_warnings".to_string(), renormalized),
        ("rejected".to_string(), rejected.values().sum::<u64>()),
    ];
    for (reason, count) in &rejected {
        rows.push((format!("rejected_{reason}"), *count));
    }
    for (metric, count) in rows {
        report.row(
            &[metric.clone(), count.to_string()],
            &CountRow { metric, count },
        )?;
    }
    report.finish()?;
    if accepted == 0 && !rejected.is_empty() {
        bail!(DataError("no embedding records accepted".into()));
    }
    Ok(())
}
