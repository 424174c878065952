//! `match-corpus`: map an external corpus (social posts) onto narratives and
//! compare its narrative distribution to the aggregate.

use crate::cmd::analyze::{retained_clusters, snapshot_provenance};
use crate::config::PipelineConfig;
use crate::output::{fmt_f64, Report};
use crate::state::{read_jsonl, DataError, DataRoot};
use anyhow::Result;
use narratives::clusterer::ClusterId;
use narratives::fingerprints::corpus_similarity;
use narratives::watch::{match_corpus, MatchMode, QueryPassage};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Deserialize)]
struct PostRecord {
    id: String,
    vector: Vec<f64>,
    #[serde(default)]
    #[allow(dead_code)]
    text: Option<String>,
}

#[derive(Serialize)]
struct MatchRow {
    id: String,
    cluster_id: Option<ClusterId>,
    similarity: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    config: &PipelineConfig,
    root: &DataRoot,
    input: &Path,
    mode: MatchMode,
    threshold: Option<f64>,
    with_jsd: bool,
    output: Option<&PathBuf>,
    jsonl: bool,
) -> Result<()> {
    let store = root.load_existing_store(config)?;
    let retained = retained_clusters(config, root, &store)?;
    let posts: Vec<PostRecord> = read_jsonl(input)?;
    let queries: Vec<QueryPassage> = posts
        .iter()
        .map(|p| {
            QueryPassage::new(p.id.clone(), p.vector.clone(), config.dimension)
                .map_err(|e| DataError(format!("{}: {e}", p.id)).into())
        })
        .collect::<Result<_>>()?;
    let threshold = threshold.unwrap_or(config.match_threshold);
    let results = match_corpus(&store, &retained, &queries, threshold, mode);

    let mut matched = 0u64;
    let mut narrative_counts: BTreeMap<ClusterId, u64> = BTreeMap::new();
    let mut report = Report::open(output, jsonl, &snapshot_provenance(config, &store))?;
    report.header(&["id", "cluster_id", "similarity"])?;
    for result in &results {
        if result.matches.is_empty() {
            report.row(
                &[result.query_id.clone(), "-".into(), "-".into()],
                &MatchRow {
                    id: result.query_id.clone(),
                    cluster_id: None,
                    similarity: None,
                },
            )?;
            continue;
        }
        matched += 1;
        for m in &result.matches {
            *narrative_counts.entry(m.cluster_id).or_insert(0) += 1;
            report.row(
                &[
                    result.query_id.clone(),
                    m.cluster_id.to_string(),
                    fmt_f64(m.best_similarity),
                ],
                &MatchRow {
                    id: result.query_id.clone(),
                    cluster_id: Some(m.cluster_id),
                    similarity: Some(m.best_similarity),
                },
            )?;
        }
    }
    let total = results.len() as u64;
    let pct = if total == 0 {
        0.0
    } else {
        matched as f64 / total as f64 * 100.0
    };
    report.note(&format!("matched {matched}/{total} ({pct:.2}%)"))?;
    if with_jsd {
        let counts: Vec<u64> = retained
            .iter()
            .map(|id| narrative_counts.get(id).copied().unwrap_or(0))
            .collect();
        let jsd = corpus_similarity(&store, &counts, &retained, config.epsilon)
            .map_err(|e| DataError(e.to_string()))?;
        report.note(&format!("jsd_vs_aggregate {}", fmt_f64(jsd)))?;
    }
    report.finish()
}
