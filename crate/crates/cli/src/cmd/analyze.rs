//! Read-only analysis commands: `curate`, `communities`, `influence`,
//! `lag-profile`, and `trending`.

use crate::config::PipelineConfig;
use crate::output::{fmt_f64, Provenance, Report};
use crate::state::{read_jsonl, write_jsonl, DataError, DataRoot, ExternalError};
use anyhow::{bail, Result};
use narratives::clients::{EndpointConfig, HttpSummarizer};
use narratives::clusterer::{ClusterId, NarrativeStore};
use narratives::curation::{curate, filter_clusters, NarrativeLabel};
use narratives::fingerprints::{
    build_profiles, build_site_graph, community_top_narratives, louvain_communities, RankBucket,
};
use narratives::influence::{EffectRole, InfluenceAnalyzer, InfluenceError, RankFilter};
use narratives::watch::trending as trending_op;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;

pub fn snapshot_provenance(config: &PipelineConfig, store: &NarrativeStore) -> Provenance {
    let blob = store.snapshot_save();
    Provenance::new(config.hash(), Some(NarrativeStore::snapshot_id(&blob)))
}

/// Retained clusters: labels file when present, else a fresh filter pass.
pub fn retained_clusters(
    config: &PipelineConfig,
    root: &DataRoot,
    store: &NarrativeStore,
) -> Result<Vec<ClusterId>> {
    let labels_path = root.labels_path();
    if labels_path.exists() {
        let labels: Vec<NarrativeLabel> = read_jsonl(&labels_path)?;
        return Ok(labels.into_iter().map(|l| l.cluster_id).collect());
    }
    Ok(filter_clusters(store, &config.curation_config()))
}

pub fn run_curate(
    config: &PipelineConfig,
    root: &DataRoot,
    summarizer_url: Option<String>,
    output: Option<&PathBuf>,
    jsonl: bool,
) -> Result<()> {
    let store = root.load_existing_store(config)?;
    let endpoint = summarizer_url.or_else(|| config.summarizer_endpoint.clone());
    let client = endpoint.map(|url| HttpSummarizer {
        config: EndpointConfig {
            url,
            timeout_ms: config.endpoint_timeout_ms,
            max_retries: config.endpoint_retries,
        },
    });
    let labels = curate(
        &store,
        &config.curation_config(),
        client
            .as_ref()
            .map(|c| c as &dyn narratives::curation::SummarizerClient),
    );
    write_jsonl(&root.labels_path(), &labels)?;

    let mut report = Report::open(output, jsonl, &snapshot_provenance(config, &store))?;
    report.header(&[
        "cluster_id",
        "articles",
        "keywords",
        "summary_source",
        "summary",
    ])?;
    for label in &labels {
        let articles = store
            .cluster(label.cluster_id)
            .map_or(0, |c| c.article_count());
        report.row(
            &[
                label.cluster_id.to_string(),
                articles.to_string(),
                label.keywords.join(" "),
                if label.summary_is_fallback {
                    "fallback".into()
                } else {
                    "summarizer".into()
                },
                label.summary.clone().unwrap_or_default(),
            ],
            label,
        )?;
    }
    report.finish()
}

#[derive(Debug, Deserialize)]
struct RankRecord {
    domain: String,
    #[serde(default)]
    rank: Option<RankBucket>,
}

pub fn load_ranks(path: Option<&PathBuf>) -> Result<BTreeMap<String, RankBucket>> {
    let Some(path) = path else {
        return Ok(BTreeMap::new());
    };
    let records: Vec<RankRecord> = read_jsonl(path)?;
    Ok(records
        .into_iter()
        .map(|r| (r.domain, r.rank.unwrap_or(RankBucket::Unranked)))
        .collect())
}

#[derive(Serialize)]
struct PartitionRow {
    domain: String,
    community: u32,
}

#[derive(Serialize)]
struct EdgeRow {
    domain_a: String,
    domain_b: String,
    weight: f64,
}

#[derive(Serialize)]
struct TopNarrativeRow {
    community: u32,
    cluster_id: ClusterId,
    articles: u64,
}

#[allow(clippy::too_many_arguments)]
pub fn run_communities(
    config: &PipelineConfig,
    root: &DataRoot,
    ranks_path: Option<&PathBuf>,
    edges_out: Option<&PathBuf>,
    top_out: Option<&PathBuf>,
    top_n: usize,
    output: Option<&PathBuf>,
    jsonl: bool,
) -> Result<()> {
    let store = root.load_existing_store(config)?;
    let retained = retained_clusters(config, root, &store)?;
    if retained.is_empty() {
        bail!(DataError("no retained narratives; run curate first".into()));
    }
    let ranks = load_ranks(ranks_path)?;
    let profiles = build_profiles(&store, &retained, &ranks, config.epsilon)
        .map_err(|e| DataError(e.to_string()))?;
    let graph =
        build_site_graph(&profiles, config.prune_below).map_err(|e| DataError(e.to_string()))?;
    let partition = louvain_communities(&graph, config.resolution, config.rng_seed);

    let provenance = snapshot_provenance(config, &store);
    if let Some(path) = edges_out {
        let mut edges = Report::open(Some(path), jsonl, &provenance)?;
        edges.header(&["domain_a", "domain_b", "weight"])?;
        for &(a, b, w) in &graph.edges {
            edges.row(
                &[graph.nodes[a].clone(), graph.nodes[b].clone(), fmt_f64(w)],
                &EdgeRow {
                    domain_a: graph.nodes[a].clone(),
                    domain_b: graph.nodes[b].clone(),
                    weight: w,
                },
            )?;
        }
        edges.finish()?;
    }
    if let Some(path) = top_out {
        let top = community_top_narratives(&store, &partition, &retained, top_n);
        let mut out = Report::open(Some(path), jsonl, &provenance)?;
        out.header(&["community", "cluster_id", "articles"])?;
        for (community, narratives) in top {
            for (cluster_id, articles) in narratives {
                out.row(
                    &[
                        community.to_string(),
                        cluster_id.to_string(),
                        articles.to_string(),
                    ],
                    &TopNarrativeRow {
                        community,
                        cluster_id,
                        articles,
                    },
                )?;
            }
        }
        out.finish()?;
    }

    let mut report = Report::open(output, jsonl, &provenance)?;
    report.note(&format!(
        "communities={} modularity={:.6}",
        partition.community_count(),
        partition.modularity
    ))?;
    report.header(&["domain", "community"])?;
    for (domain, community) in &partition.communities {
        report.row(
            &[domain.clone(), community.to_string()],
            &PartitionRow {
                domain: domain.clone(),
                community: *community,
            },
        )?;
    }
    report.finish()
}

fn effect_columns() -> [&'static str; 16] {
    [
        "domain",
        "role",
        "rank_bucket",
        "eligible",
        "comparison",
        "wtd_ext_delta",
        "cohens_d",
        "u_statistic",
        "p_value",
        "significant",
        "peak_delta_days",
        "peak_cohens_d",
        "peak_p_value",
        "peak_significant",
        "num_comparisons",
        "rng_seed",
    ]
}

pub fn run_influence(
    config: &PipelineConfig,
    root: &DataRoot,
    ranks_path: Option<&PathBuf>,
    domain: Option<String>,
    roles: &[EffectRole],
    output: Option<&PathBuf>,
    jsonl: bool,
) -> Result<()> {
    let store = root.load_existing_store(config)?;
    let retained = retained_clusters(config, root, &store)?;
    let ranks = load_ranks(ranks_path)?;
    let analyzer = InfluenceAnalyzer::new(&store, &retained, &ranks, config.influence_config())
        .map_err(|e| DataError(e.to_string()))?;

    let mut report = Report::open(output, jsonl, &snapshot_provenance(config, &store))?;
    report.header(&effect_columns())?;
    let bucket_of = |d: &str| ranks.get(d).copied().unwrap_or(RankBucket::Unranked);
    let emit = |report: &mut Report, r: &narratives::influence::EffectReport| -> Result<()> {
        let bucket = bucket_of(&r.domain);
        let bucket_label = match bucket {
            RankBucket::Unranked => "unranked".to_string(),
            other => other.ceiling().to_string(),
        };
        report.row(
            &[
                r.domain.clone(),
                r.role.to_string(),
                bucket_label,
                r.eligible_narratives.to_string(),
                r.comparison_narratives.to_string(),
                fmt_f64(r.weighted_external_delta),
                fmt_f64(r.cohens_d),
                fmt_f64(r.u_statistic),
                format!("{:.3e}", r.p_value),
                r.significant.to_string(),
                fmt_f64(r.peak_delta_days),
                fmt_f64(r.peak_cohens_d),
                format!("{:.3e}", r.peak_p_value),
                r.peak_significant.to_string(),
                r.num_comparisons.to_string(),
                r.rng_seed.to_string(),
            ],
            r,
        )
    };

    match domain {
        Some(domain) => {
            if !store.passage_store().domains().contains(&domain) {
                bail!(DataError(format!("unknown domain {domain:?}")));
            }
            for &role in roles {
                let result = match role {
                    EffectRole::Originate => analyzer.origination_effect(&domain),
                    EffectRole::Amplify => analyzer.amplification_effect(&domain),
                };
                match result {
                    Ok(r) => emit(&mut report, &r)?,
                    Err(InfluenceError::Skipped { reason, .. }) => {
                        report.note(&format!("skipped {domain} ({role}): {reason}"))?;
                    }
                    Err(e) => bail!(DataError(e.to_string())),
                }
            }
        }
        None => {
            for &role in roles {
                let (reports, skips) = analyzer.all_effects(role);
                for r in &reports {
                    emit(&mut report, r)?;
                }
                for skip in skips {
                    report.note(&format!("{skip}"))?;
                }
            }
        }
    }
    report.finish()
}

#[derive(Serialize)]
struct LagRow {
    offset_days: i64,
    articles: u64,
}

pub fn run_lag_profile(
    config: &PipelineConfig,
    root: &DataRoot,
    ranks_path: Option<&PathBuf>,
    at_most: Option<u64>,
    above: Option<u64>,
    output: Option<&PathBuf>,
    jsonl: bool,
) -> Result<()> {
    let store = root.load_existing_store(config)?;
    let retained = retained_clusters(config, root, &store)?;
    let ranks = load_ranks(ranks_path)?;
    let analyzer = InfluenceAnalyzer::new(&store, &retained, &ranks, config.influence_config())
        .map_err(|e| DataError(e.to_string()))?;
    let filter = match (at_most, above) {
        (Some(c), None) => RankFilter::at_most(c),
        (None, Some(c)) => RankFilter::above(c),
        (None, None) => RankFilter::all(),
        _ => bail!(DataError("pass at most one of --at-most / --above".into())),
    };
    let profile = analyzer.lag_profile(&filter);
    let mut report = Report::open(output, jsonl, &snapshot_provenance(config, &store))?;
    report.note(&format!(
        "articles={} proportion_before_peak={:.6}",
        profile.total_articles, profile.proportion_before_peak
    ))?;
    report.header(&["offset_days", "articles"])?;
    for (&offset_days, &articles) in &profile.histogram {
        report.row(
            &[offset_days.to_string(), articles.to_string()],
            &LagRow {
                offset_days,
                articles,
            },
        )?;
    }
    report.finish()
}

#[derive(Serialize)]
struct TrendRow {
    cluster_id: ClusterId,
    current_week: u64,
    previous_week: u64,
    pct_increase: String,
    is_new: bool,
    keywords: String,
}

pub fn run_trending(
    config: &PipelineConfig,
    root: &DataRoot,
    as_of: chrono::NaiveDate,
    min_volume: Option<u64>,
    output: Option<&PathBuf>,
    jsonl: bool,
) -> Result<()> {
    let store = root.load_existing_store(config)?;
    let retained = retained_clusters(config, root, &store)?;
    let entries = trending_op(
        &store,
        &retained,
        as_of,
        min_volume.unwrap_or(config.min_weekly_volume),
    )
    .map_err(|e| DataError(e.to_string()))?;

    let keywords: BTreeMap<ClusterId, String> = if root.labels_path().exists() {
        let labels: Vec<NarrativeLabel> = read_jsonl(&root.labels_path())?;
        labels
            .into_iter()
            .map(|l| (l.cluster_id, l.keywords.join(" ")))
            .collect()
    } else {
        BTreeMap::new()
    };

    let mut report = Report::open(output, jsonl, &snapshot_provenance(config, &store))?;
    report.header(&[
        "cluster_id",
        "current_week",
        "previous_week",
        "pct_increase",
        "is_new",
        "keywords",
    ])?;
    for entry in &entries {
        let pct = if entry.is_new {
            "new".to_string()
        } else {
            format!("{:+.1}%", entry.pct_increase * 100.0)
        };
        let kw = keywords.get(&entry.cluster_id).cloned().unwrap_or_default();
        report.row(
            &[
                entry.cluster_id.to_string(),
                entry.current_week_count.to_string(),
                entry.previous_week_count.to_string(),
                pct.clone(),
                entry.is_new.to_string(),
                kw.clone(),
            ],
            &TrendRow {
                cluster_id: entry.cluster_id,
                current_week: entry.current_week_count,
                previous_week: entry.previous_week_count,
                pct_increase: pct,
                is_new: entry.is_new,
                keywords: kw,
            },
        )?;
    }
    report.finish()
}

/// Validates that an external endpoint flag or config value exists.
pub fn require_endpoint(
    flag: Option<String>,
    config_value: &Option<String>,
    what: &str,
) -> Result<String> {
    flag.or_else(|| config_value.clone()).ok_or_else(|| {
        ExternalError(format!(
            "no {what} endpoint configured (flag or config key)"
        ))
        .into()
    })
}
