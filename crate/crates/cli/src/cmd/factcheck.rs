//! `factcheck` subcommands: load, match, classify, efficacy, sweep.

use crate::cmd::analyze::{require_endpoint, retained_clusters, snapshot_provenance};
use crate::config::PipelineConfig;
use crate::output::{fmt_f64, Report};
use crate::state::{read_jsonl, write_jsonl, DataError, DataRoot, ExternalError};
use anyhow::{bail, Result};
use narratives::clients::{EndpointConfig, HttpRefutationClassifier};
use narratives::watch::{
    apply_verdicts, classify_pairs, factcheck_efficacy, match_factchecks, threshold_sweep,
    FactCheckMatch, FactCheckRecord, RawFactCheckRecord, Verdict,
};
use serde::Serialize;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

fn load_factchecks(config: &PipelineConfig, root: &DataRoot) -> Result<Vec<FactCheckRecord>> {
    let path = root.factchecks_path();
    if !path.exists() {
        bail!(DataError(
            "no fact-check corpus loaded; run `factcheck load` first".into()
        ));
    }
    let raw: Vec<RawFactCheckRecord> = read_jsonl(&path)?;
    raw.into_iter()
        .map(|r| {
            FactCheckRecord::from_raw(r, config.dimension)
                .map_err(|e| DataError(e.to_string()).into())
        })
        .collect()
}

fn load_matches(root: &DataRoot) -> Result<Vec<FactCheckMatch>> {
    let path = root.factcheck_matches_path();
    if !path.exists() {
        bail!(DataError(
            "no fact-check matches; run `factcheck match` first".into()
        ));
    }
    read_jsonl(&path)
}

#[derive(Serialize)]
struct CountRow {
    metric: String,
    count: u64,
}

fn counts_report(
    config: &PipelineConfig,
    rows: Vec<(String, u64)>,
    output: Option<&PathBuf>,
    jsonl: bool,
) -> Result<()> {
    let provenance = crate::output::Provenance::new(config.hash(), None);
    let mut report = Report::open(output, jsonl, &provenance)?;
    report.header(&["metric", "count"])?;
    for (metric, count) in rows {
        report.row(
            &[metric.clone(), count.to_string()],
            &CountRow { metric, count },
        )?;
    }
    report.finish()
}

/// Validates and stores the fact-check corpus.
pub fn load(
    config: &PipelineConfig,
    root: &DataRoot,
    input: &Path,
    output: Option<&PathBuf>,
    jsonl: bool,
) -> Result<()> {
    let raw: Vec<RawFactCheckRecord> = read_jsonl(input)?;
    let mut accepted = Vec::new();
    let mut rejected = 0u64;
    let mut passages = 0u64;
    for record in raw {
        match FactCheckRecord::from_raw(record.clone(), config.dimension) {
            Ok(ok) => {
                passages += ok.passages.len() as u64;
                accepted.push(record);
            }
            Err(_) => rejected += 1,
        }
    }
    if accepted.is_empty() {
        bail!(DataError("no valid fact-check records".into()));
    }
    accepted.sort_by(|a, b| a.factcheck_id.cmp(&b.factcheck_id));
    write_jsonl(&root.factchecks_path(), &accepted)?;
    counts_report(
        config,
        vec![
            ("factchecks_loaded".into(), accepted.len() as u64),
            ("passages".into(), passages),
            ("rejected".into(), rejected),
        ],
        output,
        jsonl,
    )
}

/// Maps fact-check passages onto all narratives above the threshold.
pub fn match_cmd(
    config: &PipelineConfig,
    root: &DataRoot,
    threshold: Option<f64>,
    output: Option<&PathBuf>,
    jsonl: bool,
) -> Result<()> {
    let store = root.load_existing_store(config)?;
    let retained = retained_clusters(config, root, &store)?;
    let factchecks = load_factchecks(config, root)?;
    let threshold = threshold.unwrap_or(config.match_threshold);
    let matches = match_factchecks(&store, &retained, &factchecks, threshold);
    write_jsonl(&root.factcheck_matches_path(), &matches)?;

    let orgs: BTreeSet<&str> = matches.iter().map(|m| m.org.as_str()).collect();
    let mut rows = vec![
        ("factchecks".into(), factchecks.len() as u64),
        ("matches".into(), matches.len() as u64),
        (
            "matched_pairs".into(),
            matches.iter().map(|m| m.matched_pairs.len() as u64).sum(),
        ),
    ];
    for org in orgs {
        let narratives: BTreeSet<_> = matches
            .iter()
            .filter(|m| m.org == org)
            .map(|m| m.cluster_id)
            .collect();
        rows.push((format!("narratives_matched_{org}"), narratives.len() as u64));
    }
    counts_report(config, rows, output, jsonl)
}

/// Sends matched pairs to the external classifier and stores verdicts.
pub fn classify(
    config: &PipelineConfig,
    root: &DataRoot,
    classifier_url: Option<String>,
    output: Option<&PathBuf>,
    jsonl: bool,
) -> Result<()> {
    let store = root.load_existing_store(config)?;
    let factchecks = load_factchecks(config, root)?;
    let mut matches = load_matches(root)?;
    let url = require_endpoint(classifier_url, &config.classifier_endpoint, "classifier")?;
    let classifier = HttpRefutationClassifier {
        config: EndpointConfig {
            url,
            timeout_ms: config.endpoint_timeout_ms,
            max_retries: config.endpoint_retries,
        },
    };
    let outcome = classify_pairs(&store, &factchecks, &matches, &classifier);
    apply_verdicts(&mut matches, &outcome);
    write_jsonl(&root.factcheck_matches_path(), &matches)?;

    let refuted = matches
        .iter()
        .filter(|m| m.verdict == Verdict::Refutes)
        .count() as u64;
    let pending = matches
        .iter()
        .filter(|m| m.verdict == Verdict::Pending)
        .count() as u64;
    counts_report(
        config,
        vec![
            ("classified_pairs".into(), outcome.classified_pairs),
            ("failed_pairs".into(), outcome.failed_pairs),
            ("refuted_matches".into(), refuted),
            ("pending_matches".into(), pending),
        ],
        output,
        jsonl,
    )?;
    if outcome.classified_pairs == 0 && outcome.failed_pairs > 0 {
        bail!(ExternalError(
            "classifier unreachable: every pair failed".into()
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct EfficacyRow {
    org: String,
    narratives_factchecked: u64,
    median_articles_prior: f64,
    median_days_to_factcheck: f64,
    median_days_from_peak: f64,
    zero_day_factchecks: u64,
    pending_matches: u64,
}

/// Fact-check coverage metrics per organization.
pub fn efficacy(
    config: &PipelineConfig,
    root: &DataRoot,
    org: Option<String>,
    output: Option<&PathBuf>,
    jsonl: bool,
) -> Result<()> {
    let store = root.load_existing_store(config)?;
    let matches = load_matches(root)?;
    let orgs: Vec<String> = match org {
        Some(o) => vec![o],
        None => matches
            .iter()
            .map(|m| m.org.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let mut report = Report::open(output, jsonl, &snapshot_provenance(config, &store))?;
    report.header(&[
        "org",
        "narratives_factchecked",
        "median_articles_prior",
        "median_days_to_factcheck",
        "median_days_from_peak",
        "zero_day_factchecks",
        "pending_matches",
    ])?;
    for org in orgs {
        let e = factcheck_efficacy(&store, &matches, &org);
        report.row(
            &[
                e.org.clone(),
                e.narratives_factchecked.to_string(),
                fmt_f64(e.median_articles_prior),
                fmt_f64(e.median_days_to_factcheck),
                fmt_f64(e.median_days_from_peak),
                e.zero_day_factchecks.to_string(),
                e.pending_matches.to_string(),
            ],
            &EfficacyRow {
                org: e.org.clone(),
                narratives_factchecked: e.narratives_factchecked,
                median_articles_prior: e.median_articles_prior,
                median_days_to_factcheck: e.median_days_to_factcheck,
                median_days_from_peak: e.median_days_from_peak,
                zero_day_factchecks: e.zero_day_factchecks,
                pending_matches: e.pending_matches,
            },
        )?;
    }
    report.finish()
}

#[derive(Serialize)]
struct SweepOut {
    threshold: f64,
    org: String,
    narratives_matched: u64,
    narratives_factchecked: Option<u64>,
    median_days_to_factcheck: Option<f64>,
}

/// Recomputes matches (and efficacy with a classifier) across thresholds.
pub fn sweep(
    config: &PipelineConfig,
    root: &DataRoot,
    thresholds: &[f64],
    classifier_url: Option<String>,
    output: Option<&PathBuf>,
    jsonl: bool,
) -> Result<()> {
    let store = root.load_existing_store(config)?;
    let retained = retained_clusters(config, root, &store)?;
    let factchecks = load_factchecks(config, root)?;
    let endpoint = classifier_url.or_else(|| config.classifier_endpoint.clone());
    let classifier = endpoint.map(|url| HttpRefutationClassifier {
        config: EndpointConfig {
            url,
            timeout_ms: config.endpoint_timeout_ms,
            max_retries: config.endpoint_retries,
        },
    });
    let rows = threshold_sweep(
        &store,
        &retained,
        &factchecks,
        thresholds,
        classifier
            .as_ref()
            .map(|c| c as &dyn narratives::watch::RefutationClassifier),
    );
    let mut report = Report::open(output, jsonl, &snapshot_provenance(config, &store))?;
    report.header(&[
        "threshold",
        "org",
        "narratives_matched",
        "narratives_factchecked",
        "median_days_to_factcheck",
    ])?;
    for row in &rows {
        let (checked, med) = match &row.efficacy {
            Some(e) => (
                Some(e.narratives_factchecked),
                Some(e.median_days_to_factcheck),
            ),
            None => (None, None),
        };
        report.row(
            &[
                format!("{:.2}", row.threshold),
                row.org.clone(),
                row.narratives_matched.to_string(),
                checked.map_or("-".into(), |v| v.to_string()),
                med.map_or("-".into(), fmt_f64),
            ],
            &SweepOut {
                threshold: row.threshold,
                org: row.org.clone(),
                narratives_matched: row.narratives_matched,
                narratives_factchecked: checked,
                median_days_to_factcheck: med,
            },
        )?;
    }
    report.finish()
}
