//! Trending narratives, external-corpus matching (social posts and
//! fact-checks), refutation classification, and fact-check efficacy metrics.

use crate::clients::ClientError;
use crate::clusterer::{ClusterId, NarrativeStore};
use crate::corpus::PassageId;
use crate::embedding::{cosine_similarity, EmbeddingVector};
use crate::influence::NarrativeTimeline;
use crate::stats::median;
use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Margin subtracted from the threshold for the centroid pre-filter before
/// the exact passage scan.
pub const PREFILTER_MARGIN: f64 = 0.1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum WatchError {
    #[error("need at least 14 days of committed history before {0}")]
    InsufficientHistory(NaiveDate),
    #[error("embedding: {0}")]
    Embedding(String),
}

/// One narrative's week-over-week movement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendEntry {
    pub cluster_id: ClusterId,
    pub current_week_count: u64,
    pub previous_week_count: u64,
    /// current/previous − 1; meaningless when `is_new`.
    pub pct_increase: f64,
    /// Previous week had zero articles.
    pub is_new: bool,
}

/// Week-over-week article volume ranking over the retained narratives.
///
/// Current week is (as_of−7, as_of], previous week is (as_of−14, as_of−7].
/// Entries with a current volume under `min_weekly_volume` are dropped. New
/// narratives (previous = 0) rank first by current volume; the rest rank by
/// percentage increase. The full order is (new flag, pct, current, id).
pub fn trending(
    store: &NarrativeStore,
    retained: &[ClusterId],
    as_of: NaiveDate,
    min_weekly_volume: u64,
) -> Result<Vec<TrendEntry>, WatchError> {
    let earliest = store
        .committed_days()
        .next()
        .ok_or(WatchError::InsufficientHistory(as_of))?;
    if as_of - earliest < Duration::days(13) {
        return Err(WatchError::InsufficientHistory(as_of));
    }

    let current_start = as_of - Duration::days(6);
    let previous_start = as_of - Duration::days(13);
    let previous_end = as_of - Duration::days(7);

    let mut entries = Vec::new();
    for &cluster_id in retained {
        let Some(cluster) = store.cluster(cluster_id) else {
            continue;
        };
        let mut current = 0u64;
        let mut previous = 0u64;
        for (_, article) in cluster.articles() {
            let (_, date) = store
                .passage_store()
                .article(article)
                .expect("cluster article in store");
            if date >= current_start && date <= as_of {
                current += 1;
            } else if date >= previous_start && date <= previous_end {
                previous += 1;
            }
        }
        if current < min_weekly_volume {
            continue;
        }
        let is_new = previous == 0;
        let pct_increase = if is_new {
            f64::INFINITY
        } else {
            current as f64 / previous as f64 - 1.0
        };
        entries.push(TrendEntry {
            cluster_id,
            current_week_count: current,
            previous_week_count: previous,
            pct_increase,
            is_new,
        });
    }
    entries.sort_by(|a, b| {
        b.is_new
            .cmp(&a.is_new)
            .then(b.pct_increase.total_cmp(&a.pct_increase))
            .then(b.current_week_count.cmp(&a.current_week_count))
            .then(a.cluster_id.cmp(&b.cluster_id))
    });
    Ok(entries)
}

/// An embedded query passage from an external corpus.
#[derive(Debug, Clone)]
pub struct QueryPassage {
    pub id: String,
    pub embedding: EmbeddingVector,
    pub text: Option<String>,
}

impl QueryPassage {
    pub fn new(id: impl Into<String>, vector: Vec<f64>, dim: usize) -> Result<Self, WatchError> {
        let (embedding, _) =
            EmbeddingVector::new(vector, dim).map_err(|e| WatchError::Embedding(e.to_string()))?;
        Ok(QueryPassage {
            id: id.into(),
            embedding,
            text: None,
        })
    }
}

/// How queries map onto narratives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Argmax centroid, matched iff similarity ≥ threshold (social posts).
    SingleBest,
    /// Every narrative with ≥ 1 member passage at similarity ≥ threshold
    /// (fact-checks), found via centroid pre-filter then exact scan.
    AllMatches,
}

/// One matched narrative for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMatch {
    pub cluster_id: ClusterId,
    /// Centroid similarity (single-best) or best member-passage similarity
    /// (all-matches).
    pub best_similarity: f64,
    /// Member passages at or above the threshold (all-matches mode only).
    pub matched_passages: Vec<(PassageId, f64)>,
}

/// Matches of one query passage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMatches {
    pub query_id: String,
    pub matches: Vec<ClusterMatch>,
}

/// Maps query passages onto the retained narratives.
pub fn match_corpus(
    store: &NarrativeStore,
    retained: &[ClusterId],
    queries: &[QueryPassage],
    threshold: f64,
    mode: MatchMode,
) -> Vec<QueryMatches> {
    // Member embeddings fetched lazily per cluster for the exact scan.
    let member_ids: BTreeMap<ClusterId, Vec<&PassageId>> = match mode {
        MatchMode::AllMatches => retained.iter().map(|&id| (id, store.members(id))).collect(),
        MatchMode::SingleBest => BTreeMap::new(),
    };
    queries
        .iter()
        .map(|query| {
            let mut matches = Vec::new();
            match mode {
                MatchMode::SingleBest => {
                    let mut best: Option<(ClusterId, f64)> = None;
                    for &cluster_id in retained {
                        let Some(cluster) = store.cluster(cluster_id) else {
                            continue;
                        };
                        let sim = cosine_similarity(&query.embedding, &cluster.centroid_vector());
                        match best {
                            Some((_, s)) if sim <= s => {}
                            _ => best = Some((cluster_id, sim)),
                        }
                    }
                    if let Some((cluster_id, sim)) = best {
                        if sim >= threshold {
                            matches.push(ClusterMatch {
                                cluster_id,
                                best_similarity: sim,
                                matched_passages: Vec::new(),
                            });
                        }
                    }
                }
                MatchMode::AllMatches => {
                    for &cluster_id in retained {
                        let Some(cluster) = store.cluster(cluster_id) else {
                            continue;
                        };
                        let centroid_sim =
                            cosine_similarity(&query.embedding, &cluster.centroid_vector());
                        if centroid_sim < threshold - PREFILTER_MARGIN {
                            continue;
                        }
                        let mut hits = Vec::new();
                        for passage_id in &member_ids[&cluster_id] {
                            let record = store
                                .passage_store()
                                .get(passage_id)
                                .expect("member exists");
                            let sim = cosine_similarity(&query.embedding, &record.embedding);
                            if sim >= threshold {
                                hits.push(((*passage_id).clone(), sim));
                            }
                        }
                        if !hits.is_empty() {
                            let best = hits
                                .iter()
                                .map(|(_, s)| *s)
                                .fold(f64::NEG_INFINITY, f64::max);
                            matches.push(ClusterMatch {
                                cluster_id,
                                best_similarity: best,
                                matched_passages: hits,
                            });
                        }
                    }
                }
            }
            QueryMatches {
                query_id: query.id.clone(),
                matches,
            }
        })
        .collect()
}

/// Three-class refutation verdict, plus the pending state for matches whose
/// classification has not completed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Supports,
    Refutes,
    NotEnoughInfo,
    Pending,
}

/// External claim classifier: (claim = article passage, query = fact-check
/// passage) → one of the three verdict classes with a confidence score.
pub trait RefutationClassifier {
    fn classify(&self, claim: &str, query: &str) -> Result<(Verdict, f64), ClientError>;
}

/// One embedded fact-check passage.
#[derive(Debug, Clone)]
pub struct FactCheckPassage {
    pub text: String,
    pub embedding: EmbeddingVector,
}

/// A fact-check article: organization, date, embedded passages.
#[derive(Debug, Clone)]
pub struct FactCheckRecord {
    pub factcheck_id: String,
    pub org: String,
    pub published_date: NaiveDate,
    pub passages: Vec<FactCheckPassage>,
}

/// Raw line-delimited fact-check record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawFactCheckRecord {
    pub factcheck_id: String,
    pub org: String,
    pub published_date: NaiveDate,
    pub passages: Vec<RawFactCheckPassage>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawFactCheckPassage {
    pub text: String,
    pub vector: Vec<f64>,
}

impl FactCheckRecord {
    pub fn from_raw(raw: RawFactCheckRecord, dim: usize) -> Result<FactCheckRecord, WatchError> {
        let passages = raw
            .passages
            .into_iter()
            .map(|p| {
                EmbeddingVector::new(p.vector, dim)
                    .map(|(embedding, _)| FactCheckPassage {
                        text: p.text,
                        embedding,
                    })
                    .map_err(|e| WatchError::Embedding(format!("{}: {e}", raw.factcheck_id)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FactCheckRecord {
            factcheck_id: raw.factcheck_id,
            org: raw.org,
            published_date: raw.published_date,
            passages,
        })
    }
}

/// One (fact-check passage, article passage) pair above the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub factcheck_passage: usize,
    pub article_passage: PassageId,
    pub similarity: f64,
}

/// A fact-check linked to one narrative it addresses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactCheckMatch {
    pub factcheck_id: String,
    pub org: String,
    pub published_date: NaiveDate,
    pub cluster_id: ClusterId,
    pub matched_pairs: Vec<MatchedPair>,
    pub verdict: Verdict,
    pub verdict_score: f64,
}

impl FactCheckMatch {
    pub fn matched_article_passages(&self) -> Vec<&PassageId> {
        let mut seen = BTreeSet::new();
        self.matched_pairs
            .iter()
            .filter(|p| seen.insert(&p.article_passage))
            .map(|p| &p.article_passage)
            .collect()
    }
}

/// Links every fact-check to all narratives containing an article passage
/// above the threshold. Verdicts start pending.
pub fn match_factchecks(
    store: &NarrativeStore,
    retained: &[ClusterId],
    factchecks: &[FactCheckRecord],
    threshold: f64,
) -> Vec<FactCheckMatch> {
    let mut out = Vec::new();
    for record in factchecks {
        let queries: Vec<QueryPassage> = record
            .passages
            .iter()
            .enumerate()
            .map(|(i, p)| QueryPassage {
                id: i.to_string(),
                embedding: p.embedding.clone(),
                text: Some(p.text.clone()),
            })
            .collect();
        let matched = match_corpus(store, retained, &queries, threshold, MatchMode::AllMatches);
        // Regroup per cluster across the fact-check's passages.
        let mut per_cluster: BTreeMap<ClusterId, Vec<MatchedPair>> = BTreeMap::new();
        for (passage_index, matches) in matched.iter().enumerate() {
            for m in &matches.matches {
                let pairs = per_cluster.entry(m.cluster_id).or_default();
                for (article_passage, similarity) in &m.matched_passages {
                    pairs.push(MatchedPair {
                        factcheck_passage: passage_index,
                        article_passage: article_passage.clone(),
                        similarity: *similarity,
                    });
                }
            }
        }
        for (cluster_id, matched_pairs) in per_cluster {
            out.push(FactCheckMatch {
                factcheck_id: record.factcheck_id.clone(),
                org: record.org.clone(),
                published_date: record.published_date,
                cluster_id,
                matched_pairs,
                verdict: Verdict::Pending,
                verdict_score: 0.0,
            });
        }
    }
    out
}

/// Pair-level verdict cache keyed by (fact-check id, fact-check passage,
/// article passage).
pub type PairKey = (String, usize, PassageId);

#[derive(Debug, Default, Clone)]
pub struct ClassificationOutcome {
    pub verdicts: BTreeMap<PairKey, (Verdict, f64)>,
    pub classified_pairs: u64,
    pub failed_pairs: u64,
}

/// Sends every matched pair to the classifier. Failed calls leave the pair
/// out of the cache; the affected matches stay pending.
pub fn classify_pairs(
    store: &NarrativeStore,
    factchecks: &[FactCheckRecord],
    matches: &[FactCheckMatch],
    classifier: &dyn RefutationClassifier,
) -> ClassificationOutcome {
    let by_id: BTreeMap<&str, &FactCheckRecord> = factchecks
        .iter()
        .map(|f| (f.factcheck_id.as_str(), f))
        .collect();
    let mut outcome = ClassificationOutcome::default();
    for m in matches {
        let Some(record) = by_id.get(m.factcheck_id.as_str()) else {
            continue;
        };
        for pair in &m.matched_pairs {
            let key: PairKey = (
                m.factcheck_id.clone(),
                pair.factcheck_passage,
                pair.article_passage.clone(),
            );
            if outcome.verdicts.contains_key(&key) {
                continue;
            }
            let Some(article) = store.passage_store().get(&pair.article_passage) else {
                continue;
            };
            let Some(claim) = article.text.as_deref() else {
                continue;
            };
            // Guards against matches computed from a different corpus file.
            let Some(fc_passage) = record.passages.get(pair.factcheck_passage) else {
                continue;
            };
            match classifier.classify(claim, &fc_passage.text) {
                Ok((verdict, score)) => {
                    outcome.verdicts.insert(key, (verdict, score));
                    outcome.classified_pairs += 1;
                }
                Err(_) => {
                    outcome.failed_pairs += 1;
                }
            }
        }
    }
    outcome
}

/// Applies cached pair verdicts to matches: any refuting pair marks the
/// match refuting; otherwise supports, then not-enough-info; matches with
/// unclassified pairs and no refutation stay pending.
pub fn apply_verdicts(matches: &mut [FactCheckMatch], outcome: &ClassificationOutcome) {
    for m in matches.iter_mut() {
        let mut best: BTreeMap<Verdict, f64> = BTreeMap::new();
        let mut missing = false;
        for pair in &m.matched_pairs {
            let key: PairKey = (
                m.factcheck_id.clone(),
                pair.factcheck_passage,
                pair.article_passage.clone(),
            );
            match outcome.verdicts.get(&key) {
                Some((verdict, score)) => {
                    let slot = best.entry(*verdict).or_insert(f64::NEG_INFINITY);
                    *slot = slot.max(*score);
                }
                None => missing = true,
            }
        }
        if let Some(score) = best.get(&Verdict::Refutes) {
            m.verdict = Verdict::Refutes;
            m.verdict_score = *score;
        } else if missing {
            m.verdict = Verdict::Pending;
            m.verdict_score = 0.0;
        } else if let Some(score) = best.get(&Verdict::Supports) {
            m.verdict = Verdict::Supports;
            m.verdict_score = *score;
        } else if let Some(score) = best.get(&Verdict::NotEnoughInfo) {
            m.verdict = Verdict::NotEnoughInfo;
            m.verdict_score = *score;
        } else {
            m.verdict = Verdict::Pending;
            m.verdict_score = 0.0;
        }
    }
}

impl Ord for Verdict {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        fn rank(v: &Verdict) -> u8 {
            match v {
                Verdict::Supports => 0,
                Verdict::Refutes => 1,
                Verdict::NotEnoughInfo => 2,
                Verdict::Pending => 3,
            }
        }
        rank(self).cmp(&rank(other))
    }
}

impl PartialOrd for Verdict {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Fact-check coverage statistics for one organization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficacyReport {
    pub org: String,
    pub narratives_factchecked: u64,
    pub median_articles_prior: f64,
    pub median_days_to_factcheck: f64,
    pub median_days_from_peak: f64,
    pub zero_day_factchecks: u64,
    /// Matches excluded because classification is still pending.
    pub pending_matches: u64,
}

/// Efficacy metrics over refutation-confirmed matches of one organization.
pub fn factcheck_efficacy(
    store: &NarrativeStore,
    matches: &[FactCheckMatch],
    org: &str,
) -> EfficacyReport {
    // Earliest refuting fact-check date per narrative.
    let mut earliest: BTreeMap<ClusterId, NaiveDate> = BTreeMap::new();
    let mut pending = 0u64;
    for m in matches.iter().filter(|m| m.org == org) {
        match m.verdict {
            Verdict::Refutes => {
                let slot = earliest.entry(m.cluster_id).or_insert(m.published_date);
                if m.published_date < *slot {
                    *slot = m.published_date;
                }
            }
            Verdict::Pending => pending += 1,
            _ => {}
        }
    }
    if earliest.is_empty() {
        return EfficacyReport {
            org: org.to_string(),
            narratives_factchecked: 0,
            median_articles_prior: 0.0,
            median_days_to_factcheck: 0.0,
            median_days_from_peak: 0.0,
            zero_day_factchecks: 0,
            pending_matches: pending,
        };
    }
    let mut articles_prior = Vec::new();
    let mut days_to = Vec::new();
    let mut days_from_peak = Vec::new();
    let mut zero_day = 0u64;
    for (&cluster_id, &fc_date) in &earliest {
        let Some(timeline) = NarrativeTimeline::build(store, cluster_id) else {
            continue;
        };
        let prior = timeline
            .articles
            .iter()
            .filter(|(date, _, _)| *date < fc_date)
            .count() as f64;
        articles_prior.push(prior);
        let to_check = (fc_date - timeline.first_day).num_days() as f64;
        if to_check == 0.0 {
            zero_day += 1;
        }
        days_to.push(to_check);
        days_from_peak.push((fc_date - timeline.peak_day).num_days() as f64);
    }
    EfficacyReport {
        org: org.to_string(),
        narratives_factchecked: earliest.len() as u64,
        median_articles_prior: median(&articles_prior),
        median_days_to_factcheck: median(&days_to),
        median_days_from_peak: median(&days_from_peak),
        zero_day_factchecks: zero_day,
        pending_matches: pending,
    }
}

/// One row of a threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub org: String,
    /// Narratives with at least one matched pair at this threshold.
    pub narratives_matched: u64,
    /// Efficacy over refutation-confirmed matches; absent without a
    /// classifier.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub efficacy: Option<EfficacyReport>,
}

/// Recomputes match counts (and efficacy when a classifier is given) at each
/// threshold. Pairs are classified once at the lowest threshold and reused,
/// since higher thresholds only shrink the pair set.
pub fn threshold_sweep(
    store: &NarrativeStore,
    retained: &[ClusterId],
    factchecks: &[FactCheckRecord],
    thresholds: &[f64],
    classifier: Option<&dyn RefutationClassifier>,
) -> Vec<SweepRow> {
    if thresholds.is_empty() {
        return Vec::new();
    }
    let mut sorted_thresholds = thresholds.to_vec();
    sorted_thresholds.sort_by(f64::total_cmp);
    let base_threshold = sorted_thresholds[0];
    let base_matches = match_factchecks(store, retained, factchecks, base_threshold);
    let outcome = classifier.map(|c| classify_pairs(store, factchecks, &base_matches, c));

    let orgs: BTreeSet<&str> = factchecks.iter().map(|f| f.org.as_str()).collect();
    let mut rows = Vec::new();
    for &threshold in &sorted_thresholds {
        // Restrict pairs to this threshold; drop matches left empty.
        let mut filtered: Vec<FactCheckMatch> = base_matches
            .iter()
            .filter_map(|m| {
                let pairs: Vec<MatchedPair> = m
                    .matched_pairs
                    .iter()
                    .filter(|p| p.similarity >= threshold)
                    .cloned()
                    .collect();
                if pairs.is_empty() {
                    return None;
                }
                let best = pairs
                    .iter()
                    .map(|p| p.similarity)
                    .fold(f64::NEG_INFINITY, f64::max);
                Some(FactCheckMatch {
                    matched_pairs: pairs,
                    verdict: Verdict::Pending,
                    verdict_score: best,
                    ..m.clone()
                })
            })
            .collect();
        if let Some(outcome) = &outcome {
            apply_verdicts(&mut filtered, outcome);
        }
        for org in &orgs {
            let narratives: BTreeSet<ClusterId> = filtered
                .iter()
                .filter(|m| m.org == *org)
                .map(|m| m.cluster_id)
                .collect();
            rows.push(SweepRow {
                threshold,
                org: org.to_string(),
                narratives_matched: narratives.len() as u64,
                efficacy: outcome
                    .as_ref()
                    .map(|_| factcheck_efficacy(store, &filtered, org)),
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{orthogonal_store, AxisPassage};

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn axis_vec(dim: usize, axis: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        v
    }

    /// `volumes[axis] = (current_week, previous_week)` single-passage
    /// articles; history padded back 14 days.
    fn trending_store(volumes: &[(u64, u64)]) -> (NarrativeStore, Vec<ClusterId>, NaiveDate) {
        let as_of = date("2022-06-30");
        let mut passages = Vec::new();
        for (axis, &(current, previous)) in volumes.iter().enumerate() {
            // Seed article far in the past so every cluster exists early.
            passages.push(AxisPassage {
                axis,
                article_id: format!("n{axis}-seed"),
                domain: "seed.com".into(),
                date: date("2022-06-15"),
                text: None,
            });
            for i in 0..current {
                passages.push(AxisPassage {
                    axis,
                    article_id: format!("n{axis}-c{i:03}"),
                    domain: format!("cur{i:03}.com"),
                    date: as_of - Duration::days((i % 7) as i64),
                    text: None,
                });
            }
            for i in 0..previous {
                passages.push(AxisPassage {
                    axis,
                    article_id: format!("n{axis}-p{i:03}"),
                    domain: format!("prev{i:03}.com"),
                    date: as_of - Duration::days(7 + (i % 7) as i64),
                    text: None,
                });
            }
        }
        let (store, mapping) = orthogonal_store(volumes.len(), passages);
        let retained: Vec<ClusterId> = (0..volumes.len()).map(|a| mapping[&a]).collect();
        (store, retained, as_of)
    }

    #[test]
    fn trending_reports_percentage_increase() {
        let (store, retained, as_of) = trending_store(&[(30, 10)]);
        let entries = trending(&store, &retained, as_of, 25).unwrap();
        assert_eq!(entries.len(), 1);
        assert!(!entries[0].is_new);
        assert_eq!(entries[0].current_week_count, 30);
        assert_eq!(entries[0].previous_week_count, 10);
        assert!((entries[0].pct_increase - 2.0).abs() < 1e-12);
    }

    #[test]
    fn trending_new_narratives_rank_first() {
        // Axis 0 grows 20 → 40 (+100%); axis 1 is new with 30.
        let (store, retained, as_of) = trending_store(&[(40, 20), (30, 0)]);
        let entries = trending(&store, &retained, as_of, 25).unwrap();
        assert_eq!(entries.len(), 2);
        assert!(entries[0].is_new);
        assert_eq!(entries[0].cluster_id, retained[1]);
        assert_eq!(entries[0].current_week_count, 30);
        assert_eq!(entries[1].cluster_id, retained[0]);
    }

    #[test]
    fn trending_enforces_volume_floor() {
        let (store, retained, as_of) = trending_store(&[(10, 1)]);
        let entries = trending(&store, &retained, as_of, 25).unwrap();
        assert!(entries.is_empty());
    }

    #[test]
    fn trending_needs_history() {
        let (store, retained, _) = trending_store(&[(30, 10)]);
        let too_early = date("2022-06-20");
        assert_eq!(
            trending(&store, &retained, too_early, 25),
            Err(WatchError::InsufficientHistory(too_early))
        );
    }

    fn matching_store() -> (NarrativeStore, Vec<ClusterId>) {
        let mut passages = Vec::new();
        for axis in 0..3 {
            for i in 0..4 {
                passages.push(AxisPassage {
                    axis,
                    article_id: format!("n{axis}-a{i}"),
                    domain: format!("d{axis}-{i}.com"),
                    date: date("2022-01-01"),
                    text: Some(format!("narrative {axis} article {i}")),
                });
            }
        }
        let (store, mapping) = orthogonal_store(3, passages);
        let retained: Vec<ClusterId> = (0..3).map(|a| mapping[&a]).collect();
        (store, retained)
    }

    #[test]
    fn single_best_matches_centroid() {
        let (store, retained) = matching_store();
        let query = QueryPassage::new("q0", axis_vec(3, 1), 3).unwrap();
        let out = match_corpus(&store, &retained, &[query], 0.60, MatchMode::SingleBest);
        assert_eq!(out[0].matches.len(), 1);
        assert_eq!(out[0].matches[0].cluster_id, retained[1]);
        assert!((out[0].matches[0].best_similarity - 1.0).abs() < 1e-9);
    }

    #[test]
    fn below_threshold_is_unmatched() {
        let (store, retained) = matching_store();
        // 0.55 similarity to axis 0: vector tilted away.
        let sim = 0.55f64;
        let ortho = (1.0 - sim * sim).sqrt();
        let v = vec![sim, ortho / 2f64.sqrt(), ortho / 2f64.sqrt()];
        // Mix across the other two axes keeps every centroid similarity
        // below 0.60.
        let query = QueryPassage::new("q0", v, 3).unwrap();
        let out = match_corpus(&store, &retained, &[query], 0.60, MatchMode::SingleBest);
        assert!(out[0].matches.is_empty());
    }

    #[test]
    fn all_matches_equals_brute_force() {
        let (store, retained) = matching_store();
        // Query leaning on axis 0, safely under threshold for axis 1.
        let v = vec![0.82, 0.56, 0.12];
        let query = QueryPassage::new("q", v, 3).unwrap();
        let pruned = match_corpus(
            &store,
            &retained,
            std::slice::from_ref(&query),
            0.60,
            MatchMode::AllMatches,
        );

        // Brute force: scan every member passage of every retained cluster.
        let mut expected: BTreeMap<ClusterId, Vec<(PassageId, f64)>> = BTreeMap::new();
        for &cluster in &retained {
            for id in store.members(cluster) {
                let record = store.passage_store().get(id).unwrap();
                let sim = cosine_similarity(&query.embedding, &record.embedding);
                if sim >= 0.60 {
                    expected.entry(cluster).or_default().push((id.clone(), sim));
                }
            }
        }
        let got: BTreeMap<ClusterId, Vec<(PassageId, f64)>> = pruned[0]
            .matches
            .iter()
            .map(|m| (m.cluster_id, m.matched_passages.clone()))
            .collect();
        assert_eq!(got, expected);
        assert_eq!(got.len(), 1);
    }

    fn factcheck(dim: usize, axis: usize, id: &str, org: &str, day: &str) -> FactCheckRecord {
        FactCheckRecord {
            factcheck_id: id.to_string(),
            org: org.to_string(),
            published_date: date(day),
            passages: vec![FactCheckPassage {
                text: format!("fact check of narrative {axis}"),
                embedding: EmbeddingVector::new(axis_vec(dim, axis), dim).unwrap().0,
            }],
        }
    }

    struct FixedClassifier(Verdict);
    impl RefutationClassifier for FixedClassifier {
        fn classify(&self, _claim: &str, _query: &str) -> Result<(Verdict, f64), ClientError> {
            Ok((self.0, 0.9))
        }
    }

    struct DownClassifier;
    impl RefutationClassifier for DownClassifier {
        fn classify(&self, _claim: &str, _query: &str) -> Result<(Verdict, f64), ClientError> {
            Err(ClientError::Unreachable {
                attempts: 1,
                last: "down".into(),
            })
        }
    }

    /// Refutes exactly one claim text, NEI otherwise.
    struct SelectiveClassifier {
        refute_claim: String,
    }
    impl RefutationClassifier for SelectiveClassifier {
        fn classify(&self, claim: &str, _query: &str) -> Result<(Verdict, f64), ClientError> {
            if claim == self.refute_claim {
                Ok((Verdict::Refutes, 0.95))
            } else {
                Ok((Verdict::NotEnoughInfo, 0.5))
            }
        }
    }

    #[test]
    fn any_refuting_pair_marks_match_refuting() {
        let (store, retained) = matching_store();
        let fc = factcheck(3, 0, "fc1", "org", "2022-01-02");
        let mut matches = match_factchecks(&store, &retained, std::slice::from_ref(&fc), 0.60);
        assert_eq!(matches.len(), 1);
        assert_eq!(matches[0].matched_pairs.len(), 4);

        let classifier = SelectiveClassifier {
            refute_claim: "narrative 0 article 2".to_string(),
        };
        let outcome = classify_pairs(&store, &[fc], &matches, &classifier);
        assert_eq!(outcome.classified_pairs, 4);
        apply_verdicts(&mut matches, &outcome);
        assert_eq!(matches[0].verdict, Verdict::Refutes);
        assert!((matches[0].verdict_score - 0.95).abs() < 1e-12);
    }

    #[test]
    fn all_nei_is_not_factchecked() {
        let (store, retained) = matching_store();
        let fc = factcheck(3, 0, "fc1", "org", "2022-01-02");
        let mut matches = match_factchecks(&store, &retained, std::slice::from_ref(&fc), 0.60);
        let outcome = classify_pairs(
            &store,
            &[fc],
            &matches,
            &FixedClassifier(Verdict::NotEnoughInfo),
        );
        apply_verdicts(&mut matches, &outcome);
        assert_eq!(matches[0].verdict, Verdict::NotEnoughInfo);
        let report = factcheck_efficacy(&store, &matches, "org");
        assert_eq!(report.narratives_factchecked, 0);
    }

    #[test]
    fn classifier_down_leaves_matches_pending() {
        let (store, retained) = matching_store();
        let fc = factcheck(3, 0, "fc1", "org", "2022-01-02");
        let mut matches = match_factchecks(&store, &retained, std::slice::from_ref(&fc), 0.60);
        let outcome = classify_pairs(&store, &[fc], &matches, &DownClassifier);
        assert_eq!(outcome.classified_pairs, 0);
        assert_eq!(outcome.failed_pairs, 4);
        apply_verdicts(&mut matches, &outcome);
        assert_eq!(matches[0].verdict, Verdict::Pending);
        let report = factcheck_efficacy(&store, &matches, "org");
        assert_eq!(report.narratives_factchecked, 0);
        assert_eq!(report.pending_matches, 1);
    }

    /// One narrative spanning Jan 1 (first), peak Jan 5.
    fn efficacy_store() -> (NarrativeStore, Vec<ClusterId>) {
        let mut passages = vec![AxisPassage {
            axis: 0,
            article_id: "a-first".into(),
            domain: "d0.com".into(),
            date: date("2022-01-01"),
            text: Some("claim text first".into()),
        }];
        for i in 0..3 {
            passages.push(AxisPassage {
                axis: 0,
                article_id: format!("a-peak{i}"),
                domain: format!("dp{i}.com"),
                date: date("2022-01-05"),
                text: Some(format!("claim text peak {i}")),
            });
        }
        let (store, mapping) = orthogonal_store(1, passages);
        (store, vec![mapping[&0]])
    }

    #[test]
    fn efficacy_zero_day_and_sign_conventions() {
        let (store, retained) = efficacy_store();
        // Fact-check on the first day: zero-day, 4 days before peak.
        let fc = factcheck(1, 0, "fc-early", "org", "2022-01-01");
        let mut matches = match_factchecks(&store, &retained, std::slice::from_ref(&fc), 0.60);
        let outcome = classify_pairs(&store, &[fc], &matches, &FixedClassifier(Verdict::Refutes));
        apply_verdicts(&mut matches, &outcome);
        let report = factcheck_efficacy(&store, &matches, "org");
        assert_eq!(report.narratives_factchecked, 1);
        assert_eq!(report.zero_day_factchecks, 1);
        assert_eq!(report.median_days_to_factcheck, 0.0);
        assert_eq!(report.median_days_from_peak, -4.0);
        assert_eq!(report.median_articles_prior, 0.0);
    }

    #[test]
    fn efficacy_counts_days_and_prior_articles() {
        let (store, retained) = efficacy_store();
        let fc = factcheck(1, 0, "fc-late", "org", "2022-02-25");
        let mut matches = match_factchecks(&store, &retained, std::slice::from_ref(&fc), 0.60);
        let outcome = classify_pairs(&store, &[fc], &matches, &FixedClassifier(Verdict::Refutes));
        apply_verdicts(&mut matches, &outcome);
        let report = factcheck_efficacy(&store, &matches, "org");
        // Jan 1 → Feb 25 is 55 days.
        assert_eq!(report.median_days_to_factcheck, 55.0);
        assert_eq!(report.median_articles_prior, 4.0);
        assert_eq!(report.zero_day_factchecks, 0);
    }

    #[test]
    fn sweep_counts_are_monotone_and_consistent() {
        let (store, retained) = matching_store();
        // Queries at varying similarity to axis 0 members.
        let tilt = |sim: f64| {
            let ortho = (1.0f64 - sim * sim).sqrt();
            vec![sim, ortho, 0.0]
        };
        let factchecks = vec![
            FactCheckRecord {
                factcheck_id: "fc-close".into(),
                org: "org".into(),
                published_date: date("2022-01-02"),
                passages: vec![FactCheckPassage {
                    text: "close".into(),
                    embedding: EmbeddingVector::new(tilt(0.99), 3).unwrap().0,
                }],
            },
            FactCheckRecord {
                factcheck_id: "fc-mid".into(),
                org: "org".into(),
                published_date: date("2022-01-03"),
                passages: vec![FactCheckPassage {
                    text: "mid".into(),
                    embedding: EmbeddingVector::new(tilt(0.70), 3).unwrap().0,
                }],
            },
        ];
        let thresholds = [0.60, 0.65, 0.70, 0.75, 0.80];
        let rows = threshold_sweep(&store, &retained, &factchecks, &thresholds, None);
        let counts: Vec<u64> = rows.iter().map(|r| r.narratives_matched).collect();
        assert_eq!(counts.len(), 5);
        assert!(counts.windows(2).all(|w| w[1] <= w[0]), "counts {counts:?}");

        // Single-threshold sweep equals a direct match call.
        let single = threshold_sweep(&store, &retained, &factchecks, &[0.70], None);
        let direct = match_factchecks(&store, &retained, &factchecks, 0.70);
        let direct_narratives: BTreeSet<ClusterId> = direct.iter().map(|m| m.cluster_id).collect();
        assert_eq!(single[0].narratives_matched, direct_narratives.len() as u64);
    }

    #[test]
    fn threshold_one_matches_nothing_without_exact_duplicates() {
        let (store, retained) = matching_store();
        let tilt = vec![0.9, (1.0f64 - 0.81).sqrt(), 0.0];
        let factchecks = vec![FactCheckRecord {
            factcheck_id: "fc".into(),
            org: "org".into(),
            published_date: date("2022-01-02"),
            passages: vec![FactCheckPassage {
                text: "t".into(),
                embedding: EmbeddingVector::new(tilt, 3).unwrap().0,
            }],
        }];
        let rows = threshold_sweep(&store, &retained, &factchecks, &[1.0], None);
        assert_eq!(rows[0].narratives_matched, 0);
    }
}
