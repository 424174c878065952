//! Originator/amplifier classification and rank-weighted bootstrap influence
//! statistics per site.

use crate::clusterer::{ClusterId, NarrativeStore};
use crate::corpus::ArticleId;
use crate::fingerprints::RankBucket;
use crate::stats::{cohens_d, mann_whitney_u, StatsError};
use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};

/// Which role a report measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectRole {
    Originate,
    Amplify,
}

impl std::fmt::Display for EffectRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EffectRole::Originate => f.write_str("originate"),
            EffectRole::Amplify => f.write_str("amplify"),
        }
    }
}

/// Per-narrative role classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub cluster_id: ClusterId,
    /// Domains that published on the narrative's first day.
    pub originators: BTreeSet<String>,
    /// Non-originating domains whose first article predates the peak and
    /// falls within the amplification cutoff of total volume.
    pub amplifiers: BTreeSet<String>,
    pub first_day: NaiveDate,
    pub peak_day: NaiveDate,
    pub total_articles: u64,
}

/// Per-domain influence statistics mirroring the origination/amplification
/// effect columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectReport {
    pub domain: String,
    pub role: EffectRole,
    /// Narratives where the domain held the role (group A size).
    pub eligible_narratives: u64,
    pub comparison_narratives: u64,
    pub weighted_external_delta: f64,
    pub cohens_d: f64,
    pub u_statistic: f64,
    pub p_value: f64,
    pub significant: bool,
    pub peak_delta_days: f64,
    pub peak_cohens_d: f64,
    pub peak_p_value: f64,
    pub peak_significant: bool,
    pub num_comparisons: u32,
    pub rng_seed: u64,
}

/// Controls the bootstrap comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceConfig {
    pub bootstrap_iterations: u32,
    pub subset_size: usize,
    pub window_days: i64,
    pub amplify_cutoff: f64,
    pub min_instances: usize,
    pub alpha: f64,
    /// Bonferroni divisor; `None` = number of domains actually tested.
    pub num_comparisons: Option<u32>,
    pub rng_seed: u64,
}

impl Default for InfluenceConfig {
    fn default() -> Self {
        InfluenceConfig {
            bootstrap_iterations: 250,
            subset_size: 100,
            window_days: 7,
            amplify_cutoff: 0.15,
            min_instances: 25,
            alpha: 0.05,
            num_comparisons: None,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum InfluenceError {
    #[error("domain {domain} skipped ({role}): {reason}")]
    Skipped {
        domain: String,
        role: EffectRole,
        reason: SkipReason,
    },
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("unknown domain {0}")]
    UnknownDomain(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    InsufficientInstances {
        group: String,
        have: usize,
        need: usize,
    },
    DegenerateValues,
}

impl std::fmt::Display for SkipReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SkipReason::InsufficientInstances { group, have, need } => {
                write!(f, "{group} group has {have} narratives, needs {need}")
            }
            SkipReason::DegenerateValues => f.write_str("zero variance in comparison values"),
        }
    }
}

/// Discounted-gain weight of a rank bucket: 1 / log2(rank + 1). Unranked
/// domains take the worst bucket.
pub fn rank_weight(bucket: RankBucket) -> f64 {
    1.0 / ((bucket.ceiling() as f64 + 1.0).log2())
}

/// Article history of one narrative in (date, article_id) order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NarrativeTimeline {
    pub cluster_id: ClusterId,
    /// (date, article_id, domain), sorted by (date, article_id).
    pub articles: Vec<(NaiveDate, ArticleId, String)>,
    /// Domain → (first article date, index of that article in `articles`).
    pub domain_first: BTreeMap<String, (NaiveDate, usize)>,
    pub first_day: NaiveDate,
    pub peak_day: NaiveDate,
}

impl NarrativeTimeline {
    /// Builds the timeline from a cluster's article sets; `None` for empty
    /// clusters.
    pub fn build(store: &NarrativeStore, cluster_id: ClusterId) -> Option<NarrativeTimeline> {
        let cluster = store.cluster(cluster_id)?;
        let mut articles: Vec<(NaiveDate, ArticleId, String)> = cluster
            .articles()
            .map(|(domain, article)| {
                let (_, date) = store
                    .passage_store()
                    .article(article)
                    .expect("cluster article present in store");
                (date, article.clone(), domain.to_string())
            })
            .collect();
        if articles.is_empty() {
            return None;
        }
        articles.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        let first_day = articles[0].0;
        let peak_day = peak_day_of(articles.iter().map(|(d, _, _)| *d));
        let mut domain_first = BTreeMap::new();
        for (index, (date, _, domain)) in articles.iter().enumerate() {
            domain_first.entry(domain.clone()).or_insert((*date, index));
        }
        Some(NarrativeTimeline {
            cluster_id,
            articles,
            domain_first,
            first_day,
            peak_day,
        })
    }

    pub fn total_articles(&self) -> u64 {
        self.articles.len() as u64
    }

    /// Distinct articles per external domain with dates in
    /// (anchor, anchor + window_days], excluding `tested` and any originator.
    fn window_counts(
        &self,
        anchor: NaiveDate,
        window_days: i64,
        tested: &str,
        originators: &BTreeSet<String>,
    ) -> BTreeMap<&str, u64> {
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for (date, _, domain) in &self.articles {
            let offset = (*date - anchor).num_days();
            if offset <= 0 || offset > window_days {
                continue;
            }
            if domain == tested || originators.contains(domain) {
                continue;
            }
            *counts.entry(domain.as_str()).or_insert(0) += 1;
        }
        counts
    }
}

/// Day with the maximum distinct-article count, earliest on ties.
pub fn peak_day_of(dates: impl Iterator<Item = NaiveDate>) -> NaiveDate {
    let mut daily: BTreeMap<NaiveDate, u64> = BTreeMap::new();
    for date in dates {
        *daily.entry(date).or_insert(0) += 1;
    }
    daily
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(d, _)| d)
        .expect("at least one article")
}

/// Articles covered by the amplification cutoff: ceil(fraction × total),
/// with a guard against binary-fraction noise (0.15 × 100 must be 15).
fn cutoff_count(total: u64, fraction: f64) -> u64 {
    let scaled = total as f64 * fraction;
    let rounded = scaled.round();
    if (scaled - rounded).abs() < 1e-9 {
        rounded as u64
    } else {
        scaled.ceil() as u64
    }
}

/// Classifies originators and amplifiers of one narrative.
pub fn classify_roles(timeline: &NarrativeTimeline, amplify_cutoff: f64) -> RoleAssignment {
    let originators: BTreeSet<String> = timeline
        .articles
        .iter()
        .take_while(|(date, _, _)| *date == timeline.first_day)
        .map(|(_, _, domain)| domain.clone())
        .collect();
    let cutoff = cutoff_count(timeline.total_articles(), amplify_cutoff) as usize;
    let amplifiers: BTreeSet<String> = timeline
        .domain_first
        .iter()
        .filter(|(domain, (date, index))| {
            *date < timeline.peak_day
                && *date != timeline.first_day
                && *index < cutoff
                && !originators.contains(*domain)
        })
        .map(|(domain, _)| domain.clone())
        .collect();
    RoleAssignment {
        cluster_id: timeline.cluster_id,
        originators,
        amplifiers,
        first_day: timeline.first_day,
        peak_day: timeline.peak_day,
        total_articles: timeline.total_articles(),
    }
}

/// Filter over site rank buckets for lag profiles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankFilter {
    buckets: BTreeSet<RankBucket>,
}

impl RankFilter {
    pub fn all() -> Self {
        let mut buckets: BTreeSet<RankBucket> = RankBucket::ALL_RANKED.into_iter().collect();
        buckets.insert(RankBucket::Unranked);
        RankFilter { buckets }
    }

    /// Ranked buckets with ceiling ≤ `ceiling`.
    pub fn at_most(ceiling: u64) -> Self {
        RankFilter {
            buckets: RankBucket::ALL_RANKED
                .into_iter()
                .filter(|b| b.ceiling() <= ceiling)
                .collect(),
        }
    }

    /// Ranked buckets with ceiling > `ceiling`, plus unranked sites.
    pub fn above(ceiling: u64) -> Self {
        let mut buckets: BTreeSet<RankBucket> = RankBucket::ALL_RANKED
            .into_iter()
            .filter(|b| b.ceiling() > ceiling)
            .collect();
        buckets.insert(RankBucket::Unranked);
        RankFilter { buckets }
    }

    pub fn matches(&self, bucket: RankBucket) -> bool {
        self.buckets.contains(&bucket)
    }
}

/// Histogram of article-day offsets relative to narrative peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagProfile {
    /// Offset in days (article date − peak day) → article count.
    pub histogram: BTreeMap<i64, u64>,
    pub total_articles: u64,
    pub proportion_before_peak: f64,
}

/// Precomputed timelines and roles over the retained narratives.
pub struct InfluenceAnalyzer {
    timelines: BTreeMap<ClusterId, NarrativeTimeline>,
    roles: BTreeMap<ClusterId, RoleAssignment>,
    buckets: BTreeMap<String, RankBucket>,
    weights: BTreeMap<String, f64>,
    domains: Vec<String>,
    config: InfluenceConfig,
}

impl InfluenceAnalyzer {
    pub fn new(
        store: &NarrativeStore,
        retained: &[ClusterId],
        ranks: &BTreeMap<String, RankBucket>,
        config: InfluenceConfig,
    ) -> Result<InfluenceAnalyzer, InfluenceError> {
        let domains = store.passage_store().domains();
        let buckets: BTreeMap<String, RankBucket> = domains
            .iter()
            .map(|d| {
                (
                    d.clone(),
                    ranks.get(d).copied().unwrap_or(RankBucket::Unranked),
                )
            })
            .collect();
        let weights = buckets
            .iter()
            .map(|(d, b)| (d.clone(), rank_weight(*b)))
            .collect();
        Self::with_weights(store, retained, buckets, weights, domains, config)
    }

    /// Variant with explicit per-domain weights (diagnostics and
    /// scale-invariance checks).
    pub fn with_custom_weights(
        store: &NarrativeStore,
        retained: &[ClusterId],
        ranks: &BTreeMap<String, RankBucket>,
        weights: BTreeMap<String, f64>,
        config: InfluenceConfig,
    ) -> Result<InfluenceAnalyzer, InfluenceError> {
        let domains = store.passage_store().domains();
        let buckets: BTreeMap<String, RankBucket> = domains
            .iter()
            .map(|d| {
                (
                    d.clone(),
                    ranks.get(d).copied().unwrap_or(RankBucket::Unranked),
                )
            })
            .collect();
        Self::with_weights(store, retained, buckets, weights, domains, config)
    }

    fn with_weights(
        store: &NarrativeStore,
        retained: &[ClusterId],
        buckets: BTreeMap<String, RankBucket>,
        weights: BTreeMap<String, f64>,
        domains: Vec<String>,
        config: InfluenceConfig,
    ) -> Result<InfluenceAnalyzer, InfluenceError> {
        if !(config.amplify_cutoff > 0.0 && config.amplify_cutoff < 1.0) {
            return Err(InfluenceError::BadConfig(format!(
                "amplify_cutoff must be in (0,1), got {}",
                config.amplify_cutoff
            )));
        }
        if config.bootstrap_iterations == 0 {
            return Err(InfluenceError::BadConfig(
                "bootstrap_iterations must be ≥ 1".into(),
            ));
        }
        if config.subset_size == 0 || config.subset_size > domains.len().saturating_sub(1) {
            return Err(InfluenceError::BadConfig(format!(
                "subset_size {} must be in 1..={} (external domains)",
                config.subset_size,
                domains.len().saturating_sub(1)
            )));
        }
        let mut timelines = BTreeMap::new();
        let mut roles = BTreeMap::new();
        for &cluster_id in retained {
            if let Some(timeline) = NarrativeTimeline::build(store, cluster_id) {
                roles.insert(cluster_id, classify_roles(&timeline, config.amplify_cutoff));
                timelines.insert(cluster_id, timeline);
            }
        }
        Ok(InfluenceAnalyzer {
            timelines,
            roles,
            buckets,
            weights,
            domains,
            config,
        })
    }

    pub fn config(&self) -> &InfluenceConfig {
        &self.config
    }

    pub fn role_assignment(&self, cluster: ClusterId) -> Option<&RoleAssignment> {
        self.roles.get(&cluster)
    }

    pub fn timeline(&self, cluster: ClusterId) -> Option<&NarrativeTimeline> {
        self.timelines.get(&cluster)
    }

    /// Group A (role held) and group B (wrote about, role not held)
    /// narratives for a domain, in cluster-id order.
    fn comparison_groups(
        &self,
        domain: &str,
        role: EffectRole,
    ) -> (Vec<ClusterId>, Vec<ClusterId>) {
        let mut group_a = Vec::new();
        let mut group_b = Vec::new();
        for (cluster, assignment) in &self.roles {
            let timeline = &self.timelines[cluster];
            if !timeline.domain_first.contains_key(domain) {
                continue;
            }
            let originated = assignment.originators.contains(domain);
            let amplified = assignment.amplifiers.contains(domain);
            match role {
                EffectRole::Originate => {
                    if originated {
                        group_a.push(*cluster);
                    } else {
                        group_b.push(*cluster);
                    }
                }
                EffectRole::Amplify => {
                    if amplified {
                        group_a.push(*cluster);
                    } else if !originated {
                        group_b.push(*cluster);
                    }
                }
            }
        }
        (group_a, group_b)
    }

    /// Window anchor for a (narrative, domain, role): the narrative's first
    /// day for origination; the domain's first article date for
    /// amplification.
    fn anchor(&self, cluster: ClusterId, domain: &str, role: EffectRole) -> NaiveDate {
        let timeline = &self.timelines[&cluster];
        match role {
            EffectRole::Originate => timeline.first_day,
            EffectRole::Amplify => timeline.domain_first[domain].0,
        }
    }

    fn domain_rng(&self, domain: &str) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(b"influence");
        hasher.update(self.config.rng_seed.to_le_bytes());
        hasher.update(domain.as_bytes());
        let digest = hasher.finalize();
        ChaCha8Rng::from_seed(digest.into())
    }

    /// Bootstrap-averaged, rank-weighted external article counts per
    /// narrative. Subsets are resampled per iteration and shared across
    /// narratives within it.
    fn bootstrap_values(
        &self,
        domain: &str,
        narratives: &[ClusterId],
        role: EffectRole,
    ) -> Vec<f64> {
        let pool: Vec<&str> = self
            .domains
            .iter()
            .map(String::as_str)
            .filter(|d| *d != domain)
            .collect();
        // Per narrative: (pool index, weighted count) pairs inside the
        // window.
        let per_narrative: Vec<Vec<(usize, f64)>> = narratives
            .iter()
            .map(|&cluster| {
                let timeline = &self.timelines[&cluster];
                let originators = &self.roles[&cluster].originators;
                let anchor = self.anchor(cluster, domain, role);
                let counts =
                    timeline.window_counts(anchor, self.config.window_days, domain, originators);
                counts
                    .iter()
                    .filter_map(|(d, c)| {
                        pool.binary_search(d)
                            .ok()
                            .map(|idx| (idx, self.weights[*d] * *c as f64))
                    })
                    .collect()
            })
            .collect();

        let mut rng = self.domain_rng(domain);
        let mut sums = vec![0.0f64; narratives.len()];
        let mut mask = vec![false; pool.len()];
        for _ in 0..self.config.bootstrap_iterations {
            let sample = rand::seq::index::sample(&mut rng, pool.len(), self.config.subset_size);
            for idx in sample.iter() {
                mask[idx] = true;
            }
            for (sum, entries) in sums.iter_mut().zip(&per_narrative) {
                let mut value = 0.0;
                for (idx, weighted) in entries {
                    if mask[*idx] {
                        value += weighted;
                    }
                }
                *sum += value;
            }
            for idx in sample.iter() {
                mask[idx] = false;
            }
        }
        let b = f64::from(self.config.bootstrap_iterations);
        sums.into_iter().map(|s| s / b).collect()
    }

    fn compare(
        &self,
        domain: &str,
        role: EffectRole,
        values_a: &[f64],
        values_b: &[f64],
    ) -> Result<(f64, f64, f64, f64), InfluenceError> {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let delta = mean(values_a) - mean(values_b);
        let d = match cohens_d(values_a, values_b) {
            Ok(d) => d,
            Err(StatsError::Degenerate) if delta == 0.0 => 0.0,
            Err(_) => {
                return Err(InfluenceError::Skipped {
                    domain: domain.to_string(),
                    role,
                    reason: SkipReason::DegenerateValues,
                })
            }
        };
        let (u, p) = mann_whitney_u(values_a, values_b).map_err(|_| InfluenceError::Skipped {
            domain: domain.to_string(),
            role,
            reason: SkipReason::DegenerateValues,
        })?;
        Ok((delta, d, u, p))
    }

    fn check_instances(
        &self,
        domain: &str,
        role: EffectRole,
        group_a: &[ClusterId],
        group_b: &[ClusterId],
    ) -> Result<(), InfluenceError> {
        let need = self.config.min_instances;
        for (name, group) in [("role", group_a), ("comparison", group_b)] {
            if group.len() < need {
                return Err(InfluenceError::Skipped {
                    domain: domain.to_string(),
                    role,
                    reason: SkipReason::InsufficientInstances {
                        group: name.to_string(),
                        have: group.len(),
                        need,
                    },
                });
            }
        }
        Ok(())
    }

    fn effect(
        &self,
        domain: &str,
        role: EffectRole,
        num_comparisons: u32,
    ) -> Result<EffectReport, InfluenceError> {
        if !self.domains.iter().any(|d| d == domain) {
            return Err(InfluenceError::UnknownDomain(domain.to_string()));
        }
        let (group_a, group_b) = self.comparison_groups(domain, role);
        self.check_instances(domain, role, &group_a, &group_b)?;

        let values_a = self.bootstrap_values(domain, &group_a, role);
        let values_b = self.bootstrap_values(domain, &group_b, role);
        let (delta, d, u, p) = self.compare(domain, role, &values_a, &values_b)?;

        let peaks = |group: &[ClusterId]| -> Vec<f64> {
            group
                .iter()
                .map(|&c| {
                    let anchor = self.anchor(c, domain, role);
                    (self.timelines[&c].peak_day - anchor).num_days() as f64
                })
                .collect()
        };
        let peaks_a = peaks(&group_a);
        let peaks_b = peaks(&group_b);
        let (peak_delta, peak_d, _, peak_p) = self.compare(domain, role, &peaks_a, &peaks_b)?;

        let threshold = self.config.alpha / f64::from(num_comparisons.max(1));
        Ok(EffectReport {
            domain: domain.to_string(),
            role,
            eligible_narratives: group_a.len() as u64,
            comparison_narratives: group_b.len() as u64,
            weighted_external_delta: delta,
            cohens_d: d,
            u_statistic: u,
            p_value: p,
            significant: p < threshold,
            peak_delta_days: peak_delta,
            peak_cohens_d: peak_d,
            peak_p_value: peak_p,
            peak_significant: peak_p < threshold,
            num_comparisons: num_comparisons.max(1),
            rng_seed: self.config.rng_seed,
        })
    }

    pub fn origination_effect(&self, domain: &str) -> Result<EffectReport, InfluenceError> {
        let num = self.config.num_comparisons.unwrap_or(1);
        self.effect(domain, EffectRole::Originate, num)
    }

    pub fn amplification_effect(&self, domain: &str) -> Result<EffectReport, InfluenceError> {
        let num = self.config.num_comparisons.unwrap_or(1);
        self.effect(domain, EffectRole::Amplify, num)
    }

    /// Time-to-peak comparison alone: (delta days, Cohen's d, p).
    pub fn time_to_peak_effect(
        &self,
        domain: &str,
        role: EffectRole,
    ) -> Result<(f64, f64, f64), InfluenceError> {
        let (group_a, group_b) = self.comparison_groups(domain, role);
        self.check_instances(domain, role, &group_a, &group_b)?;
        let peaks = |group: &[ClusterId]| -> Vec<f64> {
            group
                .iter()
                .map(|&c| {
                    let anchor = self.anchor(c, domain, role);
                    (self.timelines[&c].peak_day - anchor).num_days() as f64
                })
                .collect()
        };
        let (delta, d, _, p) = self.compare(domain, role, &peaks(&group_a), &peaks(&group_b))?;
        Ok((delta, d, p))
    }

    /// Effects for every domain meeting the instance thresholds. The
    /// Bonferroni divisor defaults to the number of domains tested.
    pub fn all_effects(&self, role: EffectRole) -> (Vec<EffectReport>, Vec<InfluenceError>) {
        let eligible: Vec<&String> = self
            .domains
            .iter()
            .filter(|domain| {
                let (a, b) = self.comparison_groups(domain, role);
                a.len() >= self.config.min_instances && b.len() >= self.config.min_instances
            })
            .collect();
        let num = self.config.num_comparisons.unwrap_or(eligible.len() as u32);
        let mut reports = Vec::new();
        let mut skips = Vec::new();
        for domain in eligible {
            match self.effect(domain, role, num) {
                Ok(report) => reports.push(report),
                Err(err) => skips.push(err),
            }
        }
        (reports, skips)
    }

    /// Histogram of article-day offsets from each narrative's peak, over
    /// sites matching the filter.
    pub fn lag_profile(&self, filter: &RankFilter) -> LagProfile {
        let mut histogram: BTreeMap<i64, u64> = BTreeMap::new();
        let mut total = 0u64;
        let mut before = 0u64;
        for timeline in self.timelines.values() {
            for (date, _, domain) in &timeline.articles {
                let bucket = self
                    .buckets
                    .get(domain)
                    .copied()
                    .unwrap_or(RankBucket::Unranked);
                if !filter.matches(bucket) {
                    continue;
                }
                let offset = (*date - timeline.peak_day).num_days();
                *histogram.entry(offset).or_insert(0) += 1;
                total += 1;
                if offset < 0 {
                    before += 1;
                }
            }
        }
        LagProfile {
            histogram,
            total_articles: total,
            proportion_before_peak: if total == 0 {
                0.0
            } else {
                before as f64 / total as f64
            },
        }
    }
}
