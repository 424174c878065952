//! Incremental, parallel, delayed-creation DP-Means over unit vectors with
//! cosine similarity.
//!
//! The clusterer runs one partial fit per calendar day. Within a fit it
//! alternates assignment passes over the day's points with centroid updates,
//! creating at most one cluster per pass (seeded at the point with the lowest
//! best similarity) whenever that similarity falls below `lambda`. Historical
//! assignments are frozen: committed days only contribute their resultant
//! vector sums, so centroids absorb new mass without revisiting old points.
//! There is no random reinitialization anywhere; cluster count never
//! decreases.
//!
//! Assignment passes are data-parallel over points with deterministic
//! reductions, so results are identical for any thread count.

mod snapshot;

pub use snapshot::SnapshotError;

use crate::corpus::{ArticleId, PassageId};
use crate::embedding::{pairwise_dot, pairwise_sum, EmbeddingVector, PassageRecord, PassageStore};
use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Identifier of a narrative cluster, allocated sequentially from 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub u64);

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One tracked narrative.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub cluster_id: ClusterId,
    /// Sum of member embeddings; the centroid is this, normalized.
    pub resultant: Vec<f64>,
    pub member_count: u64,
    /// Domain → distinct articles with at least one passage in the cluster.
    pub per_domain_articles: BTreeMap<String, BTreeSet<ArticleId>>,
    /// Date → count of distinct articles first assigned to the cluster that
    /// day.
    pub per_day_articles: BTreeMap<NaiveDate, u64>,
    pub created_on: NaiveDate,
    centroid: Vec<f64>,
}

impl ClusterState {
    fn new(cluster_id: ClusterId, dim: usize, created_on: NaiveDate) -> Self {
        ClusterState {
            cluster_id,
            resultant: vec![0.0; dim],
            member_count: 0,
            per_domain_articles: BTreeMap::new(),
            per_day_articles: BTreeMap::new(),
            created_on,
            centroid: vec![0.0; dim],
        }
    }

    pub(crate) fn from_parts(
        cluster_id: ClusterId,
        resultant: Vec<f64>,
        member_count: u64,
        per_domain_articles: BTreeMap<String, BTreeSet<ArticleId>>,
        per_day_articles: BTreeMap<NaiveDate, u64>,
        created_on: NaiveDate,
    ) -> Self {
        let centroid = normalize_resultant(&resultant);
        ClusterState {
            cluster_id,
            resultant,
            member_count,
            per_domain_articles,
            per_day_articles,
            created_on,
            centroid,
        }
    }

    /// Unit-norm cluster center.
    pub fn centroid(&self) -> &[f64] {
        &self.centroid
    }

    pub fn centroid_vector(&self) -> EmbeddingVector {
        EmbeddingVector::from_unit_unchecked(self.centroid.clone())
    }

    /// Distinct articles with at least one passage in the cluster.
    pub fn article_count(&self) -> u64 {
        self.per_domain_articles
            .values()
            .map(|s| s.len() as u64)
            .sum()
    }

    pub fn articles(&self) -> impl Iterator<Item = (&str, &ArticleId)> {
        self.per_domain_articles
            .iter()
            .flat_map(|(d, set)| set.iter().map(move |a| (d.as_str(), a)))
    }
}

fn normalize_resultant(resultant: &[f64]) -> Vec<f64> {
    let norm = pairwise_dot(resultant, resultant).sqrt();
    if norm > 0.0 {
        resultant.iter().map(|v| v / norm).collect()
    } else {
        resultant.to_vec()
    }
}

/// Parameters of a daily partial fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Minimum cosine similarity before a point spawns a new cluster.
    pub lambda: f64,
    pub max_iterations: u32,
    /// Convergence tolerance on 1 − cos(prev centroid, next centroid).
    pub centroid_shift_tol: f64,
    /// Safety cap on creations per day; `None` = unlimited.
    pub max_new_clusters_per_day: Option<u32>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lambda: 0.60,
            max_iterations: 50,
            centroid_shift_tol: 1e-4,
            max_new_clusters_per_day: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(ClusterError::BadConfig(format!(
                "lambda must be in (0,1), got {}",
                self.lambda
            )));
        }
        if self.max_iterations == 0 {
            return Err(ClusterError::BadConfig("max_iterations must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one committed daily fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub day: NaiveDate,
    pub points_assigned: u64,
    pub clusters_created: u64,
    pub iterations_run: u32,
    pub mean_assignment_similarity: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ClusterError {
    #[error("day {0} is already committed")]
    AlreadyCommitted(NaiveDate),
    #[error("invalid fit config: {0}")]
    BadConfig(String),
    #[error("snapshot: {0}")]
    Snapshot(#[from] SnapshotError),
}

/// A point's assignment after one pass: best cluster (if any clusters exist)
/// and the similarity achieved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchAssignment {
    pub point_index: usize,
    pub cluster: Option<ClusterId>,
    pub best_similarity: f64,
}

/// Maps every point to its argmax-similarity centroid, ties broken by lowest
/// cluster id, and returns the index of the worst point (lowest best
/// similarity, ties by lowest point index). With no clusters every point is
/// unassigned at similarity −∞ and the first point is worst.
///
/// Parallel over points; the worst-point reduction is a total order on
/// (similarity, index), so the result is identical for any thread count.
pub fn assign_batch(
    points: &[&EmbeddingVector],
    centroids: &[(ClusterId, &[f64])],
) -> (Vec<BatchAssignment>, Option<usize>) {
    if points.is_empty() {
        return (Vec::new(), None);
    }
    let assignments: Vec<BatchAssignment> = points
        .par_iter()
        .enumerate()
        .map(|(i, point)| {
            let mut best: Option<(ClusterId, f64)> = None;
            for (id, centroid) in centroids {
                let sim = pairwise_dot(point.as_slice(), centroid);
                match best {
                    Some((_, s)) if sim <= s => {}
                    _ => best = Some((*id, sim)),
                }
            }
            match best {
                Some((id, sim)) => BatchAssignment {
                    point_index: i,
                    cluster: Some(id),
                    best_similarity: sim,
                },
                None => BatchAssignment {
                    point_index: i,
                    cluster: None,
                    best_similarity: f64::NEG_INFINITY,
                },
            }
        })
        .collect();
    let worst = assignments
        .par_iter()
        .map(|a| (a.best_similarity, a.point_index))
        .reduce_with(|a, b| match a.0.total_cmp(&b.0) {
            std::cmp::Ordering::Less => a,
            std::cmp::Ordering::Greater => b,
            std::cmp::Ordering::Equal => {
                if a.1 <= b.1 {
                    a
                } else {
                    b
                }
            }
        })
        .map(|(_, i)| i);
    (assignments, worst)
}

/// Convergence test for one fit pass: no creation, no assignment changes, and
/// every centroid's cosine shift within tolerance.
pub fn converged(
    prev_centroids: &[(ClusterId, Vec<f64>)],
    next_centroids: &[(ClusterId, Vec<f64>)],
    assignments_changed: bool,
    created: bool,
    centroid_shift_tol: f64,
) -> bool {
    if created || assignments_changed {
        return false;
    }
    debug_assert_eq!(prev_centroids.len(), next_centroids.len());
    prev_centroids
        .iter()
        .zip(next_centroids)
        .all(|((prev_id, prev), (next_id, next))| {
            debug_assert_eq!(prev_id, next_id);
            1.0 - pairwise_dot(prev, next) <= centroid_shift_tol
        })
}

/// Persistent cluster state plus the passage store it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct NarrativeStore {
    passages: PassageStore,
    lambda: f64,
    clusters: BTreeMap<ClusterId, ClusterState>,
    assignments: BTreeMap<PassageId, (ClusterId, f64)>,
    committed_days: BTreeSet<NaiveDate>,
    next_cluster_id: u64,
}

impl NarrativeStore {
    pub fn new(dim: usize, lambda: f64) -> Self {
        NarrativeStore {
            passages: PassageStore::new(dim),
            lambda,
            clusters: BTreeMap::new(),
            assignments: BTreeMap::new(),
            committed_days: BTreeSet::new(),
            next_cluster_id: 0,
        }
    }

    pub(crate) fn from_parts(
        passages: PassageStore,
        lambda: f64,
        clusters: BTreeMap<ClusterId, ClusterState>,
        assignments: BTreeMap<PassageId, (ClusterId, f64)>,
        committed_days: BTreeSet<NaiveDate>,
        next_cluster_id: u64,
    ) -> Self {
        NarrativeStore {
            passages,
            lambda,
            clusters,
            assignments,
            committed_days,
            next_cluster_id,
        }
    }

    pub fn dim(&self) -> usize {
        self.passages.dim()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn passage_store(&self) -> &PassageStore {
        &self.passages
    }

    pub fn passage_store_mut(&mut self) -> &mut PassageStore {
        &mut self.passages
    }

    pub fn clusters(&self) -> impl Iterator<Item = &ClusterState> {
        self.clusters.values()
    }

    pub fn cluster(&self, id: ClusterId) -> Option<&ClusterState> {
        self.clusters.get(&id)
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    /// Committed passage → (cluster, similarity at commit time).
    pub fn assignment(&self, id: &PassageId) -> Option<(ClusterId, f64)> {
        self.assignments.get(id).copied()
    }

    pub fn assignments(&self) -> impl Iterator<Item = (&PassageId, ClusterId, f64)> {
        self.assignments.iter().map(|(p, (c, s))| (p, *c, *s))
    }

    /// Committed member passages of a cluster, in passage-id order.
    pub fn members(&self, id: ClusterId) -> Vec<&PassageId> {
        self.assignments
            .iter()
            .filter(|(_, (c, _))| *c == id)
            .map(|(p, _)| p)
            .collect()
    }

    pub fn committed_days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.committed_days.iter().copied()
    }

    pub fn last_committed_day(&self) -> Option<NaiveDate> {
        self.committed_days.iter().next_back().copied()
    }

    pub fn is_committed(&self, day: NaiveDate) -> bool {
        self.committed_days.contains(&day)
    }

    /// Stored passages not yet folded into any cluster.
    pub fn pending_passages(&self, day: NaiveDate) -> Vec<&PassageRecord> {
        let mut v: Vec<&PassageRecord> = self
            .passages
            .passages()
            .filter(|p| p.published_date == day && !self.assignments.contains_key(&p.passage_id))
            .collect();
        v.sort_by(|a, b| a.passage_id.cmp(&b.passage_id));
        v
    }

    /// Runs one day's partial fit over the store's pending passages for that
    /// day and commits the result. The store is left untouched on error.
    pub fn partial_fit_day(
        &mut self,
        day: NaiveDate,
        config: &FitConfig,
    ) -> Result<FitReport, ClusterError> {
        config.validate()?;
        if self.committed_days.contains(&day) {
            return Err(ClusterError::AlreadyCommitted(day));
        }
        let points: Vec<PassageRecord> = self.pending_passages(day).into_iter().cloned().collect();
        let outcome = self.run_fit(day, &points, config);
        self.commit(day, &points, outcome)
    }

    fn run_fit(&self, day: NaiveDate, points: &[PassageRecord], config: &FitConfig) -> FitOutcome {
        let dim = self.dim();
        let point_vecs: Vec<&EmbeddingVector> = points.iter().map(|p| &p.embedding).collect();

        // Working view: committed clusters in id order, then clusters created
        // this fit.
        let mut work: Vec<WorkCluster> = self
            .clusters
            .values()
            .map(|c| WorkCluster {
                id: c.cluster_id,
                hist_resultant: Some(&c.resultant),
                centroid: c.centroid.clone(),
                seed: None,
            })
            .collect();
        let mut next_id = self.next_cluster_id;

        let mut assignment: Vec<Option<ClusterId>> = vec![None; points.len()];
        let mut final_sims: Vec<f64> = vec![0.0; points.len()];
        let mut created_total: u64 = 0;
        let mut iterations: u32 = 0;

        if points.is_empty() {
            return FitOutcome {
                day,
                new_clusters: Vec::new(),
                assignment,
                final_sims,
                created_total,
                iterations,
            };
        }

        loop {
            iterations += 1;
            let centroid_refs: Vec<(ClusterId, &[f64])> =
                work.iter().map(|w| (w.id, w.centroid.as_slice())).collect();
            let (mut assignments, worst) = assign_batch(&point_vecs, &centroid_refs);

            // Points below lambda stay unassigned for this pass: they must
            // not pull centroids toward mixtures, or creation would stall
            // with far-apart directions fused into one cluster.
            for a in assignments.iter_mut() {
                if a.best_similarity < config.lambda {
                    a.cluster = None;
                }
            }

            let mut created = false;
            if let Some(w) = worst {
                let under_cap = config
                    .max_new_clusters_per_day
                    .is_none_or(|cap| created_total < u64::from(cap));
                if assignments[w].best_similarity < config.lambda && under_cap {
                    let id = ClusterId(next_id);
                    next_id += 1;
                    work.push(WorkCluster {
                        id,
                        hist_resultant: None,
                        centroid: point_vecs[w].as_slice().to_vec(),
                        seed: Some(w),
                    });
                    assignments[w] = BatchAssignment {
                        point_index: w,
                        cluster: Some(id),
                        best_similarity: 1.0,
                    };
                    created = true;
                    created_total += 1;
                }
            }

            let changed = assignments
                .iter()
                .zip(&assignment)
                .any(|(a, prev)| a.cluster != *prev);
            for a in &assignments {
                assignment[a.point_index] = a.cluster;
                final_sims[a.point_index] = a.best_similarity;
            }

            // Centroid update: historical resultant plus this pass's
            // assignment sums, sequential over points for determinism.
            let prev_centroids: Vec<(ClusterId, Vec<f64>)> =
                work.iter().map(|w| (w.id, w.centroid.clone())).collect();
            let index_of: BTreeMap<ClusterId, usize> =
                work.iter().enumerate().map(|(i, w)| (w.id, i)).collect();
            let mut totals: Vec<Vec<f64>> = work
                .iter()
                .map(|w| match w.hist_resultant {
                    Some(r) => r.to_vec(),
                    None => vec![0.0; dim],
                })
                .collect();
            for (i, cluster) in assignment.iter().enumerate() {
                if let Some(id) = cluster {
                    let k = index_of[id];
                    for (t, v) in totals[k].iter_mut().zip(point_vecs[i].as_slice()) {
                        *t += v;
                    }
                }
            }
            for (w, total) in work.iter_mut().zip(&totals) {
                let norm = pairwise_dot(total, total).sqrt();
                if norm > 1e-12 {
                    w.centroid = total.iter().map(|v| v / norm).collect();
                }
            }
            let next_centroids: Vec<(ClusterId, Vec<f64>)> =
                work.iter().map(|w| (w.id, w.centroid.clone())).collect();

            if converged(
                &prev_centroids,
                &next_centroids,
                changed,
                created,
                config.centroid_shift_tol,
            ) || iterations >= config.max_iterations
            {
                // Commit-time similarity is taken against the post-update
                // centroids (identical to the last pass on clean
                // convergence). Points still unassigned when the iteration
                // or creation cap binds are committed to their argmax
                // centroid.
                let final_centroids: Vec<(ClusterId, Vec<f64>)> = next_centroids;
                let resolved: Vec<(ClusterId, f64)> = point_vecs
                    .par_iter()
                    .enumerate()
                    .map(|(i, p)| match assignment[i] {
                        Some(id) => {
                            let k = index_of[&id];
                            (id, pairwise_dot(p.as_slice(), &final_centroids[k].1))
                        }
                        None => final_centroids
                            .iter()
                            .map(|(id, c)| (*id, pairwise_dot(p.as_slice(), c)))
                            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                            .expect("at least one cluster exists after first pass"),
                    })
                    .collect();
                for (i, (id, sim)) in resolved.into_iter().enumerate() {
                    assignment[i] = Some(id);
                    final_sims[i] = sim;
                }
                break;
            }
        }

        let new_clusters: Vec<ClusterId> = work
            .iter()
            .filter(|w| w.hist_resultant.is_none())
            .map(|w| w.id)
            .collect();
        FitOutcome {
            day,
            new_clusters,
            assignment,
            final_sims,
            created_total,
            iterations,
        }
    }

    fn commit(
        &mut self,
        day: NaiveDate,
        points: &[PassageRecord],
        outcome: FitOutcome,
    ) -> Result<FitReport, ClusterError> {
        let dim = self.dim();
        for id in &outcome.new_clusters {
            self.clusters.insert(*id, ClusterState::new(*id, dim, day));
            self.next_cluster_id = self.next_cluster_id.max(id.0 + 1);
        }
        for (i, point) in points.iter().enumerate() {
            let id = outcome.assignment[i].expect("committed point must be assigned");
            let cluster = self.clusters.get_mut(&id).expect("cluster exists");
            for (r, v) in cluster.resultant.iter_mut().zip(point.embedding.as_slice()) {
                *r += v;
            }
            cluster.member_count += 1;
            let newly_added = cluster
                .per_domain_articles
                .entry(point.domain.clone())
                .or_default()
                .insert(point.article_id.clone());
            if newly_added {
                *cluster.per_day_articles.entry(day).or_insert(0) += 1;
            }
            self.assignments
                .insert(point.passage_id.clone(), (id, outcome.final_sims[i]));
        }
        for cluster in self.clusters.values_mut() {
            cluster.centroid = normalize_resultant(&cluster.resultant);
        }
        self.committed_days.insert(day);

        let mean = if points.is_empty() {
            0.0
        } else {
            pairwise_sum(&outcome.final_sims) / points.len() as f64
        };
        Ok(FitReport {
            day,
            points_assigned: points.len() as u64,
            clusters_created: outcome.created_total,
            iterations_run: outcome.iterations,
            mean_assignment_similarity: mean,
        })
    }

    /// Consistency check used by tests and snapshot loading: per-day article
    /// counts must sum to the per-domain article sets, and centroids must be
    /// unit-norm.
    pub fn validate(&self) -> Result<(), String> {
        for cluster in self.clusters.values() {
            let day_total: u64 = cluster.per_day_articles.values().sum();
            let article_total = cluster.article_count();
            if day_total != article_total {
                return Err(format!(
                    "cluster {}: per-day article total {} != article set total {}",
                    cluster.cluster_id, day_total, article_total
                ));
            }
            if cluster.member_count > 0 {
                let norm = pairwise_dot(&cluster.centroid, &cluster.centroid).sqrt();
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(format!(
                        "cluster {}: centroid norm {} off unit",
                        cluster.cluster_id, norm
                    ));
                }
            }
        }
        Ok(())
    }
}

struct WorkCluster<'a> {
    id: ClusterId,
    /// Committed resultant for historical clusters; `None` for clusters
    /// created during this fit.
    hist_resultant: Option<&'a [f64]>,
    centroid: Vec<f64>,
    #[allow(dead_code)]
    seed: Option<usize>,
}

struct FitOutcome {
    #[allow(dead_code)]
    day: NaiveDate,
    new_clusters: Vec<ClusterId>,
    assignment: Vec<Option<ClusterId>>,
    final_sims: Vec<f64>,
    created_total: u64,
    iterations: u32,
}
