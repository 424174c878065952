//! Per-site narrative distributions, Jensen-Shannon similarity, the weighted
//! site graph, and Louvain community detection.

use crate::clusterer::{ClusterId, NarrativeStore};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// CrUX-style popularity rank bucket (the bucket's rank ceiling).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RankBucketRepr", into = "RankBucketRepr")]
pub enum RankBucket {
    Top1K,
    Top5K,
    Top10K,
    Top50K,
    Top100K,
    Top500K,
    Top1M,
    Top5M,
    Top10M,
    Top50M,
    Unranked,
}

impl RankBucket {
    pub const ALL_RANKED: [RankBucket; 10] = [
        RankBucket::Top1K,
        RankBucket::Top5K,
        RankBucket::Top10K,
        RankBucket::Top50K,
        RankBucket::Top100K,
        RankBucket::Top500K,
        RankBucket::Top1M,
        RankBucket::Top5M,
        RankBucket::Top10M,
        RankBucket::Top50M,
    ];

    /// Rank ceiling of the bucket; unranked sites take the worst bucket.
    pub fn ceiling(self) -> u64 {
        match self {
            RankBucket::Top1K => 1_000,
            RankBucket::Top5K => 5_000,
            RankBucket::Top10K => 10_000,
            RankBucket::Top50K => 50_000,
            RankBucket::Top100K => 100_000,
            RankBucket::Top500K => 500_000,
            RankBucket::Top1M => 1_000_000,
            RankBucket::Top5M => 5_000_000,
            RankBucket::Top10M => 10_000_000,
            RankBucket::Top50M => 50_000_000,
            RankBucket::Unranked => 50_000_000,
        }
    }

    pub fn from_ceiling(ceiling: u64) -> Option<RankBucket> {
        RankBucket::ALL_RANKED
            .iter()
            .find(|b| b.ceiling() == ceiling)
            .copied()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RankBucketRepr {
    Ceiling(u64),
    Label(String),
}

impl From<RankBucket> for RankBucketRepr {
    fn from(b: RankBucket) -> Self {
        match b {
            RankBucket::Unranked => RankBucketRepr::Label("unranked".into()),
            other => RankBucketRepr::Ceiling(other.ceiling()),
        }
    }
}

impl TryFrom<RankBucketRepr> for RankBucket {
    type Error = String;
    fn try_from(repr: RankBucketRepr) -> Result<Self, Self::Error> {
        match repr {
            RankBucketRepr::Ceiling(c) => {
                RankBucket::from_ceiling(c).ok_or_else(|| format!("unknown rank bucket {c}"))
            }
            RankBucketRepr::Label(s) if s == "unranked" => Ok(RankBucket::Unranked),
            RankBucketRepr::Label(s) => Err(format!("unknown rank bucket {s:?}")),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FingerprintError {
    #[error("no retained narratives to distribute over")]
    EmptyNarrativeSpace,
    #[error("distribution lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two profiles, got {0}")]
    TooFewProfiles(usize),
}

/// A website's smoothed multinomial distribution over the retained
/// narratives, plus its popularity bucket.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteProfile {
    pub domain: String,
    pub rank_bucket: RankBucket,
    /// Raw article counts per retained narrative (sparse).
    pub narrative_counts: BTreeMap<ClusterId, u64>,
    /// Dense probabilities aligned with the retained-narrative index.
    pub smoothed_distribution: Vec<f64>,
}

/// Adds epsilon to every count and normalizes to a probability vector.
pub fn smooth_distribution(counts: &[u64], epsilon: f64) -> Result<Vec<f64>, FingerprintError> {
    if counts.is_empty() {
        return Err(FingerprintError::EmptyNarrativeSpace);
    }
    let total: f64 = counts.iter().map(|&c| c as f64 + epsilon).sum();
    if total == 0.0 {
        return Err(FingerprintError::EmptyNarrativeSpace);
    }
    Ok(counts
        .iter()
        .map(|&c| (c as f64 + epsilon) / total)
        .collect())
}

/// A domain's article counts over the retained-narrative index.
pub fn site_narrative_counts(
    store: &NarrativeStore,
    domain: &str,
    retained: &[ClusterId],
) -> Vec<u64> {
    retained
        .iter()
        .map(|id| {
            store
                .cluster(*id)
                .and_then(|c| c.per_domain_articles.get(domain))
                .map_or(0, |set| set.len() as u64)
        })
        .collect()
}

/// Smoothed narrative distribution of one domain.
pub fn narrative_distribution(
    store: &NarrativeStore,
    domain: &str,
    retained: &[ClusterId],
    epsilon: f64,
) -> Result<Vec<f64>, FingerprintError> {
    smooth_distribution(&site_narrative_counts(store, domain, retained), epsilon)
}

/// Profiles for every domain in the store, sorted by domain.
pub fn build_profiles(
    store: &NarrativeStore,
    retained: &[ClusterId],
    ranks: &BTreeMap<String, RankBucket>,
    epsilon: f64,
) -> Result<Vec<SiteProfile>, FingerprintError> {
    if retained.is_empty() {
        return Err(FingerprintError::EmptyNarrativeSpace);
    }
    store
        .passage_store()
        .domains()
        .into_iter()
        .map(|domain| {
            let counts = site_narrative_counts(store, &domain, retained);
            let smoothed = smooth_distribution(&counts, epsilon)?;
            let narrative_counts = retained
                .iter()
                .zip(&counts)
                .filter(|(_, &c)| c > 0)
                .map(|(id, &c)| (*id, c))
                .collect();
            Ok(SiteProfile {
                rank_bucket: ranks.get(&domain).copied().unwrap_or(RankBucket::Unranked),
                domain,
                narrative_counts,
                smoothed_distribution: smoothed,
            })
        })
        .collect()
}

fn kl_base2(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| if pi > 0.0 { pi * (pi / qi).log2() } else { 0.0 })
        .sum()
}

/// Jensen-Shannon divergence with log base 2, so the value lies in [0, 1].
/// Symmetric by construction.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64, FingerprintError> {
    if p.len() != q.len() {
        return Err(FingerprintError::LengthMismatch(p.len(), q.len()));
    }
    let mid: Vec<f64> = p.iter().zip(q).map(|(&a, &b)| 0.5 * (a + b)).collect();
    let jsd = 0.5 * kl_base2(p, &mid) + 0.5 * kl_base2(q, &mid);
    // Clamp float residue at the boundaries.
    Ok(jsd.clamp(0.0, 1.0))
}

/// Undirected weighted graph over site domains; weight = 1 − JSD.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteGraph {
    /// Sorted domain names; edge endpoints index into this list.
    pub nodes: Vec<String>,
    pub edges: Vec<(usize, usize, f64)>,
}

/// Complete similarity graph over the profiles. Edges with weight below
/// `prune_below` are omitted (0 keeps the complete graph).
pub fn build_site_graph(
    profiles: &[SiteProfile],
    prune_below: f64,
) -> Result<SiteGraph, FingerprintError> {
    if profiles.len() < 2 {
        return Err(FingerprintError::TooFewProfiles(profiles.len()));
    }
    let mut sorted: Vec<&SiteProfile> = profiles.iter().collect();
    sorted.sort_by(|a, b| a.domain.cmp(&b.domain));
    let nodes: Vec<String> = sorted.iter().map(|p| p.domain.clone()).collect();
    let mut edges = Vec::new();
    for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            let jsd = js_divergence(
                &sorted[i].smoothed_distribution,
                &sorted[j].smoothed_distribution,
            )?;
            let weight = 1.0 - jsd;
            if weight >= prune_below && weight > 0.0 {
                edges.push((i, j, weight));
            }
        }
    }
    Ok(SiteGraph { nodes, edges })
}

/// Result of Louvain community detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityPartition {
    /// Domain → community id (ids contiguous from 0 in domain order).
    pub communities: BTreeMap<String, u32>,
    pub modularity: f64,
    /// Modularity after each local-move sweep, across all levels.
    pub sweep_modularities: Vec<f64>,
}

impl CommunityPartition {
    pub fn community_count(&self) -> usize {
        self.communities
            .values()
            .collect::<std::collections::BTreeSet<_>>()
            .len()
    }
}

struct LevelGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
}

impl LevelGraph {
    fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    fn degrees(&self) -> Vec<f64> {
        (0..self.node_count())
            .map(|i| {
                self.adjacency[i].iter().map(|(_, w)| w).sum::<f64>() + 2.0 * self.self_loops[i]
            })
            .collect()
    }

    /// Modularity of a node → community assignment on this level.
    fn modularity(&self, communities: &[usize], resolution: f64) -> f64 {
        let degrees = self.degrees();
        let two_m: f64 = degrees.iter().sum();
        if two_m == 0.0 {
            return 0.0;
        }
        let n_comms = communities.iter().max().map_or(0, |m| m + 1);
        let mut internal = vec![0.0; n_comms];
        let mut total = vec![0.0; n_comms];
        for (i, &c) in communities.iter().enumerate() {
            total[c] += degrees[i];
            internal[c] += self.self_loops[i];
            for &(j, w) in &self.adjacency[i] {
                if j > i && communities[j] == c {
                    internal[c] += w;
                }
            }
        }
        (0..n_comms)
            .map(|c| 2.0 * internal[c] / two_m - resolution * (total[c] / two_m).powi(2))
            .sum()
    }
}

/// One level of local moving. Returns (assignment, moved_any, sweep mods).
fn local_moving(
    graph: &LevelGraph,
    resolution: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, bool, Vec<f64>) {
    let n = graph.node_count();
    let degrees = graph.degrees();
    let two_m: f64 = degrees.iter().sum();
    let mut communities: Vec<usize> = (0..n).collect();
    let mut community_degree: Vec<f64> = degrees.clone();
    let mut order: Vec<usize> = (0..n).collect();
    let mut moved_any = false;
    let mut sweep_modularities = Vec::new();
    let mut last_q = f64::NEG_INFINITY;

    if two_m == 0.0 {
        return (communities, false, sweep_modularities);
    }

    loop {
        order.shuffle(rng);
        let mut moves = 0usize;
        for &node in &order {
            let current = communities[node];
            let k = degrees[node];

            // Weights to neighbouring communities (self loop excluded: it
            // follows the node and cancels in comparisons).
            let mut neighbour: BTreeMap<usize, f64> = BTreeMap::new();
            for &(other, w) in &graph.adjacency[node] {
                *neighbour.entry(communities[other]).or_insert(0.0) += w;
            }

            community_degree[current] -= k;
            let own_link = neighbour.get(&current).copied().unwrap_or(0.0);
            let mut best_community = current;
            let mut best_gain = own_link - resolution * community_degree[current] * k / two_m;
            for (&candidate, &link) in &neighbour {
                if candidate == current {
                    continue;
                }
                let gain = link - resolution * community_degree[candidate] * k / two_m;
                if gain > best_gain + 1e-12 {
                    best_gain = gain;
                    best_community = candidate;
                }
            }
            community_degree[best_community] += k;
            if best_community != current {
                communities[node] = best_community;
                moves += 1;
                moved_any = true;
            }
        }
        let q = graph.modularity(&compact(&communities).0, resolution);
        assert!(
            q >= last_q - 1e-9,
            "modularity decreased across sweep: {last_q} -> {q}"
        );
        last_q = q;
        sweep_modularities.push(q);
        if moves == 0 {
            break;
        }
    }
    (communities, moved_any, sweep_modularities)
}

/// Renumbers community labels to 0..k in order of first appearance.
fn compact(communities: &[usize]) -> (Vec<usize>, usize) {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    let mut next = 0;
    let compacted = communities
        .iter()
        .map(|&c| {
            *map.entry(c).or_insert_with(|| {
                let id = next;
                next += 1;
                id
            })
        })
        .collect();
    (compacted, next)
}

fn aggregate(graph: &LevelGraph, communities: &[usize], n_comms: usize) -> LevelGraph {
    let mut self_loops = vec![0.0; n_comms];
    let mut weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..graph.node_count() {
        let ci = communities[i];
        self_loops[ci] += graph.self_loops[i];
        for &(j, w) in &graph.adjacency[i] {
            if j <= i {
                continue;
            }
            let cj = communities[j];
            if ci == cj {
                self_loops[ci] += w;
            } else {
                let key = (ci.min(cj), ci.max(cj));
                *weights.entry(key).or_insert(0.0) += w;
            }
        }
    }
    let mut adjacency = vec![Vec::new(); n_comms];
    for ((a, b), w) in weights {
        adjacency[a].push((b, w));
        adjacency[b].push((a, w));
    }
    LevelGraph {
        adjacency,
        self_loops,
    }
}

/// Two-phase Louvain on weighted modularity with seeded node ordering.
pub fn louvain_communities(graph: &SiteGraph, resolution: f64, seed: u64) -> CommunityPartition {
    let n = graph.nodes.len();
    if n == 0 {
        return CommunityPartition {
            communities: BTreeMap::new(),
            modularity: 0.0,
            sweep_modularities: Vec::new(),
        };
    }
    let mut adjacency = vec![Vec::new(); n];
    for &(a, b, w) in &graph.edges {
        adjacency[a].push((b, w));
        adjacency[b].push((a, w));
    }
    let mut level = LevelGraph {
        adjacency,
        self_loops: vec![0.0; n],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // node → community at the finest level, refined as levels aggregate.
    let mut assignment: Vec<usize> = (0..n).collect();
    let mut sweep_modularities = Vec::new();

    loop {
        let (communities, moved, sweeps) = local_moving(&level, resolution, &mut rng);
        sweep_modularities.extend(sweeps);
        let (compacted, n_comms) = compact(&communities);
        for slot in assignment.iter_mut() {
            *slot = compacted[*slot];
        }
        if !moved || n_comms == level.node_count() {
            break;
        }
        level = aggregate(&level, &compacted, n_comms);
    }

    // Renumber by first appearance over sorted domains.
    let (final_assignment, _) = compact(&assignment);
    let original = {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b, w) in &graph.edges {
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
        LevelGraph {
            adjacency,
            self_loops: vec![0.0; n],
        }
    };
    let modularity = original.modularity(&final_assignment, resolution);
    CommunityPartition {
        communities: graph
            .nodes
            .iter()
            .cloned()
            .zip(final_assignment.iter().map(|&c| c as u32))
            .collect(),
        modularity,
        sweep_modularities,
    }
}

/// JSD between an external corpus's narrative distribution and the pooled
/// distribution of all sites.
pub fn corpus_similarity(
    store: &NarrativeStore,
    external_counts: &[u64],
    retained: &[ClusterId],
    epsilon: f64,
) -> Result<f64, FingerprintError> {
    if external_counts.len() != retained.len() {
        return Err(FingerprintError::LengthMismatch(
            external_counts.len(),
            retained.len(),
        ));
    }
    let aggregate: Vec<u64> = retained
        .iter()
        .map(|id| store.cluster(*id).map_or(0, |c| c.article_count()))
        .collect();
    let p = smooth_distribution(external_counts, epsilon)?;
    let q = smooth_distribution(&aggregate, epsilon)?;
    js_divergence(&p, &q)
}

/// Top narratives per community by pooled article count, for analyst review.
pub fn community_top_narratives(
    store: &NarrativeStore,
    partition: &CommunityPartition,
    retained: &[ClusterId],
    top_n: usize,
) -> BTreeMap<u32, Vec<(ClusterId, u64)>> {
    let mut per_community: BTreeMap<u32, BTreeMap<ClusterId, u64>> = BTreeMap::new();
    for &cluster_id in retained {
        let Some(cluster) = store.cluster(cluster_id) else {
            continue;
        };
        for (domain, articles) in &cluster.per_domain_articles {
            if let Some(&community) = partition.communities.get(domain) {
                *per_community
                    .entry(community)
                    .or_default()
                    .entry(cluster_id)
                    .or_insert(0) += articles.len() as u64;
            }
        }
    }
    per_community
        .into_iter()
        .map(|(community, counts)| {
            let mut ranked: Vec<(ClusterId, u64)> = counts.into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            ranked.truncate(top_n);
            (community, ranked)
        })
        .collect()
}
