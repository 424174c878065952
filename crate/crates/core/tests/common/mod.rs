//! Shared oracles and fixture generators for the integration and acceptance
//! suites. Everything here is deliberately independent of the library's
//! computation paths: plain loops, naive summation, direct formulas.

#![allow(dead_code)]

use chrono::NaiveDate;
use narratives::clusterer::NarrativeStore;
use narratives::embedding::RawEmbeddingRecord;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn date(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

// ---------------------------------------------------------------------------
// Sequential reference implementation of delayed-creation DP-Means over unit
// vectors (frozen history across days), written with naive arithmetic.
// ---------------------------------------------------------------------------

pub struct RefStore {
    pub dim: usize,
    pub lambda: f64,
    pub max_iterations: u32,
    pub shift_tol: f64,
    /// Committed resultants, indexed by cluster id.
    pub resultants: Vec<Vec<f64>>,
}

impl RefStore {
    pub fn new(dim: usize, lambda: f64) -> Self {
        RefStore {
            dim,
            lambda,
            max_iterations: 50,
            shift_tol: 1e-4,
            resultants: Vec::new(),
        }
    }

    /// One daily fit over points sorted by id. Returns the per-point cluster
    /// index and the number of clusters created.
    pub fn fit_day(&mut self, points: &[Vec<f64>]) -> (Vec<usize>, usize) {
        fn dot(a: &[f64], b: &[f64]) -> f64 {
            let mut s = 0.0;
            for i in 0..a.len() {
                s += a[i] * b[i];
            }
            s
        }
        fn normalize(v: &[f64]) -> Vec<f64> {
            let n = dot(v, v).sqrt();
            if n > 1e-12 {
                v.iter().map(|x| x / n).collect()
            } else {
                v.to_vec()
            }
        }

        let mut centroids: Vec<Vec<f64>> = self.resultants.iter().map(|r| normalize(r)).collect();
        let hist = self.resultants.clone();
        let mut assignment: Vec<Option<usize>> = vec![None; points.len()];
        let mut created = 0usize;

        if points.is_empty() {
            return (Vec::new(), 0);
        }

        for _iter in 0..self.max_iterations {
            // Assignment: argmax similarity, ties to lowest cluster index;
            // below lambda stays unassigned.
            let mut next: Vec<Option<usize>> = Vec::with_capacity(points.len());
            let mut worst: Option<(f64, usize)> = None;
            let mut sims: Vec<f64> = Vec::with_capacity(points.len());
            for (i, p) in points.iter().enumerate() {
                let mut best: Option<(usize, f64)> = None;
                for (k, c) in centroids.iter().enumerate() {
                    let s = dot(p, c);
                    match best {
                        Some((_, bs)) if s <= bs => {}
                        _ => best = Some((k, s)),
                    }
                }
                let (cluster, sim) = match best {
                    Some((k, s)) if s >= self.lambda => (Some(k), s),
                    Some((_, s)) => (None, s),
                    None => (None, f64::NEG_INFINITY),
                };
                next.push(cluster);
                sims.push(sim);
                match worst {
                    Some((ws, _)) if sim >= ws => {}
                    _ => worst = Some((sim, i)),
                }
            }

            let mut did_create = false;
            if let Some((wsim, widx)) = worst {
                if wsim < self.lambda {
                    centroids.push(points[widx].clone());
                    next[widx] = Some(centroids.len() - 1);
                    created += 1;
                    did_create = true;
                }
            }

            let changed = next.iter().zip(&assignment).any(|(a, b)| a != b);
            assignment = next;

            // Update: historical resultant plus this pass's assigned points.
            let mut totals: Vec<Vec<f64>> = (0..centroids.len())
                .map(|k| {
                    if k < hist.len() {
                        hist[k].clone()
                    } else {
                        vec![0.0; self.dim]
                    }
                })
                .collect();
            for (i, a) in assignment.iter().enumerate() {
                if let Some(k) = a {
                    for (t, v) in totals[*k].iter_mut().zip(&points[i]) {
                        *t += v;
                    }
                }
            }
            let mut max_shift = 0.0f64;
            for (k, total) in totals.iter().enumerate() {
                let updated = normalize(total);
                if dot(total, total).sqrt() > 1e-12 {
                    max_shift = max_shift.max(1.0 - dot(&centroids[k], &updated));
                    centroids[k] = updated;
                }
            }

            if !did_create && !changed && max_shift <= self.shift_tol {
                break;
            }
        }

        // Commit: leftovers to argmax; fold resultants.
        let final_assignment: Vec<usize> = points
            .iter()
            .enumerate()
            .map(|(i, p)| match assignment[i] {
                Some(k) => k,
                None => {
                    let mut best = (0usize, f64::NEG_INFINITY);
                    for (k, c) in centroids.iter().enumerate() {
                        let s = dot(p, c);
                        if s > best.1 {
                            best = (k, s);
                        }
                    }
                    best.0
                }
            })
            .collect();
        while self.resultants.len() < centroids.len() {
            self.resultants.push(vec![0.0; self.dim]);
        }
        for (i, &k) in final_assignment.iter().enumerate() {
            for (r, v) in self.resultants[k].iter_mut().zip(&points[i]) {
                *r += v;
            }
        }
        (final_assignment, created)
    }

    pub fn centroids(&self) -> Vec<Vec<f64>> {
        self.resultants
            .iter()
            .map(|r| {
                let n: f64 = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                r.iter().map(|x| x / n).collect()
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Adjusted Rand index between two labelings.
// ---------------------------------------------------------------------------

pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for i in 0..n {
        table[a[i]][b[i]] += 1;
    }
    let choose2 = |x: u64| -> f64 { (x as f64) * (x as f64 - 1.0) / 2.0 };
    let sum_ij: f64 = table
        .iter()
        .flat_map(|row| row.iter())
        .map(|&x| choose2(x))
        .sum();
    let sum_a: f64 = (0..ka).map(|i| choose2(table[i].iter().sum::<u64>())).sum();
    let sum_b: f64 = (0..kb)
        .map(|j| choose2((0..ka).map(|i| table[i][j]).sum::<u64>()))
        .sum();
    let total = choose2(n as u64);
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() < 1e-12 {
        return 1.0;
    }
    (sum_ij - expected) / (max_index - expected)
}

// ---------------------------------------------------------------------------
// Planted-cluster corpus: orthogonal directions in R^dim with tight noise
// cones, streamed over several days.
// ---------------------------------------------------------------------------

pub struct PlantedCorpus {
    pub dim: usize,
    pub records: Vec<RawEmbeddingRecord>,
    /// Ground-truth planted cluster per record (aligned with `records`).
    pub truth: Vec<usize>,
    pub days: Vec<NaiveDate>,
}

fn gram_schmidt_directions(rng: &mut ChaCha8Rng, k: usize, dim: usize) -> Vec<Vec<f64>> {
    assert!(k <= dim);
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(k);
    while dirs.len() < k {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        for d in &dirs {
            let proj: f64 = v.iter().zip(d).map(|(a, b)| a * b).sum();
            for (vi, di) in v.iter_mut().zip(d) {
                *vi -= proj * di;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            dirs.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    dirs
}

/// `clusters` planted directions × `per_cluster` points, noise cone tight
/// enough that every point has cosine ≥ 0.95 to its direction (so pairwise
/// intra ≥ 0.80 and, with orthogonal directions, inter stays ≤ 0.30).
pub fn planted_corpus(
    clusters: usize,
    per_cluster: usize,
    dim: usize,
    n_days: usize,
    seed: u64,
) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs = gram_schmidt_directions(&mut rng, clusters, dim);
    let days: Vec<NaiveDate> = (0..n_days)
        .map(|i| date("2022-01-01") + chrono::Duration::days(i as i64))
        .collect();

    let sigma = 0.2;
    let mut records = Vec::new();
    let mut truth = Vec::new();
    let total = clusters * per_cluster;
    for i in 0..total {
        let cluster = i % clusters;
        let point = loop {
            let mut v: Vec<f64> = dirs[cluster].clone();
            for x in v.iter_mut() {
                // Box-Muller normal noise.
                let u1: f64 = rng.gen::<f64>().max(1e-12);
                let u2: f64 = rng.gen();
                let g = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                *x += sigma * g / (dim as f64).sqrt();
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let unit: Vec<f64> = v.into_iter().map(|x| x / norm).collect();
            let cos: f64 = unit.iter().zip(&dirs[cluster]).map(|(a, b)| a * b).sum();
            if cos >= 0.95 {
                break unit;
            }
        };
        let day = days[i % n_days];
        records.push(RawEmbeddingRecord {
            passage_id: format!("p{i:06}"),
            article_id: format!("a{i:06}"),
            domain: format!("site{:03}.com", i % 97),
            published_date: day,
            ordinal: 0,
            vector: point,
            text: None,
        });
        truth.push(cluster);
    }
    PlantedCorpus {
        dim,
        records,
        truth,
        days,
    }
}

/// Ingests a planted corpus into a fresh store (no fits run).
pub fn ingest_corpus(corpus: &PlantedCorpus, lambda: f64) -> NarrativeStore {
    let mut store = NarrativeStore::new(corpus.dim, lambda);
    let report = store.passage_store_mut().ingest(corpus.records.clone());
    assert_eq!(report.rejected, 0);
    store
}

// ---------------------------------------------------------------------------
// Orthogonal-axis store builder (one passage per entry), mirroring the
// shapes used by the analytics fixtures.
// ---------------------------------------------------------------------------

pub struct AxisPassage {
    pub axis: usize,
    pub article_id: String,
    pub domain: String,
    pub date: NaiveDate,
    pub text: Option<String>,
}

pub fn orthogonal_store(
    dim: usize,
    passages: Vec<AxisPassage>,
) -> (
    NarrativeStore,
    std::collections::BTreeMap<usize, narratives::clusterer::ClusterId>,
) {
    use narratives::clusterer::FitConfig;
    let mut records = Vec::new();
    let mut per_article: std::collections::BTreeMap<String, u32> = Default::default();
    for p in &passages {
        let ordinal = per_article.entry(p.article_id.clone()).or_insert(0);
        let mut vector = vec![0.0; dim];
        vector[p.axis] = 1.0;
        records.push(RawEmbeddingRecord {
            passage_id: format!("{}#{}", p.article_id, ordinal),
            article_id: p.article_id.clone(),
            domain: p.domain.clone(),
            published_date: p.date,
            ordinal: *ordinal,
            vector,
            text: p.text.clone(),
        });
        *ordinal += 1;
    }
    let mut store = NarrativeStore::new(dim, 0.60);
    let report = store.passage_store_mut().ingest(records);
    assert_eq!(report.rejected, 0);
    let mut dates: Vec<NaiveDate> = passages.iter().map(|p| p.date).collect();
    dates.sort();
    dates.dedup();
    for d in dates {
        store.partial_fit_day(d, &FitConfig::default()).unwrap();
    }
    let mut mapping = std::collections::BTreeMap::new();
    for cluster in store.clusters() {
        let centroid = cluster.centroid();
        let axis = centroid
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        mapping.insert(axis, cluster.cluster_id);
    }
    (store, mapping)
}

// ---------------------------------------------------------------------------
// Reference statistics: plain-formula Cohen's d and a Mann-Whitney p-value
// with the normal CDF evaluated by Simpson quadrature.
// ---------------------------------------------------------------------------

pub fn cohens_d_ref(a: &[f64], b: &[f64]) -> f64 {
    let mean = |g: &[f64]| g.iter().sum::<f64>() / g.len() as f64;
    let ma = mean(a);
    let mb = mean(b);
    let ssa: f64 = a.iter().map(|v| (v - ma).powi(2)).sum();
    let ssb: f64 = b.iter().map(|v| (v - mb).powi(2)).sum();
    let pooled = ((ssa + ssb) / (a.len() + b.len() - 2) as f64).sqrt();
    (ma - mb) / pooled
}

/// Standard normal CDF by Simpson integration of the density.
pub fn normal_cdf_ref(z: f64) -> f64 {
    if z < 0.0 {
        return 1.0 - normal_cdf_ref(-z);
    }
    let steps = 20_000;
    let h = z / steps as f64;
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = pdf(0.0) + pdf(z);
    for i in 1..steps {
        let x = i as f64 * h;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(x);
    }
    0.5 + acc * h / 3.0
}

/// Reference two-sided Mann-Whitney p via midranks, tie-corrected variance,
/// continuity correction, and the quadrature CDF.
pub fn mann_whitney_ref(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n_a = a.len();
    let n_b = b.len();
    let mut pooled: Vec<(f64, usize)> = a
        .iter()
        .map(|&v| (v, 0))
        .chain(b.iter().map(|&v| (v, 1)))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut ranks = vec![0.0; pooled.len()];
    let mut i = 0;
    let mut tie_term = 0.0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let rank = (i + 1 + j) as f64 / 2.0;
        for r in ranks.iter_mut().take(j).skip(i) {
            *r = rank;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let r_a: f64 = ranks
        .iter()
        .zip(&pooled)
        .filter(|(_, (_, g))| *g == 0)
        .map(|(r, _)| r)
        .sum();
    let u = r_a - (n_a * (n_a + 1)) as f64 / 2.0;
    let mu = (n_a * n_b) as f64 / 2.0;
    let n = (n_a + n_b) as f64;
    let var = (n_a * n_b) as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return (u, 1.0);
    }
    let diff = u - mu;
    let corrected = if diff > 0.0 {
        diff - 0.5
    } else if diff < 0.0 {
        diff + 0.5
    } else {
        0.0
    };
    let z = corrected / var.sqrt();
    let p = 2.0 * (1.0 - normal_cdf_ref(z.abs()));
    (u, p.clamp(0.0, 1.0))
}
