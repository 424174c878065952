//! Cluster curation: spam filtering, PMI keyword extraction, representative
//! passage selection, and summarization through an external client.

use crate::clients::ClientError;
use crate::clusterer::{ClusterId, NarrativeStore};
use crate::corpus::PassageId;
use crate::embedding::pairwise_dot;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Built-in English stopword list; override through
/// [`CurationConfig::stopword_override`].
pub const STOPWORDS: &[&str] = &[
    "a",
    "about",
    "above",
    "after",
    "again",
    "against",
    "all",
    "am",
    "an",
    "and",
    "any",
    "are",
    "aren",
    "as",
    "at",
    "be",
    "because",
    "been",
    "before",
    "being",
    "below",
    "between",
    "both",
    "but",
    "by",
    "can",
    "cannot",
    "could",
    "couldn",
    "did",
    "didn",
    "do",
    "does",
    "doesn",
    "doing",
    "don",
    "down",
    "during",
    "each",
    "few",
    "for",
    "from",
    "further",
    "had",
    "hadn",
    "has",
    "hasn",
    "have",
    "haven",
    "having",
    "he",
    "her",
    "here",
    "hers",
    "herself",
    "him",
    "himself",
    "his",
    "how",
    "i",
    "if",
    "in",
    "into",
    "is",
    "isn",
    "it",
    "its",
    "itself",
    "just",
    "ll",
    "me",
    "more",
    "most",
    "mustn",
    "my",
    "myself",
    "no",
    "nor",
    "not",
    "now",
    "of",
    "off",
    "on",
    "once",
    "only",
    "or",
    "other",
    "ought",
    "our",
    "ours",
    "ourselves",
    "out",
    "over",
    "own",
    "re",
    "s",
    "said",
    "same",
    "shan",
    "she",
    "should",
    "shouldn",
    "so",
    "some",
    "such",
    "t",
    "than",
    "that",
    "the",
    "their",
    "theirs",
    "them",
    "themselves",
    "then",
    "there",
    "these",
    "they",
    "this",
    "those",
    "through",
    "to",
    "too",
    "under",
    "until",
    "up",
    "ve",
    "very",
    "was",
    "wasn",
    "we",
    "were",
    "weren",
    "what",
    "when",
    "where",
    "which",
    "while",
    "who",
    "whom",
    "why",
    "will",
    "with",
    "won",
    "would",
    "wouldn",
    "you",
    "your",
    "yours",
    "yourself",
    "yourselves",
];

/// Thresholds controlling which clusters are kept and how they are labeled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurationConfig {
    /// Minimum distinct articles for a cluster to survive.
    pub min_articles: u64,
    /// Clusters where one site holds this share of passages (or more) are
    /// dropped.
    pub max_single_site_share: f64,
    /// Baseline count added to every vocabulary word in every cluster.
    pub pmi_alpha: f64,
    pub top_k_keywords: usize,
    pub representatives: usize,
    /// Optional light suffix stemming before counting.
    pub stem: bool,
    /// Replaces the built-in stopword list when set.
    pub stopword_override: Option<Vec<String>>,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            min_articles: 25,
            max_single_site_share: 0.5,
            pmi_alpha: 1.0,
            top_k_keywords: 5,
            representatives: 5,
            stem: false,
            stopword_override: None,
        }
    }
}

/// Human-interpretable identity of a retained cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrativeLabel {
    pub cluster_id: ClusterId,
    pub keywords: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    /// True when the summary came from the deterministic extractive
    /// fallback rather than the external summarizer.
    pub summary_is_fallback: bool,
    pub representative_passage_ids: Vec<PassageId>,
}

/// External summarization capability: ordered passages in, summary text out.
pub trait SummarizerClient {
    fn summarize(&self, passages: &[String]) -> Result<String, ClientError>;
}

/// Drops spam clusters and orders the survivors by article count descending.
///
/// A cluster is dropped when one domain contributes `max_single_site_share`
/// or more of its passages, or when it has fewer than `min_articles` distinct
/// articles.
pub fn filter_clusters(store: &NarrativeStore, config: &CurationConfig) -> Vec<ClusterId> {
    // Passage counts per (cluster, domain).
    let mut passage_counts: BTreeMap<ClusterId, BTreeMap<&str, u64>> = BTreeMap::new();
    for (passage_id, cluster, _) in store.assignments() {
        let record = store
            .passage_store()
            .get(passage_id)
            .expect("assigned passage exists");
        *passage_counts
            .entry(cluster)
            .or_default()
            .entry(record.domain.as_str())
            .or_insert(0) += 1;
    }

    let mut retained: Vec<(u64, ClusterId)> = Vec::new();
    for cluster in store.clusters() {
        let articles = cluster.article_count();
        if articles < config.min_articles {
            continue;
        }
        let per_domain = match passage_counts.get(&cluster.cluster_id) {
            Some(m) => m,
            None => continue,
        };
        let total: u64 = per_domain.values().sum();
        let max_share = per_domain
            .values()
            .map(|&c| c as f64 / total as f64)
            .fold(0.0, f64::max);
        if max_share >= config.max_single_site_share {
            continue;
        }
        retained.push((articles, cluster.cluster_id));
    }
    retained.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    retained.into_iter().map(|(_, id)| id).collect()
}

fn light_stem(word: &str) -> String {
    let mut w = word.strip_suffix("'s").unwrap_or(word).to_string();
    if let Some(stem) = w.strip_suffix("ies").filter(|s| s.len() >= 2) {
        w = format!("{stem}y");
    } else if let Some(stem) = w.strip_suffix("sses") {
        w = format!("{stem}ss");
    } else if w.ends_with("ing") && w.len() > 5 {
        w.truncate(w.len() - 3);
    } else if w.ends_with("ed") && w.len() > 4 {
        w.truncate(w.len() - 2);
    } else if w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") && w.len() > 3 {
        w.truncate(w.len() - 1);
    }
    w
}

fn stopword_set(config: &CurationConfig) -> BTreeSet<&str> {
    match &config.stopword_override {
        Some(list) => list.iter().map(String::as_str).collect(),
        None => STOPWORDS.iter().copied().collect(),
    }
}

fn tokenize_with(text: &str, stopwords: &BTreeSet<&str>, stem: bool) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !stopwords.contains(t))
        .map(|t| if stem { light_stem(t) } else { t.to_string() })
        .collect()
}

/// Lowercases, splits on non-alphanumerics, and drops stopwords.
pub fn tokenize(text: &str, config: &CurationConfig) -> Vec<String> {
    tokenize_with(text, &stopword_set(config), config.stem)
}

/// Smoothed (word, cluster) count table over the retained clusters, built
/// once and shared across keyword extraction calls.
#[derive(Debug, Clone)]
pub struct PmiModel {
    alpha: f64,
    clusters: Vec<ClusterId>,
    /// word → per-cluster raw counts (indexed like `clusters`).
    counts: BTreeMap<String, Vec<u64>>,
    cluster_totals: Vec<u64>,
    total_tokens: u64,
}

impl PmiModel {
    /// Tokenizes every member passage of the retained clusters and tallies
    /// the joint count table. Passages without retained text contribute
    /// nothing.
    pub fn build(
        store: &NarrativeStore,
        retained: &[ClusterId],
        config: &CurationConfig,
    ) -> PmiModel {
        let index: BTreeMap<ClusterId, usize> = retained
            .iter()
            .enumerate()
            .map(|(i, id)| (*id, i))
            .collect();
        let stopwords = stopword_set(config);
        let mut counts: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        let mut cluster_totals = vec![0u64; retained.len()];
        let mut total_tokens = 0u64;
        for (passage_id, cluster, _) in store.assignments() {
            let Some(&k) = index.get(&cluster) else {
                continue;
            };
            let record = store
                .passage_store()
                .get(passage_id)
                .expect("assigned passage exists");
            let Some(text) = &record.text else { continue };
            for token in tokenize_with(text, &stopwords, config.stem) {
                counts
                    .entry(token)
                    .or_insert_with(|| vec![0; retained.len()])[k] += 1;
                cluster_totals[k] += 1;
                total_tokens += 1;
            }
        }
        PmiModel {
            alpha: config.pmi_alpha,
            clusters: retained.to_vec(),
            counts,
            cluster_totals,
            total_tokens,
        }
    }

    pub fn vocabulary_len(&self) -> usize {
        self.counts.len()
    }

    /// PMI of one word with one retained cluster, log base 2, with the alpha
    /// baseline added to every (word, cluster) cell.
    pub fn pmi(&self, word: &str, cluster: ClusterId) -> Option<f64> {
        let k = self.clusters.iter().position(|c| *c == cluster)?;
        let per_cluster = self.counts.get(word)?;
        let v = self.counts.len() as f64;
        let c = self.clusters.len() as f64;
        let t = self.total_tokens as f64 + self.alpha * v * c;
        let joint = per_cluster[k] as f64 + self.alpha;
        let word_total: u64 = per_cluster.iter().sum();
        let word_mass = word_total as f64 + self.alpha * c;
        let cluster_mass = self.cluster_totals[k] as f64 + self.alpha * v;
        Some((joint * t / (word_mass * cluster_mass)).log2())
    }

    /// Top-k keywords of a cluster: PMI descending, ties by higher raw
    /// in-cluster count, then lexicographic. Candidates are words that
    /// actually occur in the cluster.
    pub fn keywords(&self, cluster: ClusterId, top_k: usize) -> Vec<String> {
        let Some(k) = self.clusters.iter().position(|c| *c == cluster) else {
            return Vec::new();
        };
        let mut scored: Vec<(&String, f64, u64)> = self
            .counts
            .iter()
            .filter(|(_, per_cluster)| per_cluster[k] > 0)
            .map(|(word, per_cluster)| {
                let score = self.pmi(word, self.clusters[k]).expect("word in vocab");
                (word, score, per_cluster[k])
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(b.0)));
        scored
            .into_iter()
            .take(top_k)
            .map(|(w, _, _)| w.clone())
            .collect()
    }
}

/// Member passages closest to the centroid, ties by passage id.
pub fn representative_passages(
    store: &NarrativeStore,
    cluster: ClusterId,
    n: usize,
) -> Vec<PassageId> {
    let Some(state) = store.cluster(cluster) else {
        return Vec::new();
    };
    let centroid = state.centroid();
    let mut scored: Vec<(f64, &PassageId)> = store
        .members(cluster)
        .into_iter()
        .map(|id| {
            let record = store.passage_store().get(id).expect("member exists");
            (pairwise_dot(record.embedding.as_slice(), centroid), id)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    scored
        .into_iter()
        .take(n)
        .map(|(_, id)| id.clone())
        .collect()
}

fn first_sentence(text: &str) -> &str {
    for (i, c) in text.char_indices() {
        if c == '.' || c == '!' || c == '?' {
            return &text[..i + c.len_utf8()];
        }
    }
    text
}

/// Obtains a summary for the representatives, falling back to concatenated
/// first sentences when the summarizer fails. Returns the text and whether
/// the fallback was used.
pub fn summarize_cluster(
    representative_texts: &[String],
    summarizer: Option<&dyn SummarizerClient>,
) -> (Option<String>, bool) {
    if representative_texts.is_empty() {
        return (None, false);
    }
    if let Some(client) = summarizer {
        if let Ok(summary) = client.summarize(representative_texts) {
            return (Some(summary), false);
        }
    }
    let fallback = representative_texts
        .iter()
        .map(|t| first_sentence(t).trim())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    if fallback.is_empty() {
        (None, true)
    } else {
        (Some(fallback), true)
    }
}

/// Full curation pass: filter, keywords, representatives, and (optionally)
/// summaries for every retained cluster.
pub fn curate(
    store: &NarrativeStore,
    config: &CurationConfig,
    summarizer: Option<&dyn SummarizerClient>,
) -> Vec<NarrativeLabel> {
    let retained = filter_clusters(store, config);
    let model = PmiModel::build(store, &retained, config);
    retained
        .iter()
        .map(|&cluster| {
            let representatives = representative_passages(store, cluster, config.representatives);
            let texts: Vec<String> = representatives
                .iter()
                .filter_map(|id| store.passage_store().get(id).and_then(|r| r.text.clone()))
                .collect();
            let (summary, summary_is_fallback) = summarize_cluster(&texts, summarizer);
            NarrativeLabel {
                cluster_id: cluster,
                keywords: model.keywords(cluster, config.top_k_keywords),
                summary,
                summary_is_fallback,
                representative_passage_ids: representatives,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clusterer::FitConfig;
    use crate::embedding::RawEmbeddingRecord;
    use chrono::NaiveDate;

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    /// Builds a store whose clusters are the orthogonal axes of R^dim; the
    /// spec per cluster lists (article_id, domain, passage_count, text).
    fn fixture_store(dim: usize, clusters: &[Vec<(&str, &str, usize, &str)>]) -> NarrativeStore {
        assert!(clusters.len() <= dim);
        let mut records = Vec::new();
        for (axis, cluster_spec) in clusters.iter().enumerate() {
            for (article, domain, passages, text) in cluster_spec {
                for p in 0..*passages {
                    let mut vector = vec![0.0; dim];
                    vector[axis] = 1.0;
                    records.push(RawEmbeddingRecord {
                        passage_id: format!("{article}#{p}"),
                        article_id: article.to_string(),
                        domain: domain.to_string(),
                        published_date: date("2022-01-01"),
                        ordinal: p as u32,
                        vector,
                        text: Some(text.to_string()),
                    });
                }
            }
        }
        let mut store = NarrativeStore::new(dim, 0.60);
        let report = store.passage_store_mut().ingest(records);
        assert_eq!(report.rejected, 0);
        store
            .partial_fit_day(date("2022-01-01"), &FitConfig::default())
            .unwrap();
        assert_eq!(store.cluster_count(), clusters.len());
        store
    }

    /// Cluster spec with `n` one-passage articles across distinct domains.
    fn spread_articles(
        n: usize,
        prefix: &str,
        text: &'static str,
    ) -> Vec<(String, String, usize, &'static str)> {
        (0..n)
            .map(|i| {
                (
                    format!("{prefix}-a{i:03}"),
                    format!("site{i:03}.{prefix}.com"),
                    1,
                    text,
                )
            })
            .collect()
    }

    fn owned<'a>(
        spec: &'a [(String, String, usize, &'static str)],
    ) -> Vec<(&'a str, &'a str, usize, &'a str)> {
        spec.iter()
            .map(|(a, d, n, t)| (a.as_str(), d.as_str(), *n, *t))
            .collect()
    }

    #[test]
    fn filter_drops_small_and_single_site_clusters() {
        let big = spread_articles(30, "big", "ukraine talks");
        let small = spread_articles(24, "small", "market news");
        // 100 passages, 50 from one site: share exactly 0.5 → dropped.
        let mut lopsided = vec![(
            "lop-a0".to_string(),
            "lopsided.com".to_string(),
            50,
            "vaccine story",
        )];
        for i in 0..50 {
            lopsided.push((
                format!("lop-b{i:02}"),
                format!("other{i:02}.com"),
                1,
                "vaccine story",
            ));
        }
        let store = fixture_store(3, &[owned(&big), owned(&small), owned(&lopsided)]);
        let retained = filter_clusters(&store, &CurationConfig::default());
        assert_eq!(retained, vec![ClusterId(0)]);
    }

    #[test]
    fn filter_keeps_boundary_survivor() {
        // 25 articles; top site holds 499 of 1000 passages (share 0.499).
        let mut spec = vec![("s-a0".to_string(), "top.com".to_string(), 499, "story text")];
        for i in 0..24 {
            let share = if i < 21 { 21 } else { 20 };
            spec.push((
                format!("s-b{i:02}"),
                format!("rest{i:02}.com"),
                share,
                "story text",
            ));
        }
        let total: usize = spec.iter().map(|s| s.2).sum();
        assert_eq!(total, 1000);
        let store = fixture_store(2, &[owned(&spec)]);
        let retained = filter_clusters(&store, &CurationConfig::default());
        assert_eq!(retained.len(), 1);
    }

    #[test]
    fn filter_orders_by_article_count() {
        let a = spread_articles(26, "aa", "one");
        let b = spread_articles(40, "bb", "two");
        let store = fixture_store(2, &[owned(&a), owned(&b)]);
        let retained = filter_clusters(&store, &CurationConfig::default());
        assert_eq!(retained, vec![ClusterId(1), ClusterId(0)]);
    }

    #[test]
    fn filter_is_monotone_in_min_articles() {
        let a = spread_articles(26, "aa", "one");
        let b = spread_articles(40, "bb", "two");
        let store = fixture_store(2, &[owned(&a), owned(&b)]);
        let mut config = CurationConfig::default();
        let base = filter_clusters(&store, &config);
        config.min_articles = 30;
        let stricter = filter_clusters(&store, &config);
        assert!(stricter.iter().all(|id| base.contains(id)));
        assert_eq!(stricter, vec![ClusterId(1)]);
    }

    fn two_cluster_text_store() -> NarrativeStore {
        // Cluster 0 tokens: apple ×2, banana ×1. Cluster 1: banana ×1,
        // cherry ×2. Articles padded to pass the curation floor elsewhere;
        // here we call the model directly with both clusters retained.
        fixture_store(
            2,
            &[
                vec![("x0", "a.com", 1, "apple apple banana")],
                vec![("y0", "b.com", 1, "banana cherry cherry")],
            ],
        )
    }

    #[test]
    fn pmi_matches_hand_evaluation() {
        // T = 6 + 1·3·2 = 12; every word total is 2 (+α·2 = 4); cluster
        // masses are 3 (+α·3 = 6).
        let store = two_cluster_text_store();
        let config = CurationConfig::default();
        let model = PmiModel::build(&store, &[ClusterId(0), ClusterId(1)], &config);
        assert_eq!(model.vocabulary_len(), 3);
        let pmi = |w: &str, c: u64| model.pmi(w, ClusterId(c)).unwrap();
        assert!((pmi("apple", 0) - (36.0f64 / 24.0).log2()).abs() < 1e-12);
        assert!((pmi("banana", 0) - 0.0).abs() < 1e-12);
        assert!((pmi("cherry", 0) - (12.0f64 / 24.0).log2()).abs() < 1e-12);
        assert_eq!(model.keywords(ClusterId(0), 1), vec!["apple".to_string()]);
        assert_eq!(model.keywords(ClusterId(1), 1), vec!["cherry".to_string()]);
    }

    #[test]
    fn evenly_spread_word_never_beats_concentrated_word() {
        let store = two_cluster_text_store();
        let config = CurationConfig::default();
        let model = PmiModel::build(&store, &[ClusterId(0), ClusterId(1)], &config);
        // banana appears with identical relative frequency in both clusters.
        assert!(model.pmi("banana", ClusterId(0)).unwrap().abs() < 1e-9);
        assert!(
            model.pmi("apple", ClusterId(0)).unwrap() > model.pmi("banana", ClusterId(0)).unwrap()
        );
    }

    #[test]
    fn unique_word_ranks_first() {
        let store = fixture_store(
            2,
            &[
                vec![("x0", "a.com", 1, "donbas donbas offensive front")],
                vec![("y0", "b.com", 1, "inflation prices offensive")],
            ],
        );
        let config = CurationConfig::default();
        let model = PmiModel::build(&store, &[ClusterId(0), ClusterId(1)], &config);
        let keywords = model.keywords(ClusterId(0), 5);
        assert_eq!(keywords[0], "donbas");
    }

    #[test]
    fn huge_alpha_flattens_scores() {
        let store = two_cluster_text_store();
        let mut config = CurationConfig::default();
        let model = PmiModel::build(&store, &[ClusterId(0), ClusterId(1)], &config);
        let sharp = model.pmi("apple", ClusterId(0)).unwrap().abs();
        config.pmi_alpha = 1e7;
        let flat_model = PmiModel::build(&store, &[ClusterId(0), ClusterId(1)], &config);
        let flat = flat_model.pmi("apple", ClusterId(0)).unwrap().abs();
        assert!(flat < sharp / 1000.0, "flat {flat} vs sharp {sharp}");
    }

    #[test]
    fn keywords_empty_for_textless_clusters() {
        let mut records = Vec::new();
        for i in 0..3 {
            records.push(RawEmbeddingRecord {
                passage_id: format!("p{i}"),
                article_id: format!("a{i}"),
                domain: "x.com".into(),
                published_date: date("2022-01-01"),
                ordinal: 0,
                vector: vec![1.0, 0.0],
                text: None,
            });
        }
        let mut store = NarrativeStore::new(2, 0.60);
        store.passage_store_mut().ingest(records);
        store
            .partial_fit_day(date("2022-01-01"), &FitConfig::default())
            .unwrap();
        let config = CurationConfig::default();
        let model = PmiModel::build(&store, &[ClusterId(0)], &config);
        assert_eq!(model.vocabulary_len(), 0);
        assert!(model.keywords(ClusterId(0), 5).is_empty());
    }

    #[test]
    fn representatives_ranked_by_centroid_similarity() {
        let mut records = Vec::new();
        // Ten passages fanning out from the x axis.
        for i in 0..10 {
            let angle = 0.02 * i as f64;
            records.push(RawEmbeddingRecord {
                passage_id: format!("p{i}"),
                article_id: format!("a{i}"),
                domain: "x.com".into(),
                published_date: date("2022-01-01"),
                ordinal: 0,
                vector: vec![angle.cos(), angle.sin()],
                text: Some(format!("passage {i}")),
            });
        }
        let mut store = NarrativeStore::new(2, 0.60);
        store.passage_store_mut().ingest(records);
        store
            .partial_fit_day(date("2022-01-01"), &FitConfig::default())
            .unwrap();
        assert_eq!(store.cluster_count(), 1);
        let reps = representative_passages(&store, ClusterId(0), 5);
        assert_eq!(reps.len(), 5);
        // Centroid sits near the middle of the fan; the closest passage is
        // ranked first.
        let centroid = store.cluster(ClusterId(0)).unwrap().centroid_vector();
        let sims: Vec<f64> = reps
            .iter()
            .map(|id| {
                crate::embedding::cosine_similarity(
                    &store.passage_store().get(id).unwrap().embedding,
                    &centroid,
                )
            })
            .collect();
        assert!(sims.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn single_member_cluster_returns_that_passage() {
        let store = fixture_store(2, &[vec![("a0", "x.com", 1, "only passage here")]]);
        let reps = representative_passages(&store, ClusterId(0), 5);
        assert_eq!(reps, vec![PassageId("a0#0".into())]);
    }

    struct EchoSummarizer;
    impl SummarizerClient for EchoSummarizer {
        fn summarize(&self, passages: &[String]) -> Result<String, ClientError> {
            Ok(passages.join(" | "))
        }
    }

    struct DownSummarizer;
    impl SummarizerClient for DownSummarizer {
        fn summarize(&self, _passages: &[String]) -> Result<String, ClientError> {
            Err(ClientError::Unreachable {
                attempts: 3,
                last: "connection refused".into(),
            })
        }
    }

    #[test]
    fn summarizer_echo_is_stored() {
        let texts = vec![
            "First sentence. More.".to_string(),
            "Second text.".to_string(),
        ];
        let (summary, fallback) = summarize_cluster(&texts, Some(&EchoSummarizer));
        assert_eq!(summary.unwrap(), "First sentence. More. | Second text.");
        assert!(!fallback);
    }

    #[test]
    fn summarizer_failure_falls_back_to_first_sentences() {
        let texts = vec![
            "Alpha happened today. It was big.".to_string(),
            "Beta follows! With details.".to_string(),
        ];
        let (summary, fallback) = summarize_cluster(&texts, Some(&DownSummarizer));
        assert!(fallback);
        assert_eq!(summary.unwrap(), "Alpha happened today. Beta follows!");
    }

    #[test]
    fn curate_produces_labels_for_retained_clusters() {
        let spec = spread_articles(30, "uk", "donbas offensive continues today");
        let store = fixture_store(2, &[owned(&spec)]);
        let labels = curate(&store, &CurationConfig::default(), None);
        assert_eq!(labels.len(), 1);
        let label = &labels[0];
        assert_eq!(label.cluster_id, ClusterId(0));
        assert!(label.keywords.contains(&"donbas".to_string()));
        assert_eq!(label.representative_passage_ids.len(), 5);
        assert!(label.summary_is_fallback);
        assert!(label.summary.as_deref().unwrap().contains("donbas"));
    }
}
