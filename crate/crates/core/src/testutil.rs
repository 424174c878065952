//! Shared fixture builders for unit tests: stores whose clusters are the
//! orthogonal axes of R^dim, built through real daily fits.

use crate::clusterer::{ClusterId, FitConfig, NarrativeStore};
use crate::embedding::RawEmbeddingRecord;
use chrono::NaiveDate;
use std::collections::BTreeMap;

pub struct AxisPassage {
    pub axis: usize,
    pub article_id: String,
    pub domain: String,
    pub date: NaiveDate,
    pub text: Option<String>,
}

pub fn axis_passage(axis: usize, article_id: &str, domain: &str, date: &str) -> AxisPassage {
    AxisPassage {
        axis,
        article_id: article_id.to_string(),
        domain: domain.to_string(),
        date: date.parse().unwrap(),
        text: None,
    }
}

/// Ingests one passage per entry (axis basis vectors) and fits every date in
/// order. Returns the store and the axis → cluster id mapping.
pub fn orthogonal_store(
    dim: usize,
    passages: Vec<AxisPassage>,
) -> (NarrativeStore, BTreeMap<usize, ClusterId>) {
    let mut records = Vec::new();
    let mut per_article: BTreeMap<String, u32> = BTreeMap::new();
    for p in &passages {
        assert!(p.axis < dim);
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
    assert_eq!(report.rejected, 0, "fixture ingest rejected records");

    let mut dates: Vec<NaiveDate> = passages.iter().map(|p| p.date).collect();
    dates.sort();
    dates.dedup();
    let config = FitConfig::default();
    for date in dates {
        store.partial_fit_day(date, &config).unwrap();
    }

    // Axes are orthogonal, so each cluster centroid points along one axis.
    let mut mapping = BTreeMap::new();
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
