//! Validation and storage of passage embeddings, plus the cosine similarity
//! kernel used throughout the engine.
//!
//! Embeddings arrive precomputed (line-delimited records) or, optionally,
//! from a remote provider behind [`EmbeddingProvider`]. Every stored vector
//! is unit-norm after ingestion.

use crate::corpus::{ArticleId, PassageId};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Norm slack absorbed silently; vectors further from unit length are still
/// renormalized but counted as warnings.
pub const NORM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("expected dimension {expected}, got {got}")]
    BadDimension { expected: usize, got: usize },
    #[error("vector has non-finite components")]
    NonFinite,
    #[error("zero vector cannot be normalized")]
    ZeroVector,
    #[error("duplicate passage id {0}")]
    DuplicatePassage(PassageId),
    #[error(
        "passage {passage}: article {article} already registered with different domain or date"
    )]
    InconsistentArticle {
        passage: PassageId,
        article: ArticleId,
    },
    #[error("malformed record: {0}")]
    Malformed(String),
}

/// Dot product with a fixed pairwise-tree reduction so the summation order
/// is identical regardless of caller or thread count.
pub fn pairwise_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    fn go(a: &[f64], b: &[f64]) -> f64 {
        if a.len() <= 8 {
            let mut acc = 0.0;
            for (x, y) in a.iter().zip(b) {
                acc += x * y;
            }
            acc
        } else {
            let mid = a.len() / 2;
            go(&a[..mid], &b[..mid]) + go(&a[mid..], &b[mid..])
        }
    }
    go(a, b)
}

/// Pairwise-tree sum; same determinism rationale as [`pairwise_dot`].
pub fn pairwise_sum(values: &[f64]) -> f64 {
    fn go(v: &[f64]) -> f64 {
        if v.len() <= 8 {
            v.iter().sum()
        } else {
            let mid = v.len() / 2;
            go(&v[..mid]) + go(&v[mid..])
        }
    }
    go(values)
}

/// A unit-norm embedding of fixed dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Validates and renormalizes a raw vector. Returns the unit vector and
    /// whether the input norm fell outside [`NORM_TOLERANCE`].
    pub fn new(values: Vec<f64>, expected_dim: usize) -> Result<(Self, bool), EmbeddingError> {
        if values.len() != expected_dim {
            return Err(EmbeddingError::BadDimension {
                expected: expected_dim,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        let norm = pairwise_dot(&values, &values).sqrt();
        if norm == 0.0 {
            return Err(EmbeddingError::ZeroVector);
        }
        let out_of_tolerance = (norm - 1.0).abs() > NORM_TOLERANCE;
        let unit: Vec<f64> = values.iter().map(|v| v / norm).collect();
        Ok((EmbeddingVector(unit), out_of_tolerance))
    }

    /// Wraps an already unit-norm vector without renormalizing. Intended for
    /// snapshot loading; debug-asserts the invariant.
    pub fn from_unit_unchecked(values: Vec<f64>) -> Self {
        debug_assert!((pairwise_dot(&values, &values).sqrt() - 1.0).abs() <= 1e-6);
        EmbeddingVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Cosine similarity of two unit vectors (their dot product).
///
/// Exactly symmetric: products commute componentwise and the reduction tree
/// is canonical.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    pairwise_dot(a.as_slice(), b.as_slice())
}

/// One embedded passage with its article attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageRecord {
    pub passage_id: PassageId,
    pub article_id: ArticleId,
    pub domain: String,
    pub published_date: NaiveDate,
    pub ordinal: u32,
    pub embedding: EmbeddingVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

/// Raw line-delimited embedding record as read from an input file.
#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct RawEmbeddingRecord {
    pub passage_id: String,
    pub article_id: String,
    pub domain: String,
    pub published_date: NaiveDate,
    pub ordinal: u32,
    pub vector: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

/// Tally of one ingestion run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: u64,
    pub rejected: u64,
    /// Accepted vectors whose input norm fell outside tolerance.
    pub renormalized_warnings: u64,
    /// Rejection reason → count.
    pub reasons: BTreeMap<String, u64>,
}

impl IngestReport {
    fn reject(&mut self, reason: &str) {
        self.rejected += 1;
        *self.reasons.entry(reason.to_string()).or_insert(0) += 1;
    }
}

/// Validated passage embeddings keyed by passage id, with an article index.
///
/// Contents are order-independent with respect to ingestion: the maps are
/// keyed sets, and a passage id is accepted exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct PassageStore {
    dim: usize,
    passages: BTreeMap<PassageId, PassageRecord>,
    articles: BTreeMap<ArticleId, (String, NaiveDate)>,
}

impl PassageStore {
    pub fn new(dim: usize) -> Self {
        PassageStore {
            dim,
            passages: BTreeMap::new(),
            articles: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn get(&self, id: &PassageId) -> Option<&PassageRecord> {
        self.passages.get(id)
    }

    pub fn passages(&self) -> impl Iterator<Item = &PassageRecord> {
        self.passages.values()
    }

    /// Domain and publication date of an article, if any of its passages are
    /// stored.
    pub fn article(&self, id: &ArticleId) -> Option<(&str, NaiveDate)> {
        self.articles.get(id).map(|(d, t)| (d.as_str(), *t))
    }

    pub fn articles(&self) -> impl Iterator<Item = (&ArticleId, &str, NaiveDate)> {
        self.articles
            .iter()
            .map(|(id, (d, t))| (id, d.as_str(), *t))
    }

    /// All domains present in the store, sorted.
    pub fn domains(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .articles
            .values()
            .map(|(d, _)| d.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        v.sort();
        v
    }

    /// Inserts a record whose embedding is already unit-norm, skipping
    /// vector revalidation. Snapshot loading must restore stored vectors
    /// bit-exactly; renormalizing again would perturb the low bits.
    pub(crate) fn insert_trusted(&mut self, record: PassageRecord) -> Result<(), EmbeddingError> {
        self.insert_validated(record)
    }

    fn insert_validated(&mut self, record: PassageRecord) -> Result<(), EmbeddingError> {
        if self.passages.contains_key(&record.passage_id) {
            return Err(EmbeddingError::DuplicatePassage(record.passage_id));
        }
        match self.articles.get(&record.article_id) {
            Some((domain, date)) if domain != &record.domain || *date != record.published_date => {
                return Err(EmbeddingError::InconsistentArticle {
                    passage: record.passage_id,
                    article: record.article_id,
                });
            }
            Some(_) => {}
            None => {
                self.articles.insert(
                    record.article_id.clone(),
                    (record.domain.clone(), record.published_date),
                );
            }
        }
        self.passages.insert(record.passage_id.clone(), record);
        Ok(())
    }

    /// Validates raw records and stores the survivors.
    pub fn ingest<I>(&mut self, records: I) -> IngestReport
    where
        I: IntoIterator<Item = RawEmbeddingRecord>,
    {
        let mut report = IngestReport::default();
        for raw in records {
            match EmbeddingVector::new(raw.vector, self.dim) {
                Ok((embedding, warned)) => {
                    let record = PassageRecord {
                        passage_id: PassageId(raw.passage_id),
                        article_id: ArticleId(raw.article_id),
                        domain: raw.domain,
                        published_date: raw.published_date,
                        ordinal: raw.ordinal,
                        embedding,
                        text: raw.text,
                    };
                    match self.insert_validated(record) {
                        Ok(()) => {
                            report.accepted += 1;
                            if warned {
                                report.renormalized_warnings += 1;
                            }
                        }
                        Err(EmbeddingError::DuplicatePassage(_)) => {
                            report.reject("duplicate_passage_id")
                        }
                        Err(EmbeddingError::InconsistentArticle { .. }) => {
                            report.reject("inconsistent_article")
                        }
                        Err(_) => unreachable!("insert only fails on duplicates"),
                    }
                }
                Err(EmbeddingError::BadDimension { .. }) => report.reject("bad_dimension"),
                Err(EmbeddingError::ZeroVector) => report.reject("zero_vector"),
                Err(EmbeddingError::NonFinite) => report.reject("non_finite"),
                Err(_) => report.reject("invalid"),
            }
        }
        report
    }
}

/// Contract for an optional external embedding provider: a batch of texts in,
/// one D-dimensional vector per text in input order.
pub trait EmbeddingProvider {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, crate::clients::ClientError>;
}

/// Embeds texts through a provider and validates the response.
pub fn embed_remote(
    texts: &[String],
    provider: &dyn EmbeddingProvider,
    dim: usize,
) -> Result<Vec<EmbeddingVector>, crate::clients::ClientError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let raw = provider.embed_batch(texts)?;
    if raw.len() != texts.len() {
        return Err(crate::clients::ClientError::MalformedResponse(format!(
            "provider returned {} vectors for {} texts",
            raw.len(),
            texts.len()
        )));
    }
    raw.into_iter()
        .map(|v| {
            EmbeddingVector::new(v, dim)
                .map(|(e, _)| e)
                .map_err(|e| crate::clients::ClientError::MalformedResponse(e.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(id: &str, vector: Vec<f64>) -> RawEmbeddingRecord {
        RawEmbeddingRecord {
            passage_id: id.to_string(),
            article_id: format!("art-{id}"),
            domain: "example.com".to_string(),
            published_date: "2022-03-01".parse().unwrap(),
            ordinal: 0,
            vector,
            text: None,
        }
    }

    #[test]
    fn cosine_identity_orthogonal_antipodal() {
        let (v, _) = EmbeddingVector::new(vec![0.6, 0.8, 0.0], 3).unwrap();
        let (e1, _) = EmbeddingVector::new(vec![1.0, 0.0, 0.0], 3).unwrap();
        let (e2, _) = EmbeddingVector::new(vec![0.0, 1.0, 0.0], 3).unwrap();
        let (neg, _) = EmbeddingVector::new(vec![-0.6, -0.8, 0.0], 3).unwrap();
        assert!((cosine_similarity(&v, &v) - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&e1, &e2), 0.0);
        assert!((cosine_similarity(&v, &neg) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn near_unit_norm_accepted_without_warning() {
        let scale = 1.0004;
        let (v, warned) = EmbeddingVector::new(vec![scale, 0.0, 0.0], 3).unwrap();
        assert!(!warned);
        assert!((pairwise_dot(v.as_slice(), v.as_slice()).sqrt() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn off_norm_accepted_with_warning() {
        let (_, warned) = EmbeddingVector::new(vec![2.0, 0.0, 0.0], 3).unwrap();
        assert!(warned);
    }

    #[test]
    fn zero_and_bad_dim_and_nonfinite_rejected() {
        let mut store = PassageStore::new(3);
        let report = store.ingest(vec![
            raw("z", vec![0.0, 0.0, 0.0]),
            raw("d", vec![1.0, 0.0]),
            raw("n", vec![f64::NAN, 0.0, 0.0]),
        ]);
        assert_eq!(report.accepted, 0);
        assert_eq!(report.rejected, 3);
        assert_eq!(report.reasons.get("zero_vector"), Some(&1));
        assert_eq!(report.reasons.get("bad_dimension"), Some(&1));
        assert_eq!(report.reasons.get("non_finite"), Some(&1));
    }

    #[test]
    fn duplicate_passage_rejected() {
        let mut store = PassageStore::new(3);
        let report = store.ingest(vec![
            raw("p", vec![1.0, 0.0, 0.0]),
            raw("p", vec![0.0, 1.0, 0.0]),
        ]);
        assert_eq!(report.accepted, 1);
        assert_eq!(report.reasons.get("duplicate_passage_id"), Some(&1));
    }

    #[test]
    fn ingestion_is_order_independent() {
        let records = vec![
            raw("a", vec![1.0, 0.0, 0.0]),
            raw("b", vec![0.0, 1.0, 0.0]),
            raw("c", vec![0.0, 0.0, 1.0]),
        ];
        let mut forward = PassageStore::new(3);
        forward.ingest(records.clone());
        let mut backward = PassageStore::new(3);
        backward.ingest(records.into_iter().rev().collect::<Vec<_>>());
        assert_eq!(forward, backward);
    }

    struct FixedProvider(Vec<Vec<f64>>);
    impl EmbeddingProvider for FixedProvider {
        fn embed_batch(
            &self,
            _texts: &[String],
        ) -> Result<Vec<Vec<f64>>, crate::clients::ClientError> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn embed_remote_validates_arity() {
        let provider = FixedProvider(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let texts: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let err = embed_remote(&texts, &provider, 2).unwrap_err();
        assert!(matches!(
            err,
            crate::clients::ClientError::MalformedResponse(_)
        ));

        let ok = embed_remote(&texts[..2], &provider, 2).unwrap();
        assert_eq!(ok.len(), 2);
        assert!(embed_remote(&[], &provider, 2).unwrap().is_empty());
    }
}
