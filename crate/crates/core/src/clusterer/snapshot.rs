//! Versioned binary snapshot of a [`NarrativeStore`].
//!
//! Layout: magic, format version, header fields (dimension, lambda, cluster
//! count), body records, then a SHA-256 checksum over everything preceding
//! it. All integers little-endian; maps serialized in key order so identical
//! stores produce identical bytes.

use super::{ClusterId, ClusterState, NarrativeStore};
use crate::corpus::{ArticleId, PassageId};
use crate::embedding::{PassageRecord, PassageStore};
use chrono::{Datelike, NaiveDate};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};

const MAGIC: &[u8; 8] = b"NARSNAP\0";
const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("snapshot too short ({0} bytes)")]
    Truncated(usize),
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("checksum mismatch")]
    Checksum,
    #[error("malformed snapshot: {0}")]
    Malformed(String),
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn date(&mut self, d: NaiveDate) {
        self.i32(d.num_days_from_ce());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn vector(&mut self, v: &[f64]) {
        for x in v {
            self.f64(*x);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        if self.pos + n > self.buf.len() {
            return Err(SnapshotError::Malformed(format!(
                "unexpected end at offset {}",
                self.pos
            )));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }
    fn u8(&mut self) -> Result<u8, SnapshotError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn i32(&mut self) -> Result<i32, SnapshotError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn date(&mut self) -> Result<NaiveDate, SnapshotError> {
        let days = self.i32()?;
        NaiveDate::from_num_days_from_ce_opt(days)
            .ok_or_else(|| SnapshotError::Malformed(format!("bad date ordinal {days}")))
    }
    fn str(&mut self) -> Result<String, SnapshotError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| SnapshotError::Malformed("invalid utf-8 string".into()))
    }
    fn vector(&mut self, dim: usize) -> Result<Vec<f64>, SnapshotError> {
        let mut v = Vec::with_capacity(dim);
        for _ in 0..dim {
            v.push(self.f64()?);
        }
        Ok(v)
    }
}

impl NarrativeStore {
    /// Serializes the full store to a checksummed binary blob.
    pub fn snapshot_save(&self) -> Vec<u8> {
        let dim = self.dim();
        let mut w = Writer::new();
        w.buf.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.u32(dim as u32);
        w.f64(self.lambda);
        w.u64(self.clusters.len() as u64);

        w.u64(self.next_cluster_id);
        w.u64(self.committed_days.len() as u64);
        for day in &self.committed_days {
            w.date(*day);
        }

        let passages: Vec<&PassageRecord> = self.passages.passages().collect();
        w.u64(passages.len() as u64);
        for p in passages {
            w.str(p.passage_id.as_str());
            w.str(p.article_id.as_str());
            w.str(&p.domain);
            w.date(p.published_date);
            w.u32(p.ordinal);
            match &p.text {
                Some(t) => {
                    w.u8(1);
                    w.str(t);
                }
                None => w.u8(0),
            }
            w.vector(p.embedding.as_slice());
        }

        for cluster in self.clusters.values() {
            w.u64(cluster.cluster_id.0);
            w.date(cluster.created_on);
            w.u64(cluster.member_count);
            w.vector(&cluster.resultant);
            w.u64(cluster.per_domain_articles.len() as u64);
            for (domain, articles) in &cluster.per_domain_articles {
                w.str(domain);
                w.u64(articles.len() as u64);
                for a in articles {
                    w.str(a.as_str());
                }
            }
            w.u64(cluster.per_day_articles.len() as u64);
            for (day, count) in &cluster.per_day_articles {
                w.date(*day);
                w.u64(*count);
            }
        }

        w.u64(self.assignments.len() as u64);
        for (passage, (cluster, sim)) in &self.assignments {
            w.str(passage.as_str());
            w.u64(cluster.0);
            w.f64(*sim);
        }

        let digest = Sha256::digest(&w.buf);
        w.buf.extend_from_slice(&digest);
        w.buf
    }

    /// Restores a store from [`NarrativeStore::snapshot_save`] output.
    pub fn snapshot_load(blob: &[u8]) -> Result<NarrativeStore, SnapshotError> {
        if blob.len() < MAGIC.len() + 4 + CHECKSUM_LEN {
            return Err(SnapshotError::Truncated(blob.len()));
        }
        let (payload, checksum) = blob.split_at(blob.len() - CHECKSUM_LEN);
        let digest = Sha256::digest(payload);
        if digest.as_slice() != checksum {
            return Err(SnapshotError::Checksum);
        }

        let mut r = Reader::new(payload);
        if r.take(MAGIC.len())? != MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(SnapshotError::Version(version));
        }
        let dim = r.u32()? as usize;
        let lambda = r.f64()?;
        let cluster_count = r.u64()?;

        let next_cluster_id = r.u64()?;
        let day_count = r.u64()?;
        let mut committed_days = BTreeSet::new();
        for _ in 0..day_count {
            committed_days.insert(r.date()?);
        }

        let passage_count = r.u64()?;
        let mut passage_store = PassageStore::new(dim);
        for _ in 0..passage_count {
            let passage_id = r.str()?;
            let article_id = r.str()?;
            let domain = r.str()?;
            let published_date = r.date()?;
            let ordinal = r.u32()?;
            let text = if r.u8()? == 1 { Some(r.str()?) } else { None };
            let vector = r.vector(dim)?;
            // Stored vectors are restored bit-exactly, without renormalizing.
            let record = PassageRecord {
                passage_id: PassageId(passage_id),
                article_id: ArticleId(article_id),
                domain,
                published_date,
                ordinal,
                embedding: crate::embedding::EmbeddingVector::from_unit_unchecked(vector),
                text,
            };
            passage_store
                .insert_trusted(record)
                .map_err(|e| SnapshotError::Malformed(e.to_string()))?;
        }

        let mut clusters = BTreeMap::new();
        for _ in 0..cluster_count {
            let id = ClusterId(r.u64()?);
            let created_on = r.date()?;
            let member_count = r.u64()?;
            let resultant = r.vector(dim)?;
            let domain_count = r.u64()?;
            let mut per_domain_articles: BTreeMap<String, BTreeSet<ArticleId>> = BTreeMap::new();
            for _ in 0..domain_count {
                let domain = r.str()?;
                let article_count = r.u64()?;
                let mut set = BTreeSet::new();
                for _ in 0..article_count {
                    set.insert(ArticleId(r.str()?));
                }
                per_domain_articles.insert(domain, set);
            }
            let per_day_count = r.u64()?;
            let mut per_day_articles = BTreeMap::new();
            for _ in 0..per_day_count {
                let day = r.date()?;
                let count = r.u64()?;
                per_day_articles.insert(day, count);
            }
            clusters.insert(
                id,
                ClusterState::from_parts(
                    id,
                    resultant,
                    member_count,
                    per_domain_articles,
                    per_day_articles,
                    created_on,
                ),
            );
        }

        let assignment_count = r.u64()?;
        let mut assignments = BTreeMap::new();
        for _ in 0..assignment_count {
            let passage = PassageId(r.str()?);
            let cluster = ClusterId(r.u64()?);
            let sim = r.f64()?;
            if !clusters.contains_key(&cluster) {
                return Err(SnapshotError::Malformed(format!(
                    "assignment references unknown cluster {cluster}"
                )));
            }
            assignments.insert(passage, (cluster, sim));
        }
        if r.pos != payload.len() {
            return Err(SnapshotError::Malformed(format!(
                "{} trailing bytes",
                payload.len() - r.pos
            )));
        }

        Ok(NarrativeStore::from_parts(
            passage_store,
            lambda,
            clusters,
            assignments,
            committed_days,
            next_cluster_id,
        ))
    }

    /// Identifier of a snapshot blob: first 8 bytes of its checksum, hex.
    pub fn snapshot_id(blob: &[u8]) -> String {
        let tail = &blob[blob.len().saturating_sub(CHECKSUM_LEN)..];
        tail.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Line-delimited cluster records for inspection.
    pub fn export_clusters_jsonl(
        &self,
        include_centroids: bool,
        out: &mut impl std::io::Write,
    ) -> std::io::Result<()> {
        for cluster in self.clusters.values() {
            let record = ClusterExport {
                cluster_id: cluster.cluster_id,
                created_on: cluster.created_on,
                member_count: cluster.member_count,
                article_count: cluster.article_count(),
                domain_count: cluster.per_domain_articles.len() as u64,
                per_day_articles: cluster
                    .per_day_articles
                    .iter()
                    .map(|(d, c)| (d.to_string(), *c))
                    .collect(),
                centroid: include_centroids.then(|| cluster.centroid().to_vec()),
            };
            serde_json::to_writer(&mut *out, &record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(serde::Serialize)]
struct ClusterExport {
    cluster_id: ClusterId,
    created_on: NaiveDate,
    member_count: u64,
    article_count: u64,
    domain_count: u64,
    per_day_articles: BTreeMap<String, u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    centroid: Option<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::super::{FitConfig, NarrativeStore};
    use super::*;
    use crate::embedding::RawEmbeddingRecord;

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn record(id: &str, day: &str, vector: Vec<f64>) -> RawEmbeddingRecord {
        RawEmbeddingRecord {
            passage_id: id.to_string(),
            article_id: format!("art-{id}"),
            domain: "example.com".to_string(),
            published_date: date(day),
            ordinal: 0,
            vector,
            text: Some(format!("text of {id}")),
        }
    }

    fn sample_store() -> NarrativeStore {
        let mut store = NarrativeStore::new(3, 0.60);
        store.passage_store_mut().ingest(vec![
            record("p0", "2022-01-01", vec![1.0, 0.0, 0.0]),
            record("p1", "2022-01-01", vec![0.0, 1.0, 0.0]),
            record("p2", "2022-01-02", vec![0.0, 0.0, 1.0]),
        ]);
        store
            .partial_fit_day(date("2022-01-01"), &FitConfig::default())
            .unwrap();
        store
    }

    #[test]
    fn round_trip_preserves_fit_behavior() {
        let mut direct = sample_store();
        let blob = direct.snapshot_save();
        let mut restored = NarrativeStore::snapshot_load(&blob).unwrap();
        assert_eq!(direct, restored);

        let config = FitConfig::default();
        let a = direct.partial_fit_day(date("2022-01-02"), &config).unwrap();
        let b = restored
            .partial_fit_day(date("2022-01-02"), &config)
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(direct.snapshot_save(), restored.snapshot_save());
    }

    #[test]
    fn empty_store_round_trips() {
        let store = NarrativeStore::new(4, 0.60);
        let blob = store.snapshot_save();
        let restored = NarrativeStore::snapshot_load(&blob).unwrap();
        assert_eq!(store, restored);
    }

    #[test]
    fn corrupted_blob_fails_checksum() {
        let store = sample_store();
        let mut blob = store.snapshot_save();
        let mid = blob.len() / 2;
        blob[mid] ^= 0xff;
        assert!(matches!(
            NarrativeStore::snapshot_load(&blob),
            Err(SnapshotError::Checksum)
        ));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let store = sample_store();
        let mut blob = store.snapshot_save();
        // Bump the version field and rewrite the checksum so only the
        // version check can fail.
        blob[8] = 99;
        let body_len = blob.len() - 32;
        let digest = Sha256::digest(&blob[..body_len]);
        blob[body_len..].copy_from_slice(&digest);
        assert!(matches!(
            NarrativeStore::snapshot_load(&blob),
            Err(SnapshotError::Version(99))
        ));
    }

    #[test]
    fn truncated_blob_is_rejected() {
        assert!(matches!(
            NarrativeStore::snapshot_load(&[1, 2, 3]),
            Err(SnapshotError::Truncated(3))
        ));
    }

    #[test]
    fn snapshot_id_is_stable() {
        let store = sample_store();
        let blob = store.snapshot_save();
        assert_eq!(
            NarrativeStore::snapshot_id(&blob),
            NarrativeStore::snapshot_id(&blob)
        );
        assert_eq!(NarrativeStore::snapshot_id(&blob).len(), 16);
    }
}
