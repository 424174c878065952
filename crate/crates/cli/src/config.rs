//! Pipeline configuration: a flat key = value file, overridable per key from
//! the environment (`NARR_<KEY>`), with env > flag > file precedence. The
//! effective config serializes to a stable hash recorded in every output.

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use narratives::clusterer::FitConfig;
use narratives::corpus::StudyWindow;
use narratives::curation::CurationConfig;
use narratives::influence::InfluenceConfig;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub dimension: usize,
    pub lambda: f64,
    pub max_iterations: u32,
    pub centroid_shift_tol: f64,
    pub max_new_clusters_per_day: Option<u32>,
    pub max_tokens: usize,
    pub include_title: bool,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub min_articles: u64,
    pub max_single_site_share: f64,
    pub pmi_alpha: f64,
    pub top_k_keywords: usize,
    pub representatives: usize,
    pub epsilon: f64,
    pub resolution: f64,
    pub prune_below: f64,
    pub bootstrap_iterations: u32,
    pub subset_size: usize,
    pub window_days: i64,
    pub amplify_cutoff: f64,
    pub min_instances: usize,
    pub alpha: f64,
    pub num_comparisons: Option<u32>,
    pub match_threshold: f64,
    pub min_weekly_volume: u64,
    pub rng_seed: u64,
    pub data_root: PathBuf,
    pub embedding_endpoint: Option<String>,
    pub summarizer_endpoint: Option<String>,
    pub classifier_endpoint: Option<String>,
    pub endpoint_timeout_ms: u64,
    pub endpoint_retries: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dimension: 768,
            lambda: 0.60,
            max_iterations: 50,
            centroid_shift_tol: 1e-4,
            max_new_clusters_per_day: None,
            max_tokens: 100,
            include_title: false,
            window_start: NaiveDate::from_ymd_opt(2022, 1, 1).unwrap(),
            window_end: NaiveDate::from_ymd_opt(2022, 11, 1).unwrap(),
            min_articles: 25,
            max_single_site_share: 0.5,
            pmi_alpha: 1.0,
            top_k_keywords: 5,
            representatives: 5,
            epsilon: 0.1,
            resolution: 1.0,
            prune_below: 0.0,
            bootstrap_iterations: 250,
            subset_size: 100,
            window_days: 7,
            amplify_cutoff: 0.15,
            min_instances: 25,
            alpha: 0.05,
            num_comparisons: None,
            match_threshold: 0.60,
            min_weekly_volume: 25,
            rng_seed: 0,
            data_root: PathBuf::from("data"),
            embedding_endpoint: None,
            summarizer_endpoint: None,
            classifier_endpoint: None,
            endpoint_timeout_ms: 30_000,
            endpoint_retries: 2,
        }
    }
}

fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (number, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected key = value", number + 1);
        };
        let value = value.trim().trim_matches('"');
        map.insert(key.trim().to_string(), value.to_string());
    }
    Ok(map)
}

impl PipelineConfig {
    /// Loads the file (when present), then applies `NARR_<KEY>` environment
    /// overrides.
    pub fn load(path: Option<&Path>) -> Result<PipelineConfig> {
        let mut map = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            map = parse_kv(&text)?;
        }
        let mut config = PipelineConfig::default();
        config.apply(&map)?;
        config.apply(&env_overrides())?;
        config.validate()?;
        Ok(config)
    }

    /// Applies overrides on top of the current values (used for flags, which
    /// sit between file and environment).
    pub fn apply_overrides(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        self.apply(map)?;
        self.apply(&env_overrides())?;
        self.validate()
    }

    fn apply(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        for (key, value) in map {
            self.set(key, value)
                .with_context(|| format!("config key {key} = {value:?}"))?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dimension" => self.dimension = value.parse()?,
            "lambda" => self.lambda = value.parse()?,
            "max_iterations" => self.max_iterations = value.parse()?,
            "max_new_clusters_per_day" => {
                self.max_new_clusters_per_day = if value.is_empty() {
                    None
                } else {
                    Some(value.parse()?)
                }
            }
            "centroid_shift_tol" => self.centroid_shift_tol = value.parse()?,
            "max_tokens" => self.max_tokens = value.parse()?,
            "include_title" => self.include_title = value.parse()?,
            "window_start" => self.window_start = value.parse()?,
            "window_end" => self.window_end = value.parse()?,
            "min_articles" => self.min_articles = value.parse()?,
            "max_single_site_share" => self.max_single_site_share = value.parse()?,
            "pmi_alpha" => self.pmi_alpha = value.parse()?,
            "top_k_keywords" => self.top_k_keywords = value.parse()?,
            "representatives" => self.representatives = value.parse()?,
            "epsilon" => self.epsilon = value.parse()?,
            "resolution" => self.resolution = value.parse()?,
            "prune_below" => self.prune_below = value.parse()?,
            "bootstrap_iterations" => self.bootstrap_iterations = value.parse()?,
            "subset_size" => self.subset_size = value.parse()?,
            "window_days" => self.window_days = value.parse()?,
            "amplify_cutoff" => self.amplify_cutoff = value.parse()?,
            "min_instances" => self.min_instances = value.parse()?,
            "alpha" => self.alpha = value.parse()?,
            "num_comparisons" => {
                self.num_comparisons = if value.is_empty() {
                    None
                } else {
                    Some(value.parse()?)
                }
            }
            "match_threshold" => self.match_threshold = value.parse()?,
            "min_weekly_volume" => self.min_weekly_volume = value.parse()?,
            "rng_seed" => self.rng_seed = value.parse()?,
            "data_root" => self.data_root = PathBuf::from(value),
            "embedding_endpoint" => self.embedding_endpoint = non_empty(value),
            "summarizer_endpoint" => self.summarizer_endpoint = non_empty(value),
            "classifier_endpoint" => self.classifier_endpoint = non_empty(value),
            "endpoint_timeout_ms" => self.endpoint_timeout_ms = value.parse()?,
            "endpoint_retries" => self.endpoint_retries = value.parse()?,
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            bail!("lambda must be in (0,1)");
        }
        if self.window_start > self.window_end {
            bail!("window_start after window_end");
        }
        if !(self.max_single_site_share > 0.0 && self.max_single_site_share <= 1.0) {
            bail!("max_single_site_share must be in (0,1]");
        }
        if !(self.amplify_cutoff > 0.0 && self.amplify_cutoff < 1.0) {
            bail!("amplify_cutoff must be in (0,1)");
        }
        if self.dimension == 0 || self.max_tokens == 0 {
            bail!("dimension and max_tokens must be positive");
        }
        Ok(())
    }

    /// Canonical key = value listing of the effective config. Filesystem
    /// locations are excluded: they do not affect computed results, and the
    /// hash must match across checkouts of the same pipeline.
    pub fn canonical(&self) -> String {
        let mut lines = vec![
            format!("alpha = {}", self.alpha),
            format!("amplify_cutoff = {}", self.amplify_cutoff),
            format!("bootstrap_iterations = {}", self.bootstrap_iterations),
            format!("centroid_shift_tol = {}", self.centroid_shift_tol),
            format!("classifier_endpoint = {}", opt(&self.classifier_endpoint)),
            format!("dimension = {}", self.dimension),
            format!("embedding_endpoint = {}", opt(&self.embedding_endpoint)),
            format!("endpoint_retries = {}", self.endpoint_retries),
            format!("endpoint_timeout_ms = {}", self.endpoint_timeout_ms),
            format!("epsilon = {}", self.epsilon),
            format!("include_title = {}", self.include_title),
            format!("lambda = {}", self.lambda),
            format!("match_threshold = {}", self.match_threshold),
            format!("max_iterations = {}", self.max_iterations),
            format!(
                "max_new_clusters_per_day = {}",
                self.max_new_clusters_per_day
                    .map_or(String::new(), |v| v.to_string())
            ),
            format!("max_single_site_share = {}", self.max_single_site_share),
            format!("max_tokens = {}", self.max_tokens),
            format!("min_articles = {}", self.min_articles),
            format!("min_instances = {}", self.min_instances),
            format!("min_weekly_volume = {}", self.min_weekly_volume),
            format!(
                "num_comparisons = {}",
                self.num_comparisons
                    .map_or(String::new(), |v| v.to_string())
            ),
            format!("pmi_alpha = {}", self.pmi_alpha),
            format!("prune_below = {}", self.prune_below),
            format!("representatives = {}", self.representatives),
            format!("resolution = {}", self.resolution),
            format!("rng_seed = {}", self.rng_seed),
            format!("subset_size = {}", self.subset_size),
            format!("summarizer_endpoint = {}", opt(&self.summarizer_endpoint)),
            format!("top_k_keywords = {}", self.top_k_keywords),
            format!("window_days = {}", self.window_days),
            format!("window_end = {}", self.window_end),
            format!("window_start = {}", self.window_start),
        ];
        lines.push(String::new());
        lines.join("\n")
    }

    /// Stable 16-hex-digit hash of the effective config.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn study_window(&self) -> StudyWindow {
        StudyWindow::new(self.window_start, self.window_end).expect("validated window")
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            lambda: self.lambda,
            max_iterations: self.max_iterations,
            centroid_shift_tol: self.centroid_shift_tol,
            max_new_clusters_per_day: self.max_new_clusters_per_day,
        }
    }

    pub fn curation_config(&self) -> CurationConfig {
        CurationConfig {
            min_articles: self.min_articles,
            max_single_site_share: self.max_single_site_share,
            pmi_alpha: self.pmi_alpha,
            top_k_keywords: self.top_k_keywords,
            representatives: self.representatives,
            stem: false,
            stopword_override: None,
        }
    }

    pub fn influence_config(&self) -> InfluenceConfig {
        InfluenceConfig {
            bootstrap_iterations: self.bootstrap_iterations,
            subset_size: self.subset_size,
            window_days: self.window_days,
            amplify_cutoff: self.amplify_cutoff,
            min_instances: self.min_instances,
            alpha: self.alpha,
            num_comparisons: self.num_comparisons,
            rng_seed: self.rng_seed,
        }
    }
}

fn non_empty(value: &str) -> Option<String> {
    if value.is_empty() {
        None
    } else {
        Some(value.to_string())
    }
}

fn opt(value: &Option<String>) -> String {
    value.clone().unwrap_or_default()
}

fn env_overrides() -> BTreeMap<String, String> {
    std::env::vars()
        .filter_map(|(key, value)| {
            key.strip_prefix("NARR_")
                .map(|k| (k.to_ascii_lowercase(), value))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_parsing_and_hash_stability() {
        let map = parse_kv("# comment\nlambda = 0.7\ndata_root = \"/tmp/x\"\n").unwrap();
        let mut config = PipelineConfig::default();
        config.apply(&map).unwrap();
        assert_eq!(config.lambda, 0.7);
        assert_eq!(config.data_root, PathBuf::from("/tmp/x"));
        assert_eq!(config.hash(), config.hash());
        let other = PipelineConfig::default();
        assert_ne!(config.hash(), other.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let map = parse_kv("nonsense = 1").unwrap();
        let mut config = PipelineConfig::default();
        assert!(config.apply(&map).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut config = PipelineConfig::default();
        assert!(config.set("lambda", "1.5").is_ok());
        assert!(config.validate().is_err());
    }
}
