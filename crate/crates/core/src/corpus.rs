//! Domain types and deterministic text preprocessing: normalization,
//! paragraph and passage segmentation, and admission gating.
//!
//! All operations here are pure functions over their inputs and safe to call
//! concurrently.

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::OnceLock;

/// Default passage length in words.
pub const DEFAULT_MAX_TOKENS: usize = 100;

/// Opaque unique identifier of an article within the corpus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArticleId(pub String);

impl ArticleId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ArticleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ArticleId {
    fn from(s: &str) -> Self {
        ArticleId(s.to_string())
    }
}

/// Opaque unique identifier of a passage.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PassageId(pub String);

impl PassageId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PassageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PassageId {
    fn from(s: &str) -> Self {
        PassageId(s.to_string())
    }
}

/// One source article as supplied by the data source.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArticleDoc {
    pub article_id: ArticleId,
    /// Registrable domain, lowercase.
    pub domain: String,
    /// Publication date, UTC calendar day.
    pub published_date: NaiveDate,
    /// IETF-style language code supplied by the source.
    pub language_tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub body: String,
}

/// A ≤ `max_tokens`-word chunk of one article paragraph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassagePlain {
    pub passage_id: PassageId,
    pub article_id: ArticleId,
    /// 0-based position within the article.
    pub ordinal: u32,
    pub token_count: usize,
    pub text: String,
}

/// Inclusive measurement period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
}

impl StudyWindow {
    pub fn new(start_date: NaiveDate, end_date: NaiveDate) -> Result<Self, CorpusError> {
        if start_date > end_date {
            return Err(CorpusError::InvalidWindow {
                start: start_date,
                end: end_date,
            });
        }
        Ok(StudyWindow {
            start_date,
            end_date,
        })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start_date <= date && date <= self.end_date
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("study window start {start} is after end {end}")]
    InvalidWindow { start: NaiveDate, end: NaiveDate },
}

/// Why an article was refused at the admission gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NonEnglish,
    EmptyBody,
    OutOfWindow,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RejectReason::NonEnglish => "non_english",
            RejectReason::EmptyBody => "empty_body",
            RejectReason::OutOfWindow => "out_of_window",
        };
        f.write_str(s)
    }
}

/// Outcome of [`admit_article`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Admit,
    Reject(RejectReason),
}

impl Admission {
    pub fn is_admitted(&self) -> bool {
        matches!(self, Admission::Admit)
    }
}

fn url_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Matches mid-token as well, consuming to the end of the non-space run so
    // removal cannot splice a new URL together.
    RE.get_or_init(|| Regex::new(r"(?i)(?:https?://|www\.)\S+").unwrap())
}

fn tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<[^>]*>").unwrap())
}

/// True for codepoints in the common emoji, pictograph, and emoji-modifier
/// blocks.
fn is_emoji(c: char) -> bool {
    matches!(u32::from(c),
        0x1F000..=0x1F0FF   // mahjong, dominoes, playing cards
        | 0x1F300..=0x1F5FF // misc symbols and pictographs
        | 0x1F600..=0x1F64F // emoticons
        | 0x1F680..=0x1F6FF // transport and map
        | 0x1F700..=0x1F9FF // alchemical .. supplemental symbols
        | 0x1FA00..=0x1FAFF // extended pictographs
        | 0x2600..=0x27BF   // misc symbols, dingbats
        | 0x2B00..=0x2BFF   // misc symbols and arrows (stars, etc.)
        | 0xFE00..=0xFE0F   // variation selectors
        | 0x1F1E6..=0x1F1FF // regional indicators
        | 0x200D..=0x200D   // zero-width joiner
    )
}

/// Strips markup tags, emoji codepoints, and URLs, then collapses whitespace.
///
/// Runs of whitespace containing a newline or tab collapse to a single
/// newline (paragraph boundaries survive for segmentation); all other runs
/// collapse to a single space. Idempotent.
pub fn normalize_text(raw: &str) -> String {
    let no_tags = tag_regex().replace_all(raw, "");
    let no_emoji: String = no_tags.chars().filter(|c| !is_emoji(*c)).collect();
    let no_urls = url_regex().replace_all(&no_emoji, "");

    let mut out = String::with_capacity(no_urls.len());
    let mut run_has_break = false;
    let mut in_run = false;
    for c in no_urls.chars() {
        if c.is_whitespace() {
            in_run = true;
            if c == '\n' || c == '\t' {
                run_has_break = true;
            }
        } else {
            if in_run {
                if !out.is_empty() {
                    out.push(if run_has_break { '\n' } else { ' ' });
                }
                in_run = false;
                run_has_break = false;
            }
            out.push(c);
        }
    }
    out
}

/// Splits a normalized article body into ≤ `max_tokens`-word passages.
///
/// The body splits on newline/tab into paragraphs; each paragraph splits on
/// whitespace into word tokens and is chunked greedily. Chunks never span
/// paragraph boundaries and only the last chunk of a paragraph may be short.
/// Ordinals are contiguous from 0 across the whole article.
pub fn segment_article(article: &ArticleDoc, max_tokens: usize) -> Vec<PassagePlain> {
    assert!(max_tokens >= 1, "max_tokens must be at least 1");
    let mut passages = Vec::new();
    let mut ordinal: u32 = 0;
    for paragraph in article.body.split(['\n', '\t']) {
        let tokens: Vec<&str> = paragraph.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        for chunk in tokens.chunks(max_tokens) {
            passages.push(PassagePlain {
                passage_id: PassageId(format!("{}#{}", article.article_id, ordinal)),
                article_id: article.article_id.clone(),
                ordinal,
                token_count: chunk.len(),
                text: chunk.join(" "),
            });
            ordinal += 1;
        }
    }
    passages
}

fn is_english_tag(tag: &str) -> bool {
    let primary = tag.split(['-', '_']).next().unwrap_or("");
    primary.eq_ignore_ascii_case("en")
}

/// Gate an article on language tag, normalized-body emptiness, and the study
/// window.
pub fn admit_article(article: &ArticleDoc, window: &StudyWindow) -> Admission {
    if !is_english_tag(&article.language_tag) {
        return Admission::Reject(RejectReason::NonEnglish);
    }
    if normalize_text(&article.body).is_empty() {
        return Admission::Reject(RejectReason::EmptyBody);
    }
    if !window.contains(article.published_date) {
        return Admission::Reject(RejectReason::OutOfWindow);
    }
    Admission::Admit
}
