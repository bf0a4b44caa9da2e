//! Local vulnerability database built from NVD JSON feeds.
//!
//! Feeds are parsed in full before anything is written, so a malformed
//! document never leaves the store half-updated. Records are keyed by
//! canonical id; a later item with the same id replaces the earlier one.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cve_id::{CveId, InvalidCveId};

pub const DEFAULT_STORE_DIR: &str = "./nvd-store";
pub const STORE_FORMAT_VERSION: u32 = 1;
const STORE_FILE: &str = "cve-store.json";

/// Earliest CVE year accepted into the store.
pub const MIN_RECORD_YEAR: u32 = 1999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Severity {
    None,
    Low,
    Medium,
    High,
    Critical,
}

impl Severity {
    /// CVSS v3 qualitative band for a base score.
    pub fn from_score(score: f64) -> Severity {
        if score <= 0.0 {
            Severity::None
        } else if score < 4.0 {
            Severity::Low
        } else if score < 7.0 {
            Severity::Medium
        } else if score < 9.0 {
            Severity::High
        } else {
            Severity::Critical
        }
    }

    fn from_label(label: &str) -> Option<Severity> {
        match label.trim().to_ascii_uppercase().as_str() {
            "NONE" => Some(Severity::None),
            "LOW" => Some(Severity::Low),
            "MEDIUM" => Some(Severity::Medium),
            "HIGH" => Some(Severity::High),
            "CRITICAL" => Some(Severity::Critical),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CveRecord {
    pub id: CveId,
    pub published: Option<DateTime<Utc>>,
    pub base_score: Option<f64>,
    pub severity: Option<Severity>,
    pub cwe_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedEntry {
    pub name: String,
    pub record_count: usize,
    pub ingested_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IngestSummary {
    /// Items upserted into the store.
    pub processed: usize,
    /// Items dropped because they carried no usable id.
    pub skipped: usize,
}

#[derive(Debug, Error)]
pub enum FeedError {
    #[error("feed is not valid JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("feed document has no CVE_Items array")]
    MissingItems,
    #[error("feed item {index} is malformed: {reason}")]
    MalformedItem { index: usize, reason: String },
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("store file {path} is corrupt: {source}")]
    Corrupt {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("store file {path} has format version {found}, expected {expected}")]
    FormatVersion {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
}

/// Persistent snapshot of the store contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreSnapshot {
    pub format_version: u32,
    pub feeds: Vec<FeedEntry>,
    pub records: Vec<CveRecord>,
}

/// Where a [`CveStore`] is persisted between runs.
pub trait StoreBackend {
    fn load(&self) -> Result<Option<StoreSnapshot>, StoreError>;
    fn save(&self, snapshot: &StoreSnapshot) -> Result<(), StoreError>;
}

/// A single JSON file inside a directory, replaced atomically on save.
#[derive(Debug, Clone)]
pub struct DirectoryBackend {
    dir: PathBuf,
}

impl DirectoryBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DirectoryBackend { dir: dir.into() }
    }

    pub fn file_path(&self) -> PathBuf {
        self.dir.join(STORE_FILE)
    }
}

impl StoreBackend for DirectoryBackend {
    fn load(&self) -> Result<Option<StoreSnapshot>, StoreError> {
        let path = self.file_path();
        let bytes = match fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        let snapshot: StoreSnapshot = serde_json::from_slice(&bytes)
            .map_err(|source| StoreError::Corrupt { path: path.clone(), source })?;
        if snapshot.format_version != STORE_FORMAT_VERSION {
            return Err(StoreError::FormatVersion {
                path,
                found: snapshot.format_version,
                expected: STORE_FORMAT_VERSION,
            });
        }
        Ok(Some(snapshot))
    }

    fn save(&self, snapshot: &StoreSnapshot) -> Result<(), StoreError> {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| StoreError::Io { path, source }
        };
        fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
        let path = self.file_path();
        let tmp = self.dir.join(format!("{STORE_FILE}.tmp"));
        let body = serde_json::to_vec(snapshot).expect("snapshot serializes");
        fs::write(&tmp, body).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }
}

#[derive(Debug, Clone, Default)]
pub struct CveStore {
    records: BTreeMap<CveId, CveRecord>,
    feeds: BTreeMap<String, FeedEntry>,
}

impl CveStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open(backend: &dyn StoreBackend) -> Result<Self, StoreError> {
        let mut store = CveStore::new();
        if let Some(snapshot) = backend.load()? {
            store.feeds = snapshot
                .feeds
                .into_iter()
                .map(|f| (f.name.clone(), f))
                .collect();
            store.records = snapshot
                .records
                .into_iter()
                .map(|r| (r.id.clone(), r))
                .collect();
        }
        Ok(store)
    }

    pub fn open_dir(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::open(&DirectoryBackend::new(dir.as_ref()))
    }

    pub fn save(&self, backend: &dyn StoreBackend) -> Result<(), StoreError> {
        backend.save(&self.snapshot())
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<(), StoreError> {
        self.save(&DirectoryBackend::new(dir.as_ref()))
    }

    pub fn snapshot(&self) -> StoreSnapshot {
        StoreSnapshot {
            format_version: STORE_FORMAT_VERSION,
            feeds: self.feeds.values().cloned().collect(),
            records: self.records.values().cloned().collect(),
        }
    }

    /// Parses `document` as an NVD JSON feed and upserts every item.
    pub fn ingest_feed(&mut self, name: &str, document: &str) -> Result<IngestSummary, FeedError> {
        let parsed = parse_feed(document)?;
        let summary = IngestSummary {
            processed: parsed.records.len(),
            skipped: parsed.skipped,
        };
        for record in parsed.records {
            self.records.insert(record.id.clone(), record);
        }
        self.feeds.insert(
            name.to_string(),
            FeedEntry {
                name: name.to_string(),
                record_count: summary.processed,
                ingested_at: Utc::now(),
            },
        );
        Ok(summary)
    }

    pub fn lookup(&self, id: &str) -> Result<Option<&CveRecord>, InvalidCveId> {
        let id = CveId::parse(id)?;
        Ok(self.records.get(&id))
    }

    pub fn get(&self, id: &CveId) -> Option<&CveRecord> {
        self.records.get(id)
    }

    pub fn cwe_of(&self, id: &str) -> Result<Vec<String>, InvalidCveId> {
        Ok(self
            .lookup(id)?
            .map(|r| r.cwe_ids.clone())
            .unwrap_or_default())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &CveRecord> {
        self.records.values()
    }

    pub fn feeds(&self) -> impl Iterator<Item = &FeedEntry> {
        self.feeds.values()
    }

    /// Deterministic dump of every record, ordered by id.
    pub fn dump_records(&self) -> String {
        let records: Vec<&CveRecord> = self.records.values().collect();
        serde_json::to_string_pretty(&records).expect("records serialize")
    }
}

struct ParsedFeed {
    records: Vec<CveRecord>,
    skipped: usize,
}

// The subset of the NVD 1.1 feed layout that the store reads.

#[derive(Deserialize)]
struct RawItem {
    cve: Option<RawCve>,
    impact: Option<RawImpact>,
    #[serde(rename = "publishedDate")]
    published_date: Option<String>,
}

#[derive(Deserialize)]
struct RawCve {
    #[serde(rename = "CVE_data_meta")]
    meta: Option<RawMeta>,
    problemtype: Option<RawProblemType>,
}

#[derive(Deserialize)]
struct RawMeta {
    #[serde(rename = "ID")]
    id: Option<String>,
}

#[derive(Deserialize)]
struct RawProblemType {
    #[serde(default)]
    problemtype_data: Vec<RawProblemTypeData>,
}

#[derive(Deserialize)]
struct RawProblemTypeData {
    #[serde(default)]
    description: Vec<RawLangValue>,
}

#[derive(Deserialize)]
struct RawLangValue {
    value: String,
}

#[derive(Deserialize)]
struct RawImpact {
    #[serde(rename = "baseMetricV3")]
    v3: Option<RawMetricV3>,
    #[serde(rename = "baseMetricV2")]
    v2: Option<RawMetricV2>,
}

#[derive(Deserialize)]
struct RawMetricV3 {
    #[serde(rename = "cvssV3")]
    cvss: Option<RawCvssV3>,
}

#[derive(Deserialize)]
struct RawCvssV3 {
    #[serde(rename = "baseScore")]
    base_score: Option<f64>,
    #[serde(rename = "baseSeverity")]
    base_severity: Option<String>,
}

#[derive(Deserialize)]
struct RawMetricV2 {
    #[serde(rename = "cvssV2")]
    cvss: Option<RawCvssV2>,
}

#[derive(Deserialize)]
struct RawCvssV2 {
    #[serde(rename = "baseScore")]
    base_score: Option<f64>,
}

fn parse_feed(document: &str) -> Result<ParsedFeed, FeedError> {
    let root: serde_json::Value = serde_json::from_str(document)?;
    let items = root
        .get("CVE_Items")
        .and_then(|v| v.as_array())
        .ok_or(FeedError::MissingItems)?;

    let mut parsed = ParsedFeed {
        records: Vec::with_capacity(items.len()),
        skipped: 0,
    };
    for (index, item) in items.iter().enumerate() {
        let malformed = |reason: String| FeedError::MalformedItem { index, reason };
        let raw = RawItem::deserialize(item).map_err(|e| malformed(e.to_string()))?;
        match convert_item(raw).map_err(malformed)? {
            Some(record) => parsed.records.push(record),
            None => parsed.skipped += 1,
        }
    }
    Ok(parsed)
}

/// `Ok(None)` means the item has no usable id and is skipped.
fn convert_item(raw: RawItem) -> Result<Option<CveRecord>, String> {
    let cve = raw.cve;
    let Some(raw_id) = cve.as_ref().and_then(|c| c.meta.as_ref()).and_then(|m| m.id.as_deref())
    else {
        return Ok(None);
    };
    let id = match CveId::parse(raw_id) {
        Ok(id) if id.year() >= MIN_RECORD_YEAR => id,
        _ => {
            log::warn!("skipping feed item with unusable id {raw_id:?}");
            return Ok(None);
        }
    };

    let published = raw
        .published_date
        .as_deref()
        .map(|s| parse_feed_timestamp(s).ok_or_else(|| format!("unparseable publishedDate {s:?}")))
        .transpose()?;

    let (base_score, severity) = select_score(raw.impact.as_ref());
    if let Some(score) = base_score {
        if !(0.0..=10.0).contains(&score) {
            return Err(format!("base score {score} outside [0, 10]"));
        }
    }

    let mut cwe_ids: Vec<String> = Vec::new();
    let problem_types = cve.and_then(|c| c.problemtype).map(|p| p.problemtype_data);
    for entry in problem_types.into_iter().flatten() {
        for desc in entry.description {
            let label = desc.value.trim();
            if !label.is_empty() && !cwe_ids.iter().any(|c| c == label) {
                cwe_ids.push(label.to_string());
            }
        }
    }

    Ok(Some(CveRecord {
        id,
        published,
        base_score,
        severity,
        cwe_ids,
    }))
}

/// Prefers the CVSS v3 score; falls back to v2 with the v3 severity bands.
fn select_score(impact: Option<&RawImpact>) -> (Option<f64>, Option<Severity>) {
    let Some(impact) = impact else {
        return (None, None);
    };
    if let Some(v3) = impact.v3.as_ref().and_then(|m| m.cvss.as_ref()) {
        if let Some(score) = v3.base_score {
            let severity = v3
                .base_severity
                .as_deref()
                .and_then(Severity::from_label)
                .unwrap_or_else(|| Severity::from_score(score));
            return (Some(score), Some(severity));
        }
    }
    match impact.v2.as_ref().and_then(|m| m.cvss.as_ref()).and_then(|c| c.base_score) {
        Some(score) => (Some(score), Some(Severity::from_score(score))),
        None => (None, None),
    }
}

/// NVD feeds write minute-resolution timestamps such as `2020-01-01T00:00Z`.
fn parse_feed_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    let naive = s.strip_suffix('Z').unwrap_or(s);
    for fmt in ["%Y-%m-%dT%H:%M", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(naive, fmt) {
            return Some(dt.and_utc());
        }
    }
    NaiveDate::parse_from_str(naive, "%Y-%m-%d")
        .ok()
        .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc())
}
