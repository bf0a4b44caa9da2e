//! Per-language aggregation and report emission.
//!
//! Three output formats are supported:
//!
//! * `json`: a single `report.json` with canonical (sorted) key order.
//! * `csv`: one table per statistic family, header row first.
//! * `chart-data`: one headerless `label<TAB>value` file per figure or table.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::miner::FixEpisode;
use crate::stats::{correlate, mean, CorrelationPair, CorrelationResult, EpisodeMetrics};
use crate::store::CveStore;

pub const SCHEMA_VERSION: u32 = 1;

/// Label used for episodes whose CVE has no record or no CWE reference.
pub const UNMAPPED_CWE: &str = "UNMAPPED";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot read report {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("report {path} is not a valid report document: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv encoding failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("unknown report format {0:?} (expected json, csv or chart-data)")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub episode: FixEpisode,
    pub metrics: EpisodeMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectResult {
    pub project_name: String,
    pub language: String,
    pub branch: Option<String>,
    pub head: Option<String>,
    pub commit_count: usize,
    pub episodes: Vec<EpisodeEntry>,
    /// Episodes whose CVE id has no record in the store.
    pub join_misses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CweShare {
    pub cwe: String,
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageStats {
    pub language: String,
    pub project_count: usize,
    pub episode_count: usize,
    pub join_misses: usize,
    pub mean_elapsed_fix_days: Option<f64>,
    pub mean_publication_to_fix_days: Option<f64>,
    pub mean_contributors: Option<f64>,
    pub mean_commits_between: Option<f64>,
    pub mean_total_lines_changed: Option<f64>,
    pub mean_total_files_changed: Option<f64>,
    pub correlations: Vec<CorrelationResult>,
    pub cwe_distribution: Vec<CweShare>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetFailure {
    pub target: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub generated_at: DateTime<Utc>,
    pub projects: Vec<ProjectResult>,
    pub languages: Vec<LanguageStats>,
    pub errors: Vec<TargetFailure>,
    pub decisions: BTreeMap<String, String>,
}

impl Report {
    /// Aggregates `projects` and stamps the current time.
    pub fn build(projects: Vec<ProjectResult>, errors: Vec<TargetFailure>, store: &CveStore) -> Self {
        let languages = aggregate_language(&projects, store);
        Report {
            schema_version: SCHEMA_VERSION,
            generated_at: Utc::now(),
            projects,
            languages,
            errors,
            decisions: methodology(),
        }
    }

    pub fn episode_count(&self) -> usize {
        self.projects.iter().map(|p| p.episodes.len()).sum()
    }

    pub fn read(path: &Path) -> Result<Report, ReportError> {
        let body = fs::read_to_string(path).map_err(|source| ReportError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&body).map_err(|source| ReportError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Method choices recorded in every report so results stay auditable.
pub fn methodology() -> BTreeMap<String, String> {
    [
        ("activity_window", "commits strictly after the found commit up to and including the fix commit"),
        ("author_identity", "case-insensitive email, else exact name"),
        ("branch_scope", "full ancestry of the default branch head"),
        ("correlation_method", "sample pearson, minimum 3 samples, absent on zero variance"),
        ("cvss_version", "v3 base score preferred, v2 fallback with v3 severity bands"),
        ("cwe_counting", "one count per CWE label; no record or no labels counts as UNMAPPED"),
        ("day_length", "86400 seconds, UTC"),
        ("merge_churn", "diffed against the first parent"),
        ("mention_matching", "context-free, merge commits included"),
        ("single_mention_episodes", "excluded from elapsed and activity means, included in publication and churn means"),
        ("timestamp", "committer date"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

/// Share of each CWE label across `episodes`, highest first.
///
/// Every label of an episode's record receives one count. Ties keep the
/// order in which labels were first seen.
pub fn cwe_distribution<'a>(
    episodes: impl IntoIterator<Item = &'a FixEpisode>,
    store: &CveStore,
) -> Vec<CweShare> {
    let mut counts: Vec<(String, usize)> = Vec::new();
    let mut bump = |label: &str| match counts.iter_mut().find(|(l, _)| l == label) {
        Some((_, n)) => *n += 1,
        None => counts.push((label.to_string(), 1)),
    };
    for episode in episodes {
        match store.get(&episode.cve_id) {
            Some(record) if !record.cwe_ids.is_empty() => record.cwe_ids.iter().for_each(|l| bump(l)),
            _ => bump(UNMAPPED_CWE),
        }
    }
    let total: usize = counts.iter().map(|(_, n)| n).sum();
    // Stable sort keeps first-seen order among equal counts.
    counts.sort_by(|a, b| b.1.cmp(&a.1));
    counts
        .into_iter()
        .map(|(cwe, n)| CweShare {
            cwe,
            percentage: 100.0 * n as f64 / total as f64,
        })
        .collect()
}

/// Pools every project sharing a language label and summarizes it.
/// Output is ordered by language label.
pub fn aggregate_language(results: &[ProjectResult], store: &CveStore) -> Vec<LanguageStats> {
    let mut groups: BTreeMap<&str, Vec<&ProjectResult>> = BTreeMap::new();
    for result in results {
        groups.entry(result.language.as_str()).or_default().push(result);
    }
    groups
        .into_iter()
        .map(|(language, projects)| summarize(language, &projects, store))
        .collect()
}

fn summarize(language: &str, projects: &[&ProjectResult], store: &CveStore) -> LanguageStats {
    let entries: Vec<&EpisodeEntry> = projects.iter().flat_map(|p| &p.episodes).collect();
    let present = |f: fn(&EpisodeEntry) -> Option<f64>| -> Option<f64> {
        let values: Vec<f64> = entries.iter().filter_map(|e| f(e)).collect();
        mean(&values)
    };
    LanguageStats {
        language: language.to_string(),
        project_count: projects.len(),
        episode_count: entries.len(),
        join_misses: projects.iter().map(|p| p.join_misses).sum(),
        mean_elapsed_fix_days: present(|e| e.metrics.elapsed_fix_days),
        mean_publication_to_fix_days: present(|e| e.metrics.publication_to_fix_days),
        mean_contributors: present(|e| e.metrics.contributors_between.map(|n| n as f64)),
        mean_commits_between: present(|e| e.metrics.commits_between.map(|n| n as f64)),
        mean_total_lines_changed: present(|e| Some(e.episode.total_lines_changed as f64)),
        mean_total_files_changed: present(|e| Some(e.episode.total_files_changed as f64)),
        correlations: CorrelationPair::ALL
            .iter()
            .map(|&pair| correlate(pair, entries.iter().map(|e| &e.metrics)))
            .collect(),
        cwe_distribution: cwe_distribution(entries.iter().map(|e| &e.episode), store),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    ChartData,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "chart-data" => Ok(ReportFormat::ChartData),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::ChartData => "chart-data",
        })
    }
}

/// A rendered output file, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub file_name: String,
    pub contents: String,
}

pub fn render(report: &Report, format: ReportFormat) -> Result<Vec<Document>, ReportError> {
    match format {
        ReportFormat::Json => Ok(vec![Document {
            file_name: "report.json".into(),
            contents: to_canonical_json(report),
        }]),
        ReportFormat::Csv => render_csv(report),
        ReportFormat::ChartData => Ok(render_chart_data(report)),
    }
}

/// Writes every rendered document under `out_dir`, creating it if needed.
pub fn emit_report(
    report: &Report,
    format: ReportFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ReportError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();
    for doc in render(report, format)? {
        let path = out_dir.join(&doc.file_name);
        fs::write(&path, doc.contents.as_bytes()).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

/// Pretty-printed JSON with object keys in sorted order.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    // serde_json's default map is ordered by key, so a round trip through
    // Value canonicalizes struct field order.
    let value = serde_json::to_value(value).expect("report serializes");
    let mut out = serde_json::to_string_pretty(&value).expect("value serializes");
    out.push('\n');
    out
}

fn opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_document<F>(file_name: &str, header: &[&str], fill: F) -> Result<Document, ReportError>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<(), csv::Error>,
{
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header)?;
    fill(&mut writer)?;
    let bytes = writer.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(Document {
        file_name: file_name.to_string(),
        contents: String::from_utf8(bytes).expect("csv output is utf-8"),
    })
}

fn render_csv(report: &Report) -> Result<Vec<Document>, ReportError> {
    let episodes = csv_document(
        "episodes.csv",
        &[
            "project", "language", "cve_id", "found_hash", "fix_hash", "mention_count",
            "total_lines_changed", "total_files_changed", "elapsed_fix_days",
            "publication_to_fix_days", "contributors_between", "commits_between", "base_score",
        ],
        |w| {
            for project in &report.projects {
                for EpisodeEntry { episode: e, metrics: m } in &project.episodes {
                    w.write_record([
                        project.project_name.clone(),
                        project.language.clone(),
                        e.cve_id.to_string(),
                        e.found_hash.clone().unwrap_or_default(),
                        e.fix_hash.clone(),
                        e.mention_count.to_string(),
                        e.total_lines_changed.to_string(),
                        e.total_files_changed.to_string(),
                        opt(m.elapsed_fix_days),
                        opt(m.publication_to_fix_days),
                        m.contributors_between.map(|n| n.to_string()).unwrap_or_default(),
                        m.commits_between.map(|n| n.to_string()).unwrap_or_default(),
                        opt(m.base_score),
                    ])?;
                }
            }
            Ok(())
        },
    )?;

    let languages = csv_document(
        "language_stats.csv",
        &[
            "language", "project_count", "episode_count", "join_misses",
            "mean_elapsed_fix_days", "mean_publication_to_fix_days", "mean_contributors",
            "mean_commits_between", "mean_total_lines_changed", "mean_total_files_changed",
        ],
        |w| {
            for s in &report.languages {
                w.write_record([
                    s.language.clone(),
                    s.project_count.to_string(),
                    s.episode_count.to_string(),
                    s.join_misses.to_string(),
                    opt(s.mean_elapsed_fix_days),
                    opt(s.mean_publication_to_fix_days),
                    opt(s.mean_contributors),
                    opt(s.mean_commits_between),
                    opt(s.mean_total_lines_changed),
                    opt(s.mean_total_files_changed),
                ])?;
            }
            Ok(())
        },
    )?;

    let correlations = csv_document(
        "correlations.csv",
        &["language", "pair_name", "coefficient", "sample_size"],
        |w| {
            for s in &report.languages {
                for c in &s.correlations {
                    w.write_record([
                        s.language.clone(),
                        c.pair_name.name().to_string(),
                        opt(c.coefficient),
                        c.sample_size.to_string(),
                    ])?;
                }
            }
            Ok(())
        },
    )?;

    let cwes = csv_document("cwe_distribution.csv", &["language", "cwe", "percentage"], |w| {
        for s in &report.languages {
            for share in &s.cwe_distribution {
                w.write_record([
                    s.language.clone(),
                    share.cwe.clone(),
                    format!("{:.2}", share.percentage),
                ])?;
            }
        }
        Ok(())
    })?;

    let errors = csv_document("errors.csv", &["target", "message"], |w| {
        for e in &report.errors {
            w.write_record([&e.target, &e.message])?;
        }
        Ok(())
    })?;

    Ok(vec![episodes, languages, correlations, cwes, errors])
}

fn label(text: &str) -> String {
    text.replace(['\t', '\n', '\r'], " ")
}

fn series(file_name: &str, rows: impl IntoIterator<Item = (String, String)>) -> Document {
    let mut contents = String::new();
    for (l, v) in rows {
        contents.push_str(&label(&l));
        contents.push('\t');
        contents.push_str(&v);
        contents.push('\n');
    }
    Document {
        file_name: file_name.to_string(),
        contents,
    }
}

fn mean_series(report: &Report, file_name: &str, pick: fn(&LanguageStats) -> Option<f64>) -> Document {
    series(
        file_name,
        report
            .languages
            .iter()
            .filter_map(|s| pick(s).map(|v| (s.language.clone(), v.to_string()))),
    )
}

fn render_chart_data(report: &Report) -> Vec<Document> {
    let correlations = report.languages.iter().flat_map(|s| {
        s.correlations.iter().filter_map(move |c| {
            c.coefficient
                .map(|r| (format!("{}/{}", s.language, c.pair_name.name()), r.to_string()))
        })
    });
    let churn = report.languages.iter().flat_map(|s| {
        [
            ("lines_changed", s.mean_total_lines_changed),
            ("files_changed", s.mean_total_files_changed),
        ]
        .into_iter()
        .filter_map(move |(what, v)| v.map(|v| (format!("{}/{what}", s.language), v.to_string())))
    });
    let cwes = report.languages.iter().flat_map(|s| {
        s.cwe_distribution
            .iter()
            .map(move |share| (format!("{}/{}", s.language, share.cwe), format!("{:.2}", share.percentage)))
    });
    vec![
        mean_series(report, "fig2_elapsed_fix_days.tsv", |s| s.mean_elapsed_fix_days),
        mean_series(report, "fig3_publication_to_fix_days.tsv", |s| s.mean_publication_to_fix_days),
        series("fig4_correlations.tsv", correlations),
        mean_series(report, "fig5_contributors.tsv", |s| s.mean_contributors),
        mean_series(report, "fig6_commits_between.tsv", |s| s.mean_commits_between),
        series("table1_churn.tsv", churn),
        series("table2_cwe_shares.tsv", cwes),
    ]
}
