//! Per-episode lifecycle metrics and the summary statistics built on them.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cve_id::CveId;
use crate::git::RepoHistory;
use crate::miner::FixEpisode;
use crate::store::CveRecord;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Samples below this size never get a correlation coefficient.
pub const MIN_CORRELATION_SAMPLES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("paired samples differ in length ({xs} vs {ys})")]
pub struct LengthMismatch {
    pub xs: usize,
    pub ys: usize,
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Sample Pearson correlation coefficient.
///
/// `Ok(None)` when fewer than [`MIN_CORRELATION_SAMPLES`] pairs are given
/// or either side is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Option<f64>, LengthMismatch> {
    if xs.len() != ys.len() {
        return Err(LengthMismatch {
            xs: xs.len(),
            ys: ys.len(),
        });
    }
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if xs.len() < MIN_CORRELATION_SAMPLES || constant(xs) || constant(ys) {
        return Ok(None);
    }
    let mx = mean(xs).expect("non-empty");
    let my = mean(ys).expect("non-empty");
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

/// Days between the found and fix commits; `None` for single mentions.
pub fn elapsed_fix_days(episode: &FixEpisode) -> Option<f64> {
    let found = episode.found_timestamp?;
    Some((episode.fix_timestamp - found) as f64 / SECONDS_PER_DAY)
}

/// Days from publication to the fix commit. Negative when the fix landed
/// before the CVE was published.
pub fn publication_to_fix_days(episode: &FixEpisode, record: &CveRecord) -> Option<f64> {
    let published = record.published?.timestamp();
    Some((episode.fix_timestamp - published) as f64 / SECONDS_PER_DAY)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activity {
    pub contributors: usize,
    pub commits: usize,
}

/// Commits and distinct authors after the found commit, up to and including
/// the fix commit.
pub fn activity_between(history: &RepoHistory, episode: &FixEpisode) -> Option<Activity> {
    let found = history.position(episode.found_hash.as_deref()?)?;
    let fix = history.position(&episode.fix_hash)?;
    if fix < found {
        return None;
    }
    let window = &history.commits()[found + 1..=fix];
    let authors: HashSet<String> = window.iter().map(|c| c.author_identity()).collect();
    Some(Activity {
        contributors: authors.len(),
        commits: window.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub cve_id: CveId,
    pub elapsed_fix_days: Option<f64>,
    pub publication_to_fix_days: Option<f64>,
    pub contributors_between: Option<usize>,
    pub commits_between: Option<usize>,
    pub base_score: Option<f64>,
}

pub fn episode_metrics(
    history: &RepoHistory,
    episode: &FixEpisode,
    record: Option<&CveRecord>,
) -> EpisodeMetrics {
    let activity = activity_between(history, episode);
    EpisodeMetrics {
        cve_id: episode.cve_id.clone(),
        elapsed_fix_days: elapsed_fix_days(episode),
        publication_to_fix_days: record.and_then(|r| publication_to_fix_days(episode, r)),
        contributors_between: activity.map(|a| a.contributors),
        commits_between: activity.map(|a| a.commits),
        base_score: record.and_then(|r| r.base_score),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationPair {
    ScoreVsElapsed,
    ScoreVsPublicationToFix,
}

impl CorrelationPair {
    pub const ALL: [CorrelationPair; 2] = [
        CorrelationPair::ScoreVsElapsed,
        CorrelationPair::ScoreVsPublicationToFix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorrelationPair::ScoreVsElapsed => "score_vs_elapsed",
            CorrelationPair::ScoreVsPublicationToFix => "score_vs_publication_to_fix",
        }
    }

    fn sample(self, metrics: &EpisodeMetrics) -> Option<(f64, f64)> {
        let days = match self {
            CorrelationPair::ScoreVsElapsed => metrics.elapsed_fix_days,
            CorrelationPair::ScoreVsPublicationToFix => metrics.publication_to_fix_days,
        };
        Some((metrics.base_score?, days?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub pair_name: CorrelationPair,
    pub coefficient: Option<f64>,
    pub sample_size: usize,
}

/// Correlates base score with a day metric over every episode where both
/// are present.
pub fn correlate<'a>(
    pair: CorrelationPair,
    metrics: impl IntoIterator<Item = &'a EpisodeMetrics>,
) -> CorrelationResult {
    let (scores, days): (Vec<f64>, Vec<f64>) =
        metrics.into_iter().filter_map(|m| pair.sample(m)).unzip();
    CorrelationResult {
        pair_name: pair,
        coefficient: pearson(&scores, &days).expect("unzip yields equal lengths"),
        sample_size: scores.len(),
    }
}
