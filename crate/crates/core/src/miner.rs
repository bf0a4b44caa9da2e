//! CVE mention detection in commit messages and fix-episode derivation.
//!
//! A CVE mentioned once is taken to be fixed by that commit. When it is
//! mentioned several times, the first mention marks where it was found and
//! the last mention is the fix. The text around a mention is not inspected.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::cve_id::CveId;
use crate::git::{CommitRecord, RepoHistory};

fn mention_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"[Cc][Vv][Ee]-[0-9]{4}-[0-9]{4,7}").expect("valid pattern"))
}

/// Distinct CVE ids in `text`, uppercased, in order of first occurrence.
///
/// A candidate directly preceded or followed by an alphanumeric character
/// is part of a longer token and is ignored.
pub fn scan_message(text: &str) -> Vec<CveId> {
    let mut found: Vec<CveId> = Vec::new();
    for m in mention_pattern().find_iter(text) {
        let before = text[..m.start()].chars().next_back();
        let after = text[m.end()..].chars().next();
        if before.is_some_and(char::is_alphanumeric) || after.is_some_and(char::is_alphanumeric) {
            continue;
        }
        let id = CveId::parse(m.as_str()).expect("pattern only matches canonical ids");
        if !found.contains(&id) {
            found.push(id);
        }
    }
    found
}

/// Commits mentioning one CVE, in history order.
#[derive(Debug, Clone, PartialEq)]
pub struct MentionTimeline<'a> {
    pub cve_id: CveId,
    pub mentions: Vec<&'a CommitRecord>,
}

pub fn build_timelines(history: &RepoHistory) -> BTreeMap<CveId, MentionTimeline<'_>> {
    let mut timelines: BTreeMap<CveId, MentionTimeline<'_>> = BTreeMap::new();
    for commit in history.commits() {
        for id in scan_message(&commit.message) {
            timelines
                .entry(id.clone())
                .or_insert_with(|| MentionTimeline {
                    cve_id: id,
                    mentions: Vec::new(),
                })
                .mentions
                .push(commit);
        }
    }
    timelines
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixEpisode {
    pub cve_id: CveId,
    pub found_hash: Option<String>,
    pub found_timestamp: Option<i64>,
    pub fix_hash: String,
    pub fix_timestamp: i64,
    pub mention_count: usize,
    pub total_lines_changed: u64,
    pub total_files_changed: u64,
}

impl FixEpisode {
    pub fn is_single_mention(&self) -> bool {
        self.found_hash.is_none()
    }
}

/// # Panics
///
/// Panics if the timeline has no mentions; [`build_timelines`] never
/// produces one.
pub fn derive_episode(timeline: &MentionTimeline<'_>) -> FixEpisode {
    let first = timeline.mentions.first().expect("timeline is non-empty");
    let last = timeline.mentions.last().expect("timeline is non-empty");
    let multi = timeline.mentions.len() >= 2;
    FixEpisode {
        cve_id: timeline.cve_id.clone(),
        found_hash: multi.then(|| first.hash.clone()),
        found_timestamp: multi.then_some(first.timestamp),
        fix_hash: last.hash.clone(),
        fix_timestamp: last.timestamp,
        mention_count: timeline.mentions.len(),
        total_lines_changed: timeline
            .mentions
            .iter()
            .map(|c| c.lines_added + c.lines_deleted)
            .sum(),
        total_files_changed: timeline.mentions.iter().map(|c| c.files_changed).sum(),
    }
}

/// Every episode in `history`, ordered by CVE id.
pub fn mine_episodes(history: &RepoHistory) -> Vec<FixEpisode> {
    build_timelines(history).values().map(derive_episode).collect()
}
