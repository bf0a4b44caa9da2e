//! Mining git histories for CVE mentions and measuring how vulnerabilities
//! are found and fixed.
//!
//! The pipeline runs in this order:
//!
//! 1. [`store`] ingests NVD JSON feeds into a local database.
//! 2. [`git`] extracts a repository's default-branch history with churn.
//! 3. [`miner`] finds CVE ids in commit messages and derives fix episodes.
//! 4. [`stats`] computes per-episode metrics and correlations.
//! 5. [`report`] aggregates per language and writes reports.
//!
//! [`pipeline`] wires the steps together for a multi-target [`config`].

pub mod config;
pub mod cve_id;
pub mod git;
pub mod miner;
pub mod pipeline;
pub mod report;
pub mod stats;
pub mod store;

pub use config::{Source, Target, TargetConfig};
pub use cve_id::CveId;
pub use git::{extract_history, CommitRecord, RepoHistory};
pub use miner::{build_timelines, derive_episode, mine_episodes, scan_message, FixEpisode, MentionTimeline};
pub use report::{aggregate_language, cwe_distribution, LanguageStats, ProjectResult, Report, ReportFormat};
pub use stats::{mean, pearson, EpisodeMetrics};
pub use store::{CveRecord, CveStore, Severity};
