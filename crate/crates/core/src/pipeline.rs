//! End-to-end orchestration: feed ingestion, repository acquisition,
//! mining, aggregation and emission.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use thiserror::Error;

use crate::config::{Source, Target, TargetConfig};
use crate::git::{self, GitError, RepoHistory};
use crate::miner::mine_episodes;
use crate::report::{emit_report, EpisodeEntry, ProjectResult, Report, ReportError, ReportFormat, TargetFailure};
use crate::stats::episode_metrics;
use crate::store::{CveStore, FeedError, IngestSummary, StoreError};

/// Optional proxy passed to git as `http.proxy` for clones and fetches.
pub const PROXY_ENV: &str = "CVEMINER_PROXY";

const HISTORY_CACHE_DIR: &str = ".history-cache";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("the CVE store at {0} is empty; run `cveminer ingest --feeds <dir>` first or pass --ingest")]
    EmptyStore(PathBuf),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot read feed {path}: {source}")]
    FeedRead {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("feed {path}: {source}")]
    Feed {
        path: PathBuf,
        #[source]
        source: FeedError,
    },
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Error)]
pub enum AcquireError {
    #[error("local source {0} does not exist")]
    MissingLocal(PathBuf),
    #[error("cannot create {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("`git {args}` failed: {stderr}")]
    Git { args: String, stderr: String },
    #[error(transparent)]
    History(#[from] GitError),
}

/// Ingests every `*.json` file in `feeds_dir`, in file-name order, and
/// saves the store.
pub fn ingest_feeds_dir(
    store: &mut CveStore,
    feeds_dir: &Path,
) -> Result<Vec<(String, IngestSummary)>, PipelineError> {
    let read_err = |source| PipelineError::FeedRead {
        path: feeds_dir.to_path_buf(),
        source,
    };
    let mut feeds: Vec<PathBuf> = fs::read_dir(feeds_dir)
        .map_err(read_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    feeds.sort();
    let mut summaries = Vec::with_capacity(feeds.len());
    for path in feeds {
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let body = fs::read_to_string(&path).map_err(|source| PipelineError::FeedRead {
            path: path.clone(),
            source,
        })?;
        let summary = store
            .ingest_feed(&name, &body)
            .map_err(|source| PipelineError::Feed { path: path.clone(), source })?;
        log::info!("ingested {name}: {} items, {} skipped", summary.processed, summary.skipped);
        summaries.push((name, summary));
    }
    Ok(summaries)
}

fn git_network(args: &[&str]) -> Result<(), AcquireError> {
    let mut cmd = Command::new("git");
    if let Ok(proxy) = env::var(PROXY_ENV) {
        cmd.args(["-c", &format!("http.proxy={proxy}")]);
    }
    let out = cmd
        .args(args)
        .env("GIT_TERMINAL_PROMPT", "0")
        .output()
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => AcquireError::History(GitError::GitUnavailable),
            _ => AcquireError::History(GitError::Spawn(e)),
        })?;
    if out.status.success() {
        Ok(())
    } else {
        Err(AcquireError::Git {
            args: args.join(" "),
            stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
        })
    }
}

/// Resolves a target to a local repository path.
///
/// Local sources are used in place. Remote sources are cloned once into
/// `repos_dir/<name>`; later calls reuse the clone without touching the
/// network unless `refresh` is set, in which case the clone is fetched and
/// reset to the remote default branch.
pub fn acquire_repo(target: &Target, repos_dir: &Path, refresh: bool) -> Result<PathBuf, AcquireError> {
    let url = match &target.source {
        Source::Local(path) => {
            return if path.exists() {
                Ok(path.clone())
            } else {
                Err(AcquireError::MissingLocal(path.clone()))
            };
        }
        Source::Remote(url) => url,
    };
    let dest = repos_dir.join(&target.name);
    let dest_str = dest.to_string_lossy().into_owned();
    if dest.join(".git").exists() {
        if refresh {
            log::info!("refreshing {} from {url}", target.name);
            git_network(&["-C", &dest_str, "fetch", "--prune", "origin"])?;
            git_network(&["-C", &dest_str, "remote", "set-head", "origin", "--auto"])?;
            git_network(&["-C", &dest_str, "reset", "--hard", "origin/HEAD"])?;
        }
        return Ok(dest);
    }
    fs::create_dir_all(repos_dir).map_err(|source| AcquireError::Io {
        path: repos_dir.to_path_buf(),
        source,
    })?;
    log::info!("cloning {url} into {}", dest.display());
    git_network(&["clone", "--quiet", url, &dest_str])?;
    Ok(dest)
}

/// Mines one repository history into a project result.
pub fn mine_history(target: &Target, history: &RepoHistory, store: &CveStore) -> ProjectResult {
    let mut join_misses = 0;
    let episodes = mine_episodes(history)
        .into_iter()
        .map(|episode| {
            let record = store.get(&episode.cve_id);
            if record.is_none() {
                join_misses += 1;
            }
            let metrics = episode_metrics(history, &episode, record);
            EpisodeEntry { episode, metrics }
        })
        .collect();
    ProjectResult {
        project_name: target.name.clone(),
        language: target.language.clone(),
        branch: history.branch().map(str::to_string),
        head: history.head().map(str::to_string),
        commit_count: history.len(),
        episodes,
        join_misses,
    }
}

fn mine_target(
    target: &Target,
    config: &TargetConfig,
    store: &CveStore,
    refresh: bool,
) -> Result<ProjectResult, AcquireError> {
    let path = acquire_repo(target, &config.repos_dir, refresh)?;
    let cache = config
        .repos_dir
        .join(HISTORY_CACHE_DIR)
        .join(format!("{}.jsonl", target.name));
    let history = git::extract_history_cached(&path, &cache)?;
    log::info!("{}: {} commits", target.name, history.len());
    Ok(mine_history(target, &history, store))
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub refresh: bool,
    /// Worker count; `None` uses one per processor.
    pub jobs: Option<usize>,
    pub format: ReportFormat,
    /// Overrides the config's output directory.
    pub output_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            refresh: false,
            jobs: None,
            format: ReportFormat::Json,
            output_dir: None,
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: Report,
    pub written: Vec<PathBuf>,
}

impl RunOutcome {
    /// A run fails only when there were targets and none could be mined.
    pub fn success(&self) -> bool {
        !self.report.projects.is_empty() || self.report.errors.is_empty()
    }
}

/// Mines every target, aggregates, and writes `report.json` plus the
/// requested format into the output directory.
pub fn run_pipeline(
    config: &TargetConfig,
    store: &CveStore,
    options: &RunOptions,
) -> Result<RunOutcome, PipelineError> {
    if store.is_empty() {
        return Err(PipelineError::EmptyStore(config.store_dir.clone()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = options.jobs {
        builder = builder.num_threads(jobs.max(1));
    }
    let pool = builder.build()?;
    let outcomes: Vec<Result<ProjectResult, TargetFailure>> = pool.install(|| {
        use rayon::prelude::*;
        config
            .targets
            .par_iter()
            .map(|target| {
                mine_target(target, config, store, options.refresh).map_err(|e| {
                    log::warn!("target {} failed: {e}", target.name);
                    TargetFailure {
                        target: target.name.clone(),
                        message: e.to_string(),
                    }
                })
            })
            .collect()
    });
    let (mut projects, mut errors) = (Vec::new(), Vec::new());
    for outcome in outcomes {
        match outcome {
            Ok(p) => projects.push(p),
            Err(e) => errors.push(e),
        }
    }
    let report = Report::build(projects, errors, store);
    let out_dir = options.output_dir.as_deref().unwrap_or(&config.output_dir);
    let written = write_outputs(&report, options.format, out_dir)?;
    Ok(RunOutcome { report, written })
}

/// Re-aggregates the projects of an earlier report against `store`.
pub fn reaggregate(previous: Report, store: &CveStore) -> Report {
    Report::build(previous.projects, previous.errors, store)
}

/// Writes `report.json` and, when different, the requested format.
pub fn write_outputs(report: &Report, format: ReportFormat, out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let mut written = emit_report(report, ReportFormat::Json, out_dir)?;
    if format != ReportFormat::Json {
        written.extend(emit_report(report, format, out_dir)?);
    }
    Ok(written)
}
