//! Commit history extraction by shelling out to `git log`.
//!
//! One `git log` invocation produces both metadata and per-file numstat
//! lines. Each commit is emitted as
//!
//! ```text
//! \x1e<hash>\x1f<parents>\x1f<author name>\x1f<author email>\x1f<committer unix time>\x1f<raw body>\x1f
//! <added>\t<deleted>\t<path>
//! ...
//! ```
//!
//! Merge commits are diffed against their first parent and root commits
//! against the empty tree.

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde::{Deserialize, Serialize};
use thiserror::Error;

const RECORD_SEP: u8 = 0x1e;
const FIELD_SEP: u8 = 0x1f;
const PRETTY_FORMAT: &str = "format:%x1e%H%x1f%P%x1f%an%x1f%ae%x1f%ct%x1f%B%x1f";

pub const CACHE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GitError {
    #[error("git executable not found; install git and make sure it is on PATH")]
    GitUnavailable,
    #[error("{0} is not the root of a git repository")]
    NotARepository(PathBuf),
    #[error("failed to run git: {0}")]
    Spawn(#[source] io::Error),
    #[error("`git {args}` failed in {path}: {stderr}")]
    CommandFailed {
        path: PathBuf,
        args: String,
        stderr: String,
    },
    #[error("unexpected git log output: {0}")]
    Parse(String),
    #[error("history cache I/O error at {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub hash: String,
    /// `Name <email>` of the author.
    pub author: String,
    /// Committer date, seconds since the Unix epoch.
    pub timestamp: i64,
    pub message: String,
    pub parent_count: u32,
    pub is_merge: bool,
    pub files_changed: u64,
    pub lines_added: u64,
    pub lines_deleted: u64,
}

impl CommitRecord {
    pub fn churn(&self) -> Churn {
        Churn {
            files_changed: self.files_changed,
            lines_added: self.lines_added,
            lines_deleted: self.lines_deleted,
        }
    }

    pub fn author_identity(&self) -> String {
        author_identity(&self.author)
    }
}

/// Comparison key for an author string: the lowercased email when one is
/// present, otherwise the name verbatim.
pub fn author_identity(author: &str) -> String {
    if let (Some(open), Some(close)) = (author.rfind('<'), author.rfind('>')) {
        if open < close {
            let email = author[open + 1..close].trim();
            if !email.is_empty() {
                return email.to_lowercase();
            }
            return author[..open].trim_end().to_string();
        }
    }
    author.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Churn {
    pub files_changed: u64,
    pub lines_added: u64,
    pub lines_deleted: u64,
}

/// The default-branch history of one repository, sorted by
/// `(timestamp, hash)`.
#[derive(Debug, Clone)]
pub struct RepoHistory {
    repo_path: PathBuf,
    branch: Option<String>,
    head: Option<String>,
    commits: Vec<CommitRecord>,
    positions: HashMap<String, usize>,
}

impl RepoHistory {
    /// Sorts `commits` and drops repeated hashes, keeping the first seen.
    pub fn new(
        repo_path: impl Into<PathBuf>,
        branch: Option<String>,
        head: Option<String>,
        mut commits: Vec<CommitRecord>,
    ) -> Self {
        commits.sort_by(|a, b| (a.timestamp, &a.hash).cmp(&(b.timestamp, &b.hash)));
        commits.dedup_by(|b, a| a.hash == b.hash);
        let positions = commits
            .iter()
            .enumerate()
            .map(|(i, c)| (c.hash.clone(), i))
            .collect();
        RepoHistory {
            repo_path: repo_path.into(),
            branch,
            head,
            commits,
            positions,
        }
    }

    pub fn repo_path(&self) -> &Path {
        &self.repo_path
    }

    /// Short name of the checked-out branch, if HEAD is symbolic.
    pub fn branch(&self) -> Option<&str> {
        self.branch.as_deref()
    }

    pub fn head(&self) -> Option<&str> {
        self.head.as_deref()
    }

    pub fn commits(&self) -> &[CommitRecord] {
        &self.commits
    }

    pub fn len(&self) -> usize {
        self.commits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commits.is_empty()
    }

    pub fn position(&self, hash: &str) -> Option<usize> {
        self.positions.get(hash).copied()
    }

    pub fn get(&self, hash: &str) -> Option<&CommitRecord> {
        self.position(hash).map(|i| &self.commits[i])
    }

    /// Writes the history as line-delimited JSON: a header line followed by
    /// one commit per line.
    pub fn write_cache(&self, path: &Path) -> Result<(), GitError> {
        let cache_err = |source| GitError::Cache {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(cache_err)?;
        }
        let mut out = BufWriter::new(fs::File::create(path).map_err(cache_err)?);
        let header = CacheHeader {
            format_version: CACHE_FORMAT_VERSION,
            repo_path: self.repo_path.clone(),
            branch: self.branch.clone(),
            head: self.head.clone(),
            commit_count: self.commits.len(),
        };
        let line = serde_json::to_string(&header).expect("header serializes");
        writeln!(out, "{line}").map_err(cache_err)?;
        for commit in &self.commits {
            let line = serde_json::to_string(commit).expect("commit serializes");
            writeln!(out, "{line}").map_err(cache_err)?;
        }
        out.flush().map_err(cache_err)
    }

    /// Reads a cache written by [`RepoHistory::write_cache`]. Returns `None`
    /// when the file is missing, unreadable as a cache, or of another format
    /// version.
    pub fn read_cache(path: &Path) -> Option<RepoHistory> {
        let file = fs::File::open(path).ok()?;
        let mut lines = BufReader::new(file).lines();
        let header: CacheHeader = serde_json::from_str(&lines.next()?.ok()?).ok()?;
        if header.format_version != CACHE_FORMAT_VERSION {
            return None;
        }
        let mut commits = Vec::with_capacity(header.commit_count);
        for line in lines {
            commits.push(serde_json::from_str(&line.ok()?).ok()?);
        }
        if commits.len() != header.commit_count {
            return None;
        }
        Some(RepoHistory::new(header.repo_path, header.branch, header.head, commits))
    }
}

impl PartialEq for RepoHistory {
    fn eq(&self, other: &Self) -> bool {
        self.repo_path == other.repo_path
            && self.branch == other.branch
            && self.head == other.head
            && self.commits == other.commits
    }
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    format_version: u32,
    repo_path: PathBuf,
    branch: Option<String>,
    head: Option<String>,
    commit_count: usize,
}

fn git(repo: &Path) -> Command {
    let mut cmd = Command::new("git");
    cmd.arg("-C")
        .arg(repo)
        .args(["-c", "core.quotepath=off", "-c", "log.showSignature=false"])
        .env("LC_ALL", "C");
    cmd
}

fn run(repo: &Path, mut cmd: Command, args: &[&str]) -> Result<Output, GitError> {
    cmd.args(args).output().map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            GitError::GitUnavailable
        } else {
            GitError::Spawn(e)
        }
    })
    .and_then(|out| {
        if out.status.success() {
            Ok(out)
        } else {
            Err(GitError::CommandFailed {
                path: repo.to_path_buf(),
                args: args.join(" "),
                stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            })
        }
    })
}

fn stdout_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).trim().to_string()
}

/// Confirms `repo_path` is itself a repository root (work tree or bare).
fn check_repository(repo_path: &Path) -> Result<(), GitError> {
    let not_repo = || GitError::NotARepository(repo_path.to_path_buf());
    if !repo_path.is_dir() {
        return Err(not_repo());
    }
    let bare = match run(repo_path, git(repo_path), &["rev-parse", "--is-bare-repository"]) {
        Ok(out) => stdout_line(&out) == "true",
        Err(GitError::CommandFailed { .. }) => return Err(not_repo()),
        Err(e) => return Err(e),
    };
    if bare {
        let git_dir = run(repo_path, git(repo_path), &["rev-parse", "--absolute-git-dir"])?;
        return same_dir(Path::new(&stdout_line(&git_dir)), repo_path)
            .then_some(())
            .ok_or_else(not_repo);
    }
    let top = run(repo_path, git(repo_path), &["rev-parse", "--show-toplevel"])
        .map_err(|_| not_repo())?;
    same_dir(Path::new(&stdout_line(&top)), repo_path)
        .then_some(())
        .ok_or_else(not_repo)
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

/// Hash of the commit HEAD points at, or `None` for an unborn branch.
pub fn head_hash(repo_path: &Path) -> Result<Option<String>, GitError> {
    check_repository(repo_path)?;
    let out = git(repo_path)
        .args(["rev-parse", "--verify", "--quiet", "HEAD^{commit}"])
        .output()
        .map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => GitError::GitUnavailable,
            _ => GitError::Spawn(e),
        })?;
    Ok(out.status.success().then(|| stdout_line(&out)))
}

fn current_branch(repo_path: &Path) -> Option<String> {
    let out = git(repo_path)
        .args(["symbolic-ref", "--quiet", "--short", "HEAD"])
        .output()
        .ok()?;
    out.status.success().then(|| stdout_line(&out))
}

const LOG_FLAGS: [&str; 8] = [
    "--numstat",
    "--date=unix",
    "-M",
    "--root",
    "--diff-merges=first-parent",
    "--no-color",
    "--no-ext-diff",
    "--no-textconv",
];

/// Extracts every commit reachable from HEAD with churn against its first
/// parent.
pub fn extract_history(repo_path: &Path) -> Result<RepoHistory, GitError> {
    let head = head_hash(repo_path)?;
    let branch = current_branch(repo_path);
    let Some(head_rev) = head.as_deref() else {
        return Ok(RepoHistory::new(repo_path, branch, None, Vec::new()));
    };
    let pretty = format!("--pretty={PRETTY_FORMAT}");
    let mut args = vec!["log", head_rev];
    args.extend(LOG_FLAGS);
    args.push(&pretty);
    let out = run(repo_path, git(repo_path), &args)?;
    let commits = parse_log(&out.stdout)?;
    Ok(RepoHistory::new(repo_path, branch, head, commits))
}

/// Like [`extract_history`], but reuses `cache_path` while the repository
/// head is unchanged.
pub fn extract_history_cached(repo_path: &Path, cache_path: &Path) -> Result<RepoHistory, GitError> {
    let head = head_hash(repo_path)?;
    if let Some(cached) = RepoHistory::read_cache(cache_path) {
        if cached.head() == head.as_deref() && same_dir(cached.repo_path(), repo_path) {
            log::debug!("reusing history cache {}", cache_path.display());
            return Ok(cached);
        }
    }
    let history = extract_history(repo_path)?;
    history.write_cache(cache_path)?;
    Ok(history)
}

/// Churn of a single commit against its first parent.
pub fn churn_against_predecessor(repo_path: &Path, hash: &str) -> Result<Churn, GitError> {
    check_repository(repo_path)?;
    let mut args = vec!["log", "-1", hash];
    args.extend(LOG_FLAGS);
    args.push("--pretty=format:");
    let out = run(repo_path, git(repo_path), &args)?;
    Ok(parse_numstat(&out.stdout))
}

fn parse_log(raw: &[u8]) -> Result<Vec<CommitRecord>, GitError> {
    raw.split(|&b| b == RECORD_SEP)
        .filter(|chunk| !chunk.iter().all(u8::is_ascii_whitespace))
        .map(parse_record)
        .collect()
}

fn parse_record(chunk: &[u8]) -> Result<CommitRecord, GitError> {
    let mut head = chunk.splitn(6, |&b| b == FIELD_SEP);
    let mut next = |what: &str| {
        head.next()
            .ok_or_else(|| GitError::Parse(format!("commit record missing {what}")))
    };
    let hash = String::from_utf8_lossy(next("hash")?).into_owned();
    let parents = String::from_utf8_lossy(next("parents")?).into_owned();
    let name = String::from_utf8_lossy(next("author name")?).into_owned();
    let email = String::from_utf8_lossy(next("author email")?).into_owned();
    let time = String::from_utf8_lossy(next("timestamp")?).into_owned();
    let rest = next("message")?;

    // The body may itself contain the field separator; numstat lines never do.
    let split = rest
        .iter()
        .rposition(|&b| b == FIELD_SEP)
        .ok_or_else(|| GitError::Parse(format!("commit {hash} has no body terminator")))?;
    let message = String::from_utf8_lossy(&rest[..split]).into_owned();
    let churn = parse_numstat(&rest[split + 1..]);

    let is_hex = |s: &str| s.len() >= 40 && s.bytes().all(|b| b.is_ascii_hexdigit());
    if !is_hex(&hash) {
        return Err(GitError::Parse(format!("bad commit hash {hash:?}")));
    }
    let timestamp = time
        .trim()
        .parse()
        .map_err(|_| GitError::Parse(format!("commit {hash} has bad timestamp {time:?}")))?;
    let parent_count = parents.split_whitespace().count() as u32;

    Ok(CommitRecord {
        hash,
        author: format!("{name} <{email}>"),
        timestamp,
        message,
        parent_count,
        is_merge: parent_count >= 2,
        files_changed: churn.files_changed,
        lines_added: churn.lines_added,
        lines_deleted: churn.lines_deleted,
    })
}

/// Sums `added<TAB>deleted<TAB>path` lines. Binary entries (`-`) count as a
/// changed path with no line churn.
fn parse_numstat(raw: &[u8]) -> Churn {
    let mut churn = Churn::default();
    for line in raw.split(|&b| b == b'\n') {
        let mut fields = line.splitn(3, |&b| b == b'\t');
        let (Some(added), Some(deleted), Some(_path)) = (fields.next(), fields.next(), fields.next())
        else {
            continue;
        };
        let count = |field: &[u8]| std::str::from_utf8(field).ok().and_then(|s| s.parse::<u64>().ok());
        churn.files_changed += 1;
        churn.lines_added += count(added).unwrap_or(0);
        churn.lines_deleted += count(deleted).unwrap_or(0);
    }
    churn
}
