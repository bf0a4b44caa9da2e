//! Multi-target configuration documents.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::DEFAULT_STORE_DIR;

pub const DEFAULT_REPOS_DIR: &str = "./repos";
pub const DEFAULT_OUTPUT_DIR: &str = "./reports";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid target config:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

/// Where a target's repository comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    Local(PathBuf),
    Remote(String),
}

impl Source {
    /// URLs (`scheme://...`) and scp-style `user@host:path` are remote;
    /// anything else is a filesystem path.
    pub fn parse(raw: &str) -> Source {
        let raw = raw.trim();
        let scp_like = raw
            .split_once(':')
            .is_some_and(|(host, _)| host.contains('@') && !host.contains('/'));
        if raw.contains("://") || scp_like {
            Source::Remote(raw.to_string())
        } else {
            Source::Local(PathBuf::from(raw))
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Local(p) => write!(f, "{}", p.display()),
            Source::Remote(url) => f.write_str(url),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Target {
    pub name: String,
    pub source: Source,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetConfig {
    pub targets: Vec<Target>,
    pub store_dir: PathBuf,
    pub repos_dir: PathBuf,
    pub output_dir: PathBuf,
}

#[derive(Deserialize, Serialize)]
struct RawConfig {
    #[serde(default)]
    targets: Vec<RawTarget>,
    store_dir: Option<PathBuf>,
    repos_dir: Option<PathBuf>,
    output_dir: Option<PathBuf>,
}

#[derive(Deserialize, Serialize)]
struct RawTarget {
    name: Option<String>,
    source: Option<String>,
    language: Option<String>,
}

fn present(value: &Option<String>) -> Option<&str> {
    value.as_deref().map(str::trim).filter(|s| !s.is_empty())
}

/// Target names become directory names under the repos directory.
fn usable_name(name: &str) -> bool {
    name != "." && name != ".." && !name.contains(['/', '\\', '\0'])
}

impl TargetConfig {
    pub fn load(path: &Path) -> Result<TargetConfig, ConfigError> {
        let body = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        TargetConfig::parse(&body)
    }

    /// Parses and validates a config document, reporting every problem
    /// found rather than stopping at the first.
    pub fn parse(document: &str) -> Result<TargetConfig, ConfigError> {
        let raw: RawConfig = serde_json::from_str(document)
            .map_err(|e| ConfigError::Invalid(vec![format!("unparseable document: {e}")]))?;

        let mut problems = Vec::new();
        let mut seen = HashSet::new();
        let mut targets = Vec::with_capacity(raw.targets.len());
        for (i, t) in raw.targets.iter().enumerate() {
            let name = present(&t.name);
            let label = name.map_or_else(|| format!("target #{i}"), |n| format!("target {n:?}"));
            match name {
                None => problems.push(format!("target #{i} has no name")),
                Some(n) if !usable_name(n) => {
                    problems.push(format!("{label}: name may not contain path separators"))
                }
                Some(n) if !seen.insert(n) => problems.push(format!("duplicate target name {n:?}")),
                Some(_) => {}
            }
            let source = present(&t.source);
            if source.is_none() {
                problems.push(format!("{label} has no source"));
            }
            let language = present(&t.language);
            if language.is_none() {
                problems.push(format!("{label} has no language"));
            }
            if let (Some(name), Some(source), Some(language)) = (name, source, language) {
                targets.push(Target {
                    name: name.to_string(),
                    source: Source::parse(source),
                    language: language.to_string(),
                });
            }
        }
        if !problems.is_empty() {
            return Err(ConfigError::Invalid(problems));
        }
        Ok(TargetConfig {
            targets,
            store_dir: raw.store_dir.unwrap_or_else(|| DEFAULT_STORE_DIR.into()),
            repos_dir: raw.repos_dir.unwrap_or_else(|| DEFAULT_REPOS_DIR.into()),
            output_dir: raw.output_dir.unwrap_or_else(|| DEFAULT_OUTPUT_DIR.into()),
        })
    }
}
