//! Scripted git repositories and the shared oracle corpus.

#![allow(dead_code)]

pub mod schema;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

/// 2020-01-01T00:00:00Z
pub const T0: i64 = 1_577_836_800;
pub const DAY: i64 = 86_400;

/// Commit timestamp at noon of `day` days after [`T0`].
pub fn at_day(day: i64) -> i64 {
    T0 + day * DAY + DAY / 2
}

pub struct FixtureRepo {
    dir: TempDir,
}

impl FixtureRepo {
    pub fn init() -> Self {
        let repo = FixtureRepo {
            dir: tempfile::tempdir().expect("tempdir"),
        };
        repo.git(&["init", "--quiet", "-b", "main"]);
        repo
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn git(&self, args: &[&str]) -> String {
        git_in(self.path(), args, &[])
    }

    pub fn write(&self, rel: &str, lines: &[&str]) {
        let mut body = lines.join("\n");
        if !lines.is_empty() {
            body.push('\n');
        }
        fs::write(self.path().join(rel), body).unwrap();
    }

    pub fn write_bytes(&self, rel: &str, bytes: &[u8]) {
        fs::write(self.path().join(rel), bytes).unwrap();
    }

    pub fn remove(&self, rel: &str) {
        fs::remove_file(self.path().join(rel)).unwrap();
    }

    /// Stages everything and commits with a fixed author and committer date.
    pub fn commit(&self, author: (&str, &str), timestamp: i64, message: &str) -> String {
        self.git(&["add", "-A"]);
        let date = format!("@{timestamp} +0000");
        git_in(
            self.path(),
            &["commit", "--quiet", "--allow-empty", "-m", message],
            &identity_env(author, &date),
        );
        self.git(&["rev-parse", "HEAD"])
    }

    pub fn merge(&self, branch: &str, author: (&str, &str), timestamp: i64, message: &str) -> String {
        let date = format!("@{timestamp} +0000");
        git_in(
            self.path(),
            &["merge", "--quiet", "--no-ff", "-m", message, branch],
            &identity_env(author, &date),
        );
        self.git(&["rev-parse", "HEAD"])
    }

    /// Sum of line counts over every tracked text file in the work tree.
    pub fn text_line_count(&self) -> u64 {
        self.git(&["ls-files"])
            .lines()
            .filter_map(|f| fs::read_to_string(self.path().join(f)).ok())
            .map(|s| s.lines().count() as u64)
            .sum()
    }
}

fn identity_env(author: (&str, &str), date: &str) -> Vec<(String, String)> {
    [
        ("GIT_AUTHOR_NAME", author.0),
        ("GIT_AUTHOR_EMAIL", author.1),
        ("GIT_COMMITTER_NAME", author.0),
        ("GIT_COMMITTER_EMAIL", author.1),
        ("GIT_AUTHOR_DATE", date),
        ("GIT_COMMITTER_DATE", date),
    ]
    .iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

pub fn git_in(dir: &Path, args: &[&str], env: &[(String, String)]) -> String {
    let out = Command::new("git")
        .arg("-C")
        .arg(dir)
        .args(args)
        .env("GIT_CONFIG_GLOBAL", "/dev/null")
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .env("GIT_AUTHOR_NAME", "fixture")
        .env("GIT_AUTHOR_EMAIL", "fixture@example.org")
        .env("GIT_COMMITTER_NAME", "fixture")
        .env("GIT_COMMITTER_EMAIL", "fixture@example.org")
        .envs(env.iter().map(|(k, v)| (k.as_str(), v.as_str())))
        .output()
        .expect("git runs");
    assert!(
        out.status.success(),
        "git {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).trim().to_string()
}

pub const ALICE: (&str, &str) = ("Alice", "alice@example.org");
pub const BOB: (&str, &str) = ("Bob", "bob@example.org");
pub const CAROL: (&str, &str) = ("Carol", "carol@example.org");
pub const DAVE: (&str, &str) = ("Dave", "dave@example.org");
pub const DAVE_ALIAS: (&str, &str) = ("D. Smith", "DAVE@example.org");
pub const ERIN: (&str, &str) = ("Erin", "erin@example.org");

/// Linear, text-only history of seven commits.
///
/// | commit | day | author | churn (files, +, -) | mentions          |
/// |--------|-----|--------|---------------------|-------------------|
/// | c1     | 0   | Alice  | 1, 10, 0            |                   |
/// | c2     | 2   | Bob    | 2, 7, 2             | 0001              |
/// | c3     | 3   | Carol  | 1, 3, 0             |                   |
/// | c4     | 5   | Alice  | 1, 1, 1             | 0002              |
/// | c5     | 6   | Bob    | 2, 4, 1             | 0003, 0001        |
/// | c6     | 10  | Carol  | 1, 3, 2             | 0002              |
/// | c7     | 12  | Alice  | 1, 2, 0             | 0003              |
pub fn build_alpha() -> (FixtureRepo, Vec<String>) {
    let r = FixtureRepo::init();
    let mut hashes = Vec::new();
    let a: Vec<String> = (1..=10).map(|i| format!("a{i}")).collect();
    let a_ref: Vec<&str> = a.iter().map(String::as_str).collect();
    r.write("a.c", &a_ref);
    hashes.push(r.commit(ALICE, at_day(0), "initial import"));

    r.write("a.c", &["a1", "a2", "a3x", "a4x", "a5", "a6", "a7", "a8", "a9", "a10"]);
    r.write("b.c", &["b1", "b2", "b3", "b4", "b5"]);
    hashes.push(r.commit(BOB, at_day(2), "Guard against CVE-2099-0001 overflow"));

    r.write("c.c", &["c1", "c2", "c3"]);
    hashes.push(r.commit(CAROL, at_day(3), "refactor helpers"));

    r.write("b.c", &["b1", "b2x", "b3", "b4", "b5"]);
    hashes.push(r.commit(ALICE, at_day(5), "Fix CVE-2099-0002"));

    r.write(
        "a.c",
        &["a1", "a2", "a3x", "a4x", "a5", "a6", "a7", "a8", "a9", "a10", "a11", "a12", "a13", "a14"],
    );
    r.write("c.c", &["c1", "c2"]);
    hashes.push(r.commit(BOB, at_day(6), "Address cve-2099-0003 and CVE-2099-0001\n\nSee advisory."));

    r.write("b.c", &["b1", "b2x", "b3", "b4x", "b5x", "b6"]);
    hashes.push(r.commit(CAROL, at_day(10), "Complete fix for CVE-2099-0002"));

    r.write("c.c", &["c1", "c2", "c4", "c5"]);
    hashes.push(r.commit(ALICE, at_day(12), "Follow-up CVE-2099-0003 hardening"));
    (r, hashes)
}

/// History with a binary file, an aliased author and a feature-branch merge.
///
/// | commit | day | author   | churn (files, +, -) | mentions          |
/// |--------|-----|----------|---------------------|-------------------|
/// | b1     | 1   | Dave     | 1, 8, 0             |                   |
/// | b2     | 4   | Erin     | 1, 3, 1             | 0001              |
/// | b3     | 20  | Dave     | 2, 6, 0 (+binary)   | 0004              |
/// | b4     | 25  | Dave     | 1, 2, 0             | (XCVE-... only)   |
/// | b5     | 30  | D. Smith | 1, 1, 1             | 0004              |
/// | f1     | 35  | Dave     | 1, 2, 0             | 0002 (feature)    |
/// | b6     | 38  | Erin     | 1, 1, 0             |                   |
/// | m      | 40  | Erin     | 1, 2, 0 (1st parent)| 0002 (merge)      |
pub fn build_beta() -> (FixtureRepo, Vec<String>) {
    let r = FixtureRepo::init();
    let mut hashes = Vec::new();
    r.write("m.py", &["m1", "m2", "m3", "m4", "m5", "m6", "m7", "m8"]);
    hashes.push(r.commit(DAVE, at_day(1), "init"));

    r.write("m.py", &["m1", "m2x", "m3", "m4", "m5", "m6", "m7", "m8", "m9", "m10"]);
    hashes.push(r.commit(ERIN, at_day(4), "Fix CVE-2099-0001 in parser"));

    r.write("n.py", &["n1", "n2", "n3", "n4", "n5", "n6"]);
    r.write_bytes("img.bin", &[0, 1, 2, 0, 255, 0, 7]);
    hashes.push(r.commit(DAVE, at_day(20), "Patch CVE-2099-0004"));

    r.write("README", &["readme", "XCVE-2099-0003 is not an identifier"]);
    hashes.push(r.commit(DAVE, at_day(25), "docs: mention XCVE-2099-0003"));

    r.write("n.py", &["n1x", "n2", "n3", "n4", "n5", "n6"]);
    hashes.push(r.commit(DAVE_ALIAS, at_day(30), "Revisit CVE-2099-0004"));

    r.git(&["checkout", "--quiet", "-b", "feature"]);
    r.write(
        "m.py",
        &["m1", "m2x", "m3", "m4", "m5", "m6", "m7", "m8", "m9", "m10", "m11", "m12"],
    );
    hashes.push(r.commit(DAVE, at_day(35), "harden CVE-2099-0002 input checks"));

    r.git(&["checkout", "--quiet", "main"]);
    r.write("t.py", &["t1"]);
    hashes.push(r.commit(ERIN, at_day(38), "tidy"));

    hashes.push(r.merge("feature", ERIN, at_day(40), "Merge branch 'feature' (CVE-2099-0002)"));
    (r, hashes)
}

/// Feed for the corpus. CVE-2099-0004 is deliberately absent.
///
/// | id   | published  | score | CWE labels              |
/// |------|------------|-------|-------------------------|
/// | 0001 | 2020-01-01 | 7.5   | CWE-79                  |
/// | 0002 | 2020-01-10 | 5.0   | CWE-119, CWE-20         |
/// | 0003 | 2020-02-01 | 9.8   | NVD-CWE-Other, CWE-79   |
pub const FIXTURE_FEED: &str = r#"{
  "CVE_data_type": "CVE",
  "CVE_data_format": "MITRE",
  "CVE_data_version": "4.0",
  "CVE_data_numberOfCVEs": "3",
  "CVE_Items": [
    {
      "cve": {
        "data_type": "CVE",
        "CVE_data_meta": {"ID": "CVE-2099-0001", "ASSIGNER": "cve@mitre.org"},
        "problemtype": {"problemtype_data": [{"description": [{"lang": "en", "value": "CWE-79"}]}]},
        "description": {"description_data": [{"lang": "en", "value": "Cross-site scripting."}]}
      },
      "configurations": {"CVE_data_version": "4.0", "nodes": []},
      "impact": {
        "baseMetricV3": {"cvssV3": {"version": "3.1", "baseScore": 7.5, "baseSeverity": "HIGH"}},
        "baseMetricV2": {"cvssV2": {"version": "2.0", "baseScore": 4.3}, "severity": "MEDIUM"}
      },
      "publishedDate": "2020-01-01T00:00Z",
      "lastModifiedDate": "2020-02-01T00:00Z"
    },
    {
      "cve": {
        "CVE_data_meta": {"ID": "CVE-2099-0002"},
        "problemtype": {"problemtype_data": [{"description": [
          {"lang": "en", "value": "CWE-119"},
          {"lang": "en", "value": "CWE-20"}
        ]}]}
      },
      "impact": {"baseMetricV2": {"cvssV2": {"baseScore": 5.0}, "severity": "MEDIUM"}},
      "publishedDate": "2020-01-10T00:00Z"
    },
    {
      "cve": {
        "CVE_data_meta": {"ID": "CVE-2099-0003"},
        "problemtype": {"problemtype_data": [
          {"description": [{"lang": "en", "value": "NVD-CWE-Other"}]},
          {"description": [{"lang": "en", "value": "CWE-79"}]}
        ]}
      },
      "impact": {"baseMetricV3": {"cvssV3": {"baseScore": 9.8, "baseSeverity": "CRITICAL"}}},
      "publishedDate": "2020-02-01T00:00Z"
    }
  ]
}"#;

pub fn fixture_store() -> cveminer::CveStore {
    let mut store = cveminer::CveStore::new();
    store.ingest_feed("fixture.json", FIXTURE_FEED).expect("fixture feed ingests");
    store
}

/// Writes a config naming both corpus repositories.
pub fn write_corpus_config(dir: &Path, alpha: &Path, beta: &Path, extra: &str) -> PathBuf {
    let config = dir.join("targets.json");
    let body = format!(
        r#"{{
  "store_dir": {store},
  "repos_dir": {repos},
  "output_dir": {out},
  "targets": [
    {{"name": "alpha", "source": {alpha}, "language": "C"}},
    {{"name": "beta", "source": {beta}, "language": "Python"}}{extra}
  ]
}}"#,
        store = serde_json::to_string(&dir.join("store")).unwrap(),
        repos = serde_json::to_string(&dir.join("repos")).unwrap(),
        out = serde_json::to_string(&dir.join("out")).unwrap(),
        alpha = serde_json::to_string(alpha).unwrap(),
        beta = serde_json::to_string(beta).unwrap(),
    );
    fs::write(&config, body).unwrap();
    config
}
