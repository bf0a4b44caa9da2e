use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use cveminer::pipeline::{self, RunOptions};
use cveminer::report::Report;
use cveminer::store::DEFAULT_STORE_DIR;
use cveminer::{CveStore, ReportFormat, TargetConfig};

#[derive(Parser)]
#[command(name = "cveminer", version, about = "Mine git histories for CVE fix lifecycles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load NVD JSON feed files into the local CVE store.
    Ingest {
        /// Directory holding uncompressed `*.json` feed files.
        #[arg(long)]
        feeds: PathBuf,
        #[arg(long, default_value = DEFAULT_STORE_DIR)]
        store: PathBuf,
    },
    /// Mine every target in a config file and write reports.
    Mine {
        #[arg(long)]
        config: PathBuf,
        /// Fetch and reset previously cloned remotes.
        #[arg(long)]
        refresh: bool,
        /// Worker threads (default: one per processor).
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory (overrides the config's output_dir).
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value = "json", value_parser = parse_format)]
        format: ReportFormat,
        /// Ingest the feeds in this directory before mining.
        #[arg(long)]
        ingest: Option<PathBuf>,
        /// CVE store directory (overrides the config's store_dir).
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Re-aggregate an earlier report.json without re-mining.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "json", value_parser = parse_format)]
        format: ReportFormat,
        #[arg(long, default_value = "./reports")]
        output: PathBuf,
        #[arg(long, default_value = DEFAULT_STORE_DIR)]
        store: PathBuf,
    },
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: cveminer::report::ReportError| e.to_string())
}

fn ingest(store: &mut CveStore, feeds: &Path, store_dir: &Path) -> Result<()> {
    let summaries = pipeline::ingest_feeds_dir(store, feeds)?;
    store
        .save_dir(store_dir)
        .with_context(|| format!("saving store to {}", store_dir.display()))?;
    let (processed, skipped) = summaries
        .iter()
        .fold((0, 0), |(p, s), (_, sum)| (p + sum.processed, s + sum.skipped));
    println!(
        "ingested {} feed(s): {processed} items, {skipped} skipped; store holds {} records",
        summaries.len(),
        store.len()
    );
    Ok(())
}

fn print_written(paths: &[PathBuf]) {
    for path in paths {
        println!("wrote {}", path.display());
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Ingest { feeds, store } => {
            let mut cve_store = CveStore::open_dir(&store)?;
            ingest(&mut cve_store, &feeds, &store)?;
            Ok(true)
        }
        Command::Mine {
            config,
            refresh,
            jobs,
            output,
            format,
            ingest: feeds,
            store,
        } => {
            let mut cfg = TargetConfig::load(&config)?;
            if let Some(store) = store {
                cfg.store_dir = store;
            }
            let mut cve_store = CveStore::open_dir(&cfg.store_dir)?;
            if let Some(feeds) = feeds {
                ingest(&mut cve_store, &feeds, &cfg.store_dir)?;
            }
            let options = RunOptions {
                refresh,
                jobs,
                format,
                output_dir: output,
            };
            let outcome = pipeline::run_pipeline(&cfg, &cve_store, &options)?;
            for failure in &outcome.report.errors {
                eprintln!("target {} failed: {}", failure.target, failure.message);
            }
            println!(
                "mined {} project(s), {} episode(s), {} failure(s)",
                outcome.report.projects.len(),
                outcome.report.episode_count(),
                outcome.report.errors.len()
            );
            print_written(&outcome.written);
            Ok(outcome.success())
        }
        Command::Report {
            input,
            format,
            output,
            store,
        } => {
            let previous = Report::read(&input)?;
            let cve_store = CveStore::open_dir(&store)?;
            let report = pipeline::reaggregate(previous, &cve_store);
            print_written(&pipeline::write_outputs(&report, format, &output)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
