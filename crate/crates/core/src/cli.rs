// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

//! Command-line interface: `validate`, `run`, `inspect` and `benchmark`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{parse_sizes, run_benchmark, write_summary_csv, BenchConfig, MutationSpec, ScenarioResult};
use crate::engine::{run_pipeline, EntryOutcome, PipelineOptions};
use crate::lake::{Lake, LakeOptions};
use crate::metadata::{entry_verdicts, load_mapping_table, parse_entries, CredentialStore, CREDENTIALS_ENV};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "lakeflow", version, about = "Metadata-driven ingestion into a versioned local lake")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Lake root directory.
    #[arg(long, global = true, default_value = "lake")]
    pub lake: PathBuf,
    /// Source root directory.
    #[arg(long, global = true, default_value = "sources")]
    pub sources: PathBuf,
    /// Mapping table (JSON array of entries).
    #[arg(long, global = true, default_value = "mapping.json")]
    pub mapping: PathBuf,
    /// Credentials file (JSON object of reference to secret).
    #[arg(long, global = true, env = CREDENTIALS_ENV, hide_env_values = true)]
    pub credentials: Option<PathBuf>,
    /// Tables ingested concurrently; defaults to min(entries, CPUs).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub parallelism: Option<u64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// Remove writer locks older than the lock TTL.
    #[arg(long, global = true)]
    pub break_stale_locks: bool,
    /// -v for progress, -vv for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the mapping table and print a verdict per entry.
    Validate,
    /// Ingest every entry of the mapping table.
    Run,
    /// Show a lake table's commit history.
    Inspect {
        source_name: String,
        table_name: String,
        /// Also print the maximum of this timestamp column.
        #[arg(long)]
        watermark: Option<String>,
    },
    /// Compare full, incremental and hybrid ingestion on synthetic data.
    Benchmark(BenchArgs),
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated row counts, e.g. `1k,10k,100k,1m`.
    #[arg(long, default_value = "1k")]
    pub sizes: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.40)]
    pub change_fraction: f64,
    #[arg(long, default_value_t = 0.05)]
    pub insert_fraction: f64,
    /// Timed runs per scenario; the fastest is kept.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub repeats: u64,
    /// Scratch directory for generated sources and lakes.
    #[arg(long)]
    pub work_dir: Option<PathBuf>,
    /// JSON results file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV summary file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Resolved global settings.
#[derive(Debug, Clone)]
pub struct GlobalConfig {
    pub lake_root: PathBuf,
    pub source_root: PathBuf,
    pub mapping_path: PathBuf,
    pub credentials_path: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub report_path: Option<PathBuf>,
    pub break_stale_locks: bool,
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

impl GlobalConfig {
    pub fn from_args(g: &GlobalArgs) -> Self {
        GlobalConfig {
            lake_root: absolute(&g.lake),
            source_root: absolute(&g.sources),
            mapping_path: absolute(&g.mapping),
            credentials_path: g.credentials.as_deref().map(absolute),
            parallelism: g.parallelism.map(|p| p as usize),
            report_path: g.report.as_deref().map(absolute),
            break_stale_locks: g.break_stale_locks,
        }
    }

    fn lake(&self) -> Lake {
        Lake::with_options(
            &self.lake_root,
            LakeOptions {
                break_stale_locks: self.break_stale_locks,
                ..LakeOptions::default()
            },
        )
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp_millis()
        .try_init();
}

/// Parses `args`, runs the command and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_FAILURE } else { EXIT_OK };
        }
    };
    init_logging(cli.global.verbose);
    let config = GlobalConfig::from_args(&cli.global);
    match &cli.command {
        Command::Validate => cmd_validate(&config),
        Command::Run => cmd_run(&config),
        Command::Inspect {
            source_name,
            table_name,
            watermark,
        } => cmd_inspect(&config, source_name, table_name, watermark.as_deref()),
        Command::Benchmark(args) => cmd_benchmark(&config, args),
    }
}

fn fail(msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    EXIT_FAILURE
}

pub fn cmd_validate(config: &GlobalConfig) -> i32 {
    let path = &config.mapping_path;
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return fail(format_args!("cannot read {}: {e}", path.display())),
    };
    let entries = match parse_entries(&text) {
        Ok(e) => e,
        Err(e) => return fail(format_args!("{}: {e}", path.display())),
    };
    let verdicts = entry_verdicts(&entries);
    let mut out = io::stdout().lock();
    for (i, (entry, verdict)) in entries.iter().zip(&verdicts).enumerate() {
        let _ = match verdict {
            Ok(()) => writeln!(out, "ok       [{i}] {} ({})", entry.qualified_name(), entry.ingestion_type),
            Err(rule) => writeln!(out, "invalid  [{i}] {}: {rule}", entry.qualified_name()),
        };
    }
    let bad = verdicts.iter().filter(|v| v.is_err()).count();
    let _ = writeln!(out, "{} entries, {bad} invalid", entries.len());
    if bad == 0 {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}

fn emit_json(config: &GlobalConfig, json: &str) -> io::Result<()> {
    match &config.report_path {
        Some(p) => fs::write(p, format!("{json}\n")),
        None => writeln!(io::stdout().lock(), "{json}"),
    }
}

pub fn cmd_run(config: &GlobalConfig) -> i32 {
    let mapping = match load_mapping_table(&config.mapping_path) {
        Ok(m) => m,
        Err(e) => return fail(format_args!("{}: {e}", config.mapping_path.display())),
    };
    let credentials = match CredentialStore::discover(config.credentials_path.as_deref()) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let options = PipelineOptions {
        parallelism: config.parallelism,
    };
    let outcomes = match run_pipeline(&mapping, &config.lake(), &config.source_root, &credentials, &options) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    let json = serde_json::to_string_pretty(&outcomes).expect("reports serialize");
    if let Err(e) = emit_json(config, &json) {
        return fail(format_args!("cannot write report: {e}"));
    }
    let failed = outcomes.iter().filter(|o| !o.is_ok()).count();
    for o in &outcomes {
        if let EntryOutcome::Error(f) = o {
            eprintln!("failed: {}.{}: {}", f.source_name, f.table_name, f.error);
        }
    }
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    }
}

pub fn cmd_inspect(config: &GlobalConfig, source_name: &str, table_name: &str, watermark: Option<&str>) -> i32 {
    let table = config.lake().table(source_name, table_name);
    let state = match table.exists().and_then(|exists| if exists { table.state().map(Some) } else { Ok(None) }) {
        Ok(Some(s)) => s,
        Ok(None) => return fail(format_args!("table {source_name}.{table_name} not found in {}", config.lake_root.display())),
        Err(e) => return fail(e),
    };
    let mut out = io::stdout().lock();
    let latest = state.latest().expect("existing table has a commit");
    let _ = writeln!(out, "table: {source_name}.{table_name}");
    let _ = writeln!(out, "current_version: {}", latest.version);
    let _ = writeln!(out, "schema_fingerprint: {}", latest.schema_fingerprint);
    let _ = writeln!(out, "rows: {}", state.row_count());
    for c in &state.commits {
        let _ = writeln!(
            out,
            "v{} {} rows={} files={} at={}",
            c.version,
            c.operation,
            c.row_count,
            c.data_files.len(),
            c.wall_timestamp
        );
    }
    if let Some(col) = watermark {
        match table.max_watermark(col) {
            Ok(Some(ts)) => {
                let _ = writeln!(out, "max_watermark({col}): {ts}");
            }
            Ok(None) => {
                let _ = writeln!(out, "max_watermark({col}): null");
            }
            Err(e) => return fail(e),
        }
    }
    EXIT_OK
}

fn print_summary(results: &[ScenarioResult]) {
    let mut out = io::stdout().lock();
    let _ = writeln!(out, "{:>10}  {:<16} {:>12} {:>14}", "size", "scenario", "wall_ms", "rows_written");
    for r in results {
        let _ = writeln!(
            out,
            "{:>10}  {:<16} {:>12.1} {:>14}{}",
            r.size,
            r.scenario.to_string(),
            r.total_wall_time_ms,
            r.total_rows_written,
            r.error.as_deref().map(|e| format!("  error: {e}")).unwrap_or_default()
        );
    }
}

pub fn cmd_benchmark(config: &GlobalConfig, args: &BenchArgs) -> i32 {
    let sizes = match parse_sizes(&args.sizes) {
        Ok(s) if !s.is_empty() => s,
        Ok(_) => return fail("no sizes given"),
        Err(e) => return fail(e),
    };
    let bench = BenchConfig {
        sizes,
        seed: args.seed,
        mutation: MutationSpec {
            change_fraction: args.change_fraction,
            insert_fraction: args.insert_fraction,
            seed: args.seed,
        },
        parallelism: config.parallelism.unwrap_or(1),
        repeats: args.repeats as usize,
    };
    let (work_dir, scratch) = match &args.work_dir {
        Some(d) => (absolute(d), false),
        None => (std::env::temp_dir().join(format!("lakeflow-bench-{}", std::process::id())), true),
    };
    let results = run_benchmark(&bench, &work_dir);
    if scratch {
        let _ = fs::remove_dir_all(&work_dir);
    }
    let results = match results {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    print_summary(&results);
    if let Some(p) = &args.out {
        let json = serde_json::to_string_pretty(&results).expect("results serialize");
        if let Err(e) = fs::write(p, format!("{json}\n")) {
            return fail(format_args!("cannot write {}: {e}", p.display()));
        }
    }
    if let Some(p) = &args.csv {
        let written = fs::File::create(p).and_then(|f| write_summary_csv(io::BufWriter::new(f), &results));
        if let Err(e) = written {
            return fail(format_args!("cannot write {}: {e}", p.display()));
        }
    }
    if results.iter().any(|r| r.error.is_some()) {
        EXIT_PARTIAL
    } else {
        EXIT_OK
    }
}
