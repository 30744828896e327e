// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

//! Synthetic bank-transaction tables and the full / incremental / hybrid
//! benchmark.
//!
//! For each size the runner generates one base table, lands four identical
//! copies with a full load, mutates the source, and then times the second
//! run under three mappings. Every scenario starts from a byte-identical
//! copy of the post-load lake.

use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{run_pipeline, EngineError, EntryOutcome, PipelineOptions};
use crate::lake::{tree_digest, Lake, LakeError, LakeOptions};
use crate::metadata::{CredentialStore, IngestionType, MappingEntry, MappingTable, MetadataError};
use crate::table::{write_csv, Column, ColumnType, Row, Schema, TableData, Timestamp, Value};

pub const N_COLUMNS: usize = 25;
pub const KEY_COLUMN: &str = "transaction_id";
pub const WATERMARK_COLUMN: &str = "event_timestamp";
pub const TABLES_PER_SCENARIO: usize = 4;

const SOURCE_NAME: &str = "bank";
const CREDENTIALS_REF: &str = "bank_local";
/// 2024-01-01T00:00:00.000Z
const EPOCH_2024_MS: i64 = 1_704_067_200_000;

const COUNTRIES: &[&str] = &["USA", "UK", "Germany", "Brazil", "India", "Japan", "France", "Canada"];
const SECTORS: &[&str] = &["Finance", "Retail", "Technology", "Healthcare", "Energy", "Logistics"];
const CURRENCIES: &[&str] = &["USD", "GBP", "EUR", "BRL", "INR", "JPY", "CAD"];
const CHANNELS: &[&str] = &["online", "branch", "atm", "mobile", "wire"];
const STATUSES: &[&str] = &["pending", "settled", "failed", "on_hold"];

const COLUMNS: [(&str, ColumnType); N_COLUMNS] = [
    (KEY_COLUMN, ColumnType::Integer),
    (WATERMARK_COLUMN, ColumnType::Timestamp),
    ("country", ColumnType::Text),
    ("sector", ColumnType::Text),
    ("gross_amount", ColumnType::Decimal),
    ("net_amount", ColumnType::Decimal),
    ("disbursed_from", ColumnType::Text),
    ("disbursed_to", ColumnType::Text),
    ("currency", ColumnType::Text),
    ("channel", ColumnType::Text),
    ("status", ColumnType::Text),
    ("is_international", ColumnType::Boolean),
    ("is_flagged", ColumnType::Boolean),
    ("fee_amount", ColumnType::Decimal),
    ("exchange_rate", ColumnType::Decimal),
    ("customer_id", ColumnType::Integer),
    ("merchant_id", ColumnType::Integer),
    ("branch_code", ColumnType::Text),
    ("posted_at", ColumnType::Timestamp),
    ("risk_score", ColumnType::Integer),
    ("batch_number", ColumnType::Integer),
    ("reference", ColumnType::Text),
    ("description", ColumnType::Text),
    ("is_reversed", ColumnType::Boolean),
    ("tax_amount", ColumnType::Decimal),
];

const COL_STATUS: usize = 10;
const COL_NET: usize = 5;

pub fn bank_schema() -> Schema {
    Schema::new(COLUMNS.iter().map(|&(n, t)| Column::new(n, t)).collect()).expect("static schema is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_rows: usize,
    pub seed: u64,
}

fn cents(c: i64) -> Value {
    let sign = if c < 0 { "-" } else { "" };
    let c = c.abs();
    Value::decimal(&format!("{sign}{}.{:02}", c / 100, c % 100)).expect("formatted decimal")
}

fn pick(rng: &mut ChaCha8Rng, options: &[&str]) -> Value {
    Value::text(options[rng.gen_range(0..options.len())])
}

fn bank_row(rng: &mut ChaCha8Rng, id: i64, ts: Timestamp) -> Row {
    let gross: i64 = rng.gen_range(100..10_000_000);
    let fee = gross / 100;
    let tax = gross * 3 / 100;
    let international = rng.gen_bool(0.3);
    let rate = rng.gen_range(5_000..150_000i64);
    let posted = Timestamp::from_millis(ts.as_millis() + rng.gen_range(0..86_400_000));
    let from = rng.gen_range(0..26u8);
    let to = (from + rng.gen_range(1..26u8)) % 26;
    let cells = vec![
        Value::Integer(id),
        Value::Timestamp(ts),
        pick(rng, COUNTRIES),
        pick(rng, SECTORS),
        cents(gross),
        cents(gross - fee),
        Value::text(format!("Account {}", (b'A' + from) as char)),
        Value::text(format!("Account {}", (b'A' + to) as char)),
        pick(rng, CURRENCIES),
        pick(rng, CHANNELS),
        pick(rng, STATUSES),
        Value::Boolean(international),
        Value::Boolean(rng.gen_bool(0.02)),
        cents(fee),
        Value::decimal(&format!("{}.{:04}", rate / 10_000, rate % 10_000)).expect("formatted decimal"),
        Value::Integer(rng.gen_range(1..500_000)),
        Value::Integer(rng.gen_range(1..50_000)),
        Value::text(format!("BR{:04}", rng.gen_range(0..2_000))),
        Value::Timestamp(posted),
        Value::Integer(rng.gen_range(0..1_000)),
        Value::Integer(id / 1_000),
        Value::text(format!("TX{id:010}-{:08x}", rng.gen::<u32>())),
        Value::text(if international { "cross-border transfer" } else { "domestic payment" }),
        Value::Boolean(rng.gen_bool(0.01)),
        cents(tax),
    ];
    cells.into_iter().map(Some).collect()
}

/// Deterministic in `(n_rows, seed)`. Keys are `1..=n_rows`; event timestamps
/// increase by one second per row from 2024-01-01.
pub fn generate_dataset(spec: &DatasetSpec) -> TableData {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rows = (0..spec.n_rows)
        .map(|i| {
            let ts = Timestamp::from_millis(EPOCH_2024_MS + i as i64 * 1_000);
            bank_row(&mut rng, i as i64 + 1, ts)
        })
        .collect();
    TableData::new(bank_schema(), rows).expect("generated rows conform")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationSpec {
    pub change_fraction: f64,
    pub insert_fraction: f64,
    pub seed: u64,
}

impl Default for MutationSpec {
    fn default() -> Self {
        MutationSpec {
            change_fraction: 0.40,
            insert_fraction: 0.05,
            seed: 0,
        }
    }
}

impl MutationSpec {
    pub fn changed_rows(&self, n: usize) -> usize {
        ((self.change_fraction * n as f64).floor() as usize).min(n)
    }

    pub fn inserted_rows(&self, n: usize) -> usize {
        (self.insert_fraction * n as f64).floor() as usize
    }
}

fn next_status(current: Option<&Value>) -> Value {
    let cur = match current {
        Some(Value::Text(s)) => STATUSES.iter().position(|x| **x == **s),
        _ => None,
    };
    Value::text(STATUSES[cur.map_or(0, |i| (i + 1) % STATUSES.len())])
}

fn bump_cents(v: Option<&Value>) -> Value {
    let c = match v {
        Some(Value::Decimal(d)) => {
            let s = d.as_str();
            let (whole, frac) = s.split_once('.').unwrap_or((s, "0"));
            whole.parse::<i64>().unwrap_or(0) * 100 + frac.parse::<i64>().unwrap_or(0)
        }
        _ => 0,
    };
    cents(c + 1)
}

/// Alters exactly `changed_rows(n)` existing rows (status and net amount,
/// with the event timestamp moved past the base maximum) and appends
/// `inserted_rows(n)` rows with fresh keys. All other rows are untouched.
///
/// `base` must have the bank schema with keys `1..=n` as produced by
/// [`generate_dataset`].
pub fn mutate_dataset(base: TableData, spec: &MutationSpec) -> TableData {
    let schema = base.schema().clone();
    let ts_idx = schema.index_of(WATERMARK_COLUMN).expect("bank schema");
    let key_idx = schema.index_of(KEY_COLUMN).expect("bank schema");
    let n = base.len();
    let base_max = base.max_timestamp(ts_idx).map_or(EPOCH_2024_MS, |t| t.as_millis());
    let max_key = base
        .rows()
        .iter()
        .filter_map(|r| match r[key_idx] {
            Some(Value::Integer(k)) => Some(k),
            _ => None,
        })
        .max()
        .unwrap_or(0);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6d75_7461_7465);
    let mut rows = base.into_rows();
    let mut picked = sample(&mut rng, n, spec.changed_rows(n)).into_vec();
    picked.sort_unstable();
    for (k, &i) in picked.iter().enumerate() {
        let row = &mut rows[i];
        row[COL_STATUS] = Some(next_status(row[COL_STATUS].as_ref()));
        row[COL_NET] = Some(bump_cents(row[COL_NET].as_ref()));
        row[ts_idx] = Some(Value::Timestamp(Timestamp::from_millis(base_max + 1 + k as i64)));
    }
    let fresh_from = base_max + 1 + picked.len() as i64;
    for j in 0..spec.inserted_rows(n) {
        let ts = Timestamp::from_millis(fresh_from + j as i64);
        rows.push(bank_row(&mut rng, max_key + 1 + j as i64, ts));
    }
    TableData::new(schema, rows).expect("mutated rows conform")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    AllFull,
    AllIncremental,
    Hybrid,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::AllFull, Scenario::AllIncremental, Scenario::Hybrid];

    fn ingestion_type(self, table: usize) -> IngestionType {
        match self {
            Scenario::AllFull => IngestionType::Full,
            Scenario::AllIncremental => IngestionType::Incremental,
            Scenario::Hybrid if table < 2 => IngestionType::Full,
            Scenario::Hybrid => IngestionType::Incremental,
        }
    }

    /// Four entries over `table_1..table_4`. Incremental entries carry only
    /// a primary key, so they are compared by row hash.
    pub fn mapping(self) -> MappingTable {
        let entries = (0..TABLES_PER_SCENARIO)
            .map(|t| {
                MappingEntry::new(SOURCE_NAME, table_name(t), CREDENTIALS_REF, self.ingestion_type(t))
                    .with_primary_key([KEY_COLUMN])
            })
            .collect();
        MappingTable::new(entries).expect("static mapping is valid")
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::AllFull => "all_full",
            Scenario::AllIncremental => "all_incremental",
            Scenario::Hybrid => "hybrid",
        })
    }
}

fn table_name(t: usize) -> String {
    format!("table_{}", t + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub size: usize,
    pub scenario: Scenario,
    pub reports: Vec<EntryOutcome>,
    pub total_wall_time_ms: f64,
    pub total_rows_written: u64,
    /// Set when the scenario could not run or an entry failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid size {0:?}")]
    InvalidSize(String),
    #[error("invalid mutation: {0}")]
    InvalidMutation(String),
    #[error("initial load failed: {0}")]
    InitialLoad(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Lake(#[from] LakeError),
    #[error(transparent)]
    Metadata(#[from] MetadataError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    /// Generation seed; the mutation carries its own.
    pub seed: u64,
    pub mutation: MutationSpec,
    /// Engine workers, identical for all scenarios.
    pub parallelism: usize,
    /// Timed runs per scenario; the fastest is reported.
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![1_000],
            seed: 0,
            mutation: MutationSpec::default(),
            parallelism: 1,
            repeats: 1,
        }
    }
}

/// Parses `1k`, `10K`, `1m`, `250000`.
pub fn parse_size(s: &str) -> Result<usize, BenchError> {
    let t = s.trim().to_ascii_lowercase();
    let (digits, mult) = match t.as_bytes().last() {
        Some(b'k') => (&t[..t.len() - 1], 1_000),
        Some(b'm') => (&t[..t.len() - 1], 1_000_000),
        _ => (&t[..], 1),
    };
    digits
        .parse::<usize>()
        .ok()
        .and_then(|d| d.checked_mul(mult))
        .ok_or_else(|| BenchError::InvalidSize(s.to_string()))
}

pub fn parse_sizes(list: &str) -> Result<Vec<usize>, BenchError> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(parse_size).collect()
}

fn write_table(dir: &Path, t: usize, data: &TableData) -> Result<(), BenchError> {
    let path = dir.join(format!("{}.csv", table_name(t)));
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    let mut out = BufWriter::with_capacity(1 << 20, file);
    write_csv(&mut out, data).map_err(|e| BenchError::Io {
        path: path.clone(),
        source: io::Error::other(e),
    })?;
    out.flush().map_err(io_err(&path))
}

fn write_sources(dir: &Path, data: &TableData) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for t in 0..TABLES_PER_SCENARIO {
        write_table(dir, t, data)?;
        let schema_path = dir.join(format!("{}.schema.json", table_name(t)));
        fs::write(&schema_path, data.schema().to_json()).map_err(io_err(&schema_path))?;
    }
    Ok(())
}

/// Recreates `to` as a copy of the tree at `from`.
pub fn copy_tree(from: &Path, to: &Path) -> io::Result<()> {
    match fs::remove_dir_all(to) {
        Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(e),
        _ => {}
    }
    fs::create_dir_all(to)?;
    for entry in fs::read_dir(from)? {
        let entry = entry?;
        let target = to.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            copy_tree(&entry.path(), &target)?;
        } else {
            fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}

fn failures(outcomes: &[EntryOutcome]) -> Option<String> {
    let errs: Vec<String> = outcomes
        .iter()
        .filter_map(|o| match o {
            EntryOutcome::Error(f) => Some(format!("{}.{}: {}", f.source_name, f.table_name, f.error)),
            EntryOutcome::Ok(_) => None,
        })
        .collect();
    (!errs.is_empty()).then(|| errs.join("; "))
}

fn run_scenario(
    size: usize,
    scenario: Scenario,
    lake_dir: &Path,
    lake_options: &LakeOptions,
    sources: &Path,
    credentials: &CredentialStore,
    options: &PipelineOptions,
) -> ScenarioResult {
    let lake = Lake::with_options(lake_dir, lake_options.clone());
    let mapping = scenario.mapping();
    let started = Instant::now();
    let run = run_pipeline(&mapping, &lake, sources, credentials, options);
    let total_wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    match run {
        Ok(reports) => ScenarioResult {
            size,
            scenario,
            total_rows_written: reports
                .iter()
                .filter_map(EntryOutcome::report)
                .map(|r| r.rows_written_to_lake)
                .sum(),
            error: failures(&reports),
            reports,
            total_wall_time_ms,
        },
        Err(e) => ScenarioResult {
            size,
            scenario,
            reports: Vec::new(),
            total_wall_time_ms,
            total_rows_written: 0,
            error: Some(e.to_string()),
        },
    }
}

/// Runs every scenario for every size under `work_dir`, which is cleared
/// per size. Engine failures are recorded on the affected scenario.
pub fn run_benchmark(config: &BenchConfig, work_dir: &Path) -> Result<Vec<ScenarioResult>, BenchError> {
    let m = &config.mutation;
    if !(0.0..=1.0).contains(&m.change_fraction) || !(0.0..=1.0).contains(&m.insert_fraction) {
        return Err(BenchError::InvalidMutation(format!(
            "fractions must lie in [0, 1], got change {} insert {}",
            m.change_fraction, m.insert_fraction
        )));
    }
    let mut credentials = CredentialStore::default();
    credentials.insert(CREDENTIALS_REF, "local");
    let options = PipelineOptions {
        parallelism: Some(config.parallelism.max(1)),
    };
    let lake_options = LakeOptions {
        durable: false,
        ..LakeOptions::default()
    };
    let mut results = Vec::new();
    for &size in &config.sizes {
        let root = work_dir.join(format!("size-{size}"));
        let _ = fs::remove_dir_all(&root);
        let sources = root.join("sources");
        let source_dir = sources.join(SOURCE_NAME);
        let pristine = root.join("lake-initial");
        let lake_dir = root.join("lake");

        log::info!("size {size}: generating");
        let base = generate_dataset(&DatasetSpec {
            n_rows: size,
            seed: config.seed,
        });
        write_sources(&source_dir, &base)?;
        let initial = Lake::with_options(&pristine, lake_options.clone());
        let load = run_pipeline(&Scenario::AllFull.mapping(), &initial, &sources, &credentials, &options)?;
        if let Some(e) = failures(&load) {
            return Err(BenchError::InitialLoad(e));
        }
        let mutated = mutate_dataset(base, m);
        write_sources(&source_dir, &mutated)?;
        drop(mutated);
        let expected = tree_digest(&pristine)?;

        // Repeats are interleaved so a slow spell affects every scenario.
        let mut best: Vec<Option<ScenarioResult>> = vec![None; Scenario::ALL.len()];
        for _ in 0..config.repeats.max(1) {
            for (slot, scenario) in best.iter_mut().zip(Scenario::ALL) {
                log::info!("size {size}: {scenario}");
                copy_tree(&pristine, &lake_dir).map_err(io_err(&lake_dir))?;
                let found = tree_digest(&lake_dir)?;
                if found != expected {
                    return Err(BenchError::Lake(LakeError::CorruptLog(format!(
                        "restored lake digest {found} differs from {expected}"
                    ))));
                }
                let result = run_scenario(size, scenario, &lake_dir, &lake_options, &sources, &credentials, &options);
                log::info!(
                    "size {size}: {scenario} {:.1} ms, {} rows written",
                    result.total_wall_time_ms,
                    result.total_rows_written
                );
                if slot.as_ref().map_or(true, |b| result.total_wall_time_ms < b.total_wall_time_ms) {
                    *slot = Some(result);
                }
            }
        }
        results.extend(best.into_iter().map(|r| r.expect("at least one repeat")));
        let _ = fs::remove_dir_all(&root);
    }
    Ok(results)
}

/// One row per size: wall times and rows written per scenario.
pub fn write_summary_csv<W: Write>(mut out: W, results: &[ScenarioResult]) -> io::Result<()> {
    writeln!(
        out,
        "size,incremental_wall_ms,full_wall_ms,hybrid_wall_ms,\
         incremental_rows_written,full_rows_written,hybrid_rows_written"
    )?;
    let mut sizes: Vec<usize> = results.iter().map(|r| r.size).collect();
    sizes.dedup();
    for size in sizes {
        let get = |s: Scenario| results.iter().find(|r| r.size == size && r.scenario == s);
        let wall = |s| get(s).map_or(String::new(), |r: &ScenarioResult| format!("{:.1}", r.total_wall_time_ms));
        let rows = |s| get(s).map_or(String::new(), |r: &ScenarioResult| r.total_rows_written.to_string());
        use Scenario::*;
        writeln!(
            out,
            "{size},{},{},{},{},{},{}",
            wall(AllIncremental),
            wall(AllFull),
            wall(Hybrid),
            rows(AllIncremental),
            rows(AllFull),
            rows(Hybrid)
        )?;
    }
    Ok(())
}
