// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

//! Randomized checks, one instance per seed. Each returns a description of
//! the first discrepancy found.

use std::path::Path;

use lakeflow::cdc::classify_changes;
use lakeflow::engine::{effective_snapshot, incremental_ingest_by_date, ingest, IngestionMethod};
use lakeflow::lake::{CrashPoint, Lake, LakeError, LakeOptions};
use lakeflow::metadata::{IngestionType, MappingEntry};
use lakeflow::sources::{CsvSource, MemorySource, SnapshotOnly, Source};
use lakeflow::table::{Column, ColumnType, Row, Schema, TableData, Value};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

pub type Outcome = Result<(), String>;

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Hash classification of a random 1K-row snapshot pair against the
/// cell-by-cell diff.
pub fn cdc_trial(seed: u64) -> Outcome {
    let mut rng = rng(seed);
    let previous = random_table(&mut rng, 1000, 1, 5_000_000);
    let p_update = rng.gen_range(0.0..0.6);
    let p_delete = rng.gen_range(0.0..0.2);
    let mut incoming: Vec<Row> = Vec::new();
    for row in previous.rows() {
        if rng.gen_bool(p_delete) {
            continue;
        }
        let mut row = row.clone();
        if rng.gen_bool(p_update) {
            let col = [TS, AMOUNT, LABEL, FLAG][rng.gen_range(0..4)];
            row[col] = if rng.gen_bool(0.2) { None } else { random_cell(&mut rng, col) };
        }
        incoming.push(row);
    }
    for id in 0..rng.gen_range(0..300) {
        incoming.push(random_row(&mut rng, 10_000 + id, BASE_MS));
    }
    incoming.shuffle(&mut rng);
    let incoming = TableData::new(schema(), incoming).map_err(err)?;

    let all: Vec<usize> = (1..5).collect();
    let (hash_columns, compared) = if rng.gen_bool(0.3) {
        (Some(vec!["amount".to_string(), "flag".to_string()]), vec![AMOUNT, FLAG])
    } else {
        (None, all)
    };
    let got = classify_changes(&incoming, &previous, &["id"], hash_columns.as_deref(), &schema()).map_err(err)?;
    let (inserted, modified) = brute_force_diff(&previous, &incoming, &[ID], &compared);
    check!(got.inserted == inserted, "inserted: {} rows vs oracle {}", got.inserted.len(), inserted.len());
    check!(got.modified == modified, "modified: {} rows vs oracle {}", got.modified.len(), modified.len());
    let unchanged = (incoming.len() - inserted.len() - modified.len()) as u64;
    check!(got.unchanged_count == unchanged, "unchanged {} vs oracle {unchanged}", got.unchanged_count);
    Ok(())
}

fn csv_or_memory(rng: &mut ChaCha8Rng, dir: &Path, name: &str, data: &TableData) -> Box<dyn Source> {
    if rng.gen_bool(0.5) {
        Box::new(MemorySource::new(data.clone()))
    } else {
        let path = dir.join(format!("{name}.csv"));
        let mut bytes = Vec::new();
        lakeflow::table::write_csv(&mut bytes, data).unwrap();
        std::fs::write(&path, bytes).unwrap();
        Box::new(CsvSource::from_file(path, Some(data.schema().clone())))
    }
}

/// Watermark ingestion appends exactly the source rows strictly after the
/// stored maximum, with rows sitting on the maximum planted on purpose.
pub fn date_trial(seed: u64, dir: &Path) -> Outcome {
    let mut rng = rng(seed);
    let lake = fast_lake(&dir.join("lake"));
    let entry = MappingEntry::new("src", "t", "c", IngestionType::Incremental).with_watermark("ts");
    let (n, span) = (rng.gen_range(20..400), rng.gen_range(1..20_000));
    let previous = random_table(&mut rng, n, 1, span);
    let first = csv_or_memory(&mut rng, dir, "first", &previous);
    let cold = ingest(&entry, &*first, &lake).map_err(err)?;
    check!(cold.fallback_applied, "cold start did not fall back");
    let max = max_ts(&previous);

    let mut rows = previous.rows().to_vec();
    let mut next_id = 100_000;
    let extra = rng.gen_range(1..200);
    for k in 0..extra {
        let t = match k % 4 {
            0 => Some(max),
            1 => Some(max - rng.gen_range(1..5_000)),
            2 => Some(max + rng.gen_range(1..5_000)),
            _ => None,
        };
        let mut row = random_row(&mut rng, next_id, 0);
        row[TS] = t.and_then(ts);
        rows.push(row);
        next_id += 1;
    }
    rows.shuffle(&mut rng);
    let source_data = TableData::new(schema(), rows).map_err(err)?;
    let expected: Vec<Row> = source_data
        .rows()
        .iter()
        .filter(|r| matches!(r[TS], Some(Value::Timestamp(t)) if t.as_millis() > max))
        .cloned()
        .collect();

    let source = csv_or_memory(&mut rng, dir, "second", &source_data);
    let report = incremental_ingest_by_date(&entry, &*source, &lake).map_err(err)?;
    check!(report.method == IngestionMethod::IncrementalByDate, "method {:?}", report.method);
    check!(!report.fallback_applied, "unexpected fallback");
    check!(
        report.rows_written_to_lake == expected.len() as u64,
        "wrote {} rows, oracle {}",
        report.rows_written_to_lake,
        expected.len()
    );
    let mut want = previous.rows().to_vec();
    want.extend(expected);
    let got = lake.table("src", "t").read_latest().map_err(err)?;
    check!(got.rows() == want.as_slice(), "lake content differs from previous ++ filter(source)");
    let boundary = got.rows()[previous.len()..]
        .iter()
        .any(|r| matches!(r[TS], Some(Value::Timestamp(t)) if t.as_millis() == max));
    check!(!boundary, "a row on the stored maximum was ingested again");
    Ok(())
}

#[derive(Debug, Clone, Copy)]
enum Config {
    ByDate,
    ByHash,
    ByHashSnapshotOnly,
    Full,
}

/// Re-running against an unchanged source writes nothing incremental and
/// leaves the effective snapshot as it was.
pub fn idempotency_trial(seed: u64, dir: &Path) -> Outcome {
    let mut rng = rng(seed);
    let config = [Config::ByDate, Config::ByHash, Config::ByHashSnapshotOnly, Config::Full][rng.gen_range(0..4)];
    let lake = fast_lake(dir);
    let entry = match config {
        Config::ByDate => MappingEntry::new("s", "t", "c", IngestionType::Incremental)
            .with_watermark("ts")
            .with_primary_key(["id"]),
        Config::ByHash => MappingEntry::new("s", "t", "c", IngestionType::Incremental).with_primary_key(["id"]),
        Config::ByHashSnapshotOnly => MappingEntry::new("s", "t", "c", IngestionType::Incremental)
            .with_watermark("ts")
            .with_primary_key(["id"]),
        Config::Full => MappingEntry::new("s", "t", "c", IngestionType::Full).with_primary_key(["id"]),
    };
    let n = rng.gen_range(1..800);
    let base = random_table(&mut rng, n, 1, 1_000_000);
    let memory = std::sync::Arc::new(MemorySource::new(base.clone()));
    let source: Box<dyn Source> = match config {
        Config::ByHashSnapshotOnly => Box::new(SnapshotOnly::new(SharedSource(memory.clone()))),
        _ => Box::new(SharedSource(memory.clone())),
    };
    ingest(&entry, &*source, &lake).map_err(err)?;
    if rng.gen_bool(0.5) {
        let (updates, inserts) = (rng.gen_range(0..=n), rng.gen_range(0..50));
        memory.replace(mutate(&mut rng, &base, updates, inserts));
        ingest(&entry, &*source, &lake).map_err(err)?;
    }
    let table = lake.table("s", "t");
    let pk = ["id".to_string()];
    let before = effective_snapshot(&table, Some(&pk)).map_err(err)?;
    let version = table.state().map_err(err)?.current_version;
    let report = ingest(&entry, &*source, &lake).map_err(err)?;
    let after = effective_snapshot(&table, Some(&pk)).map_err(err)?;
    check!(
        Some(report.resulting_version) == version.map(|v| v + 1),
        "{config:?}: version {} after {version:?}",
        report.resulting_version
    );
    match config {
        Config::Full => check!(
            report.method == IngestionMethod::FullRefresh,
            "{config:?}: method {:?}",
            report.method
        ),
        _ => check!(
            report.rows_written_to_lake == 0,
            "{config:?} ({:?}) appended {} rows on an unchanged source",
            report.method,
            report.rows_written_to_lake
        ),
    }
    check!(by_key(&before) == by_key(&after), "{config:?}: effective snapshot changed");
    Ok(())
}

/// Lets a test keep mutating a source that the engine borrows.
pub struct SharedSource(pub std::sync::Arc<MemorySource>);

impl Source for SharedSource {
    fn capabilities(&self) -> lakeflow::sources::SourceCapabilities {
        self.0.capabilities()
    }
    fn schema(&self) -> Result<Schema, lakeflow::sources::SourceError> {
        self.0.schema()
    }
    fn read_snapshot(&self) -> Result<TableData, lakeflow::sources::SourceError> {
        self.0.read_snapshot()
    }
    fn read_since(
        &self,
        column: &str,
        watermark: lakeflow::table::Timestamp,
    ) -> Result<TableData, lakeflow::sources::SourceError> {
        self.0.read_since(column, watermark)
    }
}

/// Date, hash and full ingestion agree on the effective snapshot when every
/// update moves the watermark forward.
pub fn equivalence_trial(seed: u64, dir: &Path) -> Outcome {
    let mut rng = rng(seed);
    let base = random_table(&mut rng, 1000, 1, 3_600_000);
    let (updates, inserts) = (rng.gen_range(0..=400), rng.gen_range(0..=100));
    let mutated = mutate(&mut rng, &base, updates, inserts);
    let entries = [
        (
            IngestionMethod::IncrementalByDate,
            MappingEntry::new("s", "t", "c", IngestionType::Incremental)
                .with_primary_key(["id"])
                .with_watermark("ts"),
        ),
        (
            IngestionMethod::IncrementalByHash,
            MappingEntry::new("s", "t", "c", IngestionType::Incremental).with_primary_key(["id"]),
        ),
        (
            IngestionMethod::FullRefresh,
            MappingEntry::new("s", "t", "c", IngestionType::Full).with_primary_key(["id"]),
        ),
    ];
    let expected = by_key(&mutated);
    let pk = ["id".to_string()];
    for (i, (method, entry)) in entries.iter().enumerate() {
        let lake = fast_lake(&dir.join(format!("lake-{i}")));
        let source = MemorySource::new(base.clone());
        ingest(entry, &source, &lake).map_err(err)?;
        source.replace(mutated.clone());
        let report = ingest(entry, &source, &lake).map_err(err)?;
        check!(report.method == *method, "expected {method:?}, ran {:?}", report.method);
        let snap = effective_snapshot(&lake.table("s", "t"), Some(&pk)).map_err(err)?;
        let got = by_key(&snap);
        if got != expected {
            let bad = got.iter().zip(&expected).filter(|(a, b)| a != b).count();
            return Err(format!(
                "{method:?}: {} rows vs {} in source, {bad} differing",
                got.len(),
                expected.len()
            ));
        }
    }
    Ok(())
}

fn kv_schema() -> Schema {
    Schema::new(vec![Column::new("k", ColumnType::Integer), Column::new("v", ColumnType::Text)]).unwrap()
}

fn kv_rows(rng: &mut ChaCha8Rng, n: usize) -> TableData {
    let rows = (0..n)
        .map(|_| {
            let k = rng.gen_range(-1000..1000);
            let v = rng.gen_bool(0.8).then(|| format!("v{}", rng.gen::<u16>()));
            vec![Some(Value::Integer(k)), v.map(Value::text)]
        })
        .collect();
    TableData::new(kv_schema(), rows).unwrap()
}

fn lake_with(dir: &Path, rows_per_file: usize, crash: Option<CrashPoint>, break_locks: bool) -> Lake {
    Lake::with_options(
        dir,
        LakeOptions {
            durable: false,
            max_rows_per_file: rows_per_file,
            crash_point: crash,
            break_stale_locks: break_locks,
            lock_ttl: std::time::Duration::ZERO,
        },
    )
}

/// Applies a random history and returns the expected contents per version.
fn random_history(rng: &mut ChaCha8Rng, lake: &Lake, commits: usize) -> Result<Vec<Vec<Row>>, String> {
    let table = lake.table("s", "t");
    let mut model: Vec<Row> = Vec::new();
    let mut history = Vec::new();
    for v in 0..commits {
        let n = rng.gen_range(0..40);
        let data = kv_rows(rng, n);
        let overwrite = v == 0 || rng.gen_bool(0.3);
        let record = if overwrite {
            model = data.rows().to_vec();
            table.commit_overwrite(&data)
        } else {
            model.extend(data.rows().iter().cloned());
            table.commit_append(&data)
        }
        .map_err(err)?;
        check!(record.version == v as u64, "commit {v} got version {}", record.version);
        history.push(model.clone());
    }
    Ok(history)
}

/// The latest snapshot and every historical version equal the fold of the
/// commits, and versions are consecutive from 0.
pub fn replay_trial(seed: u64, dir: &Path) -> Outcome {
    let mut rng = rng(seed);
    let (per_file, commits) = (rng.gen_range(1..16), rng.gen_range(1..10));
    let lake = lake_with(dir, per_file, None, false);
    let history = random_history(&mut rng, &lake, commits)?;
    let table = lake.table("s", "t");
    let state = table.state().map_err(err)?;
    check!(
        state.current_version == Some(history.len() as u64 - 1),
        "current version {:?} after {} commits",
        state.current_version,
        history.len()
    );
    let versions: Vec<u64> = state.commits.iter().map(|c| c.version).collect();
    check!(versions == (0..history.len() as u64).collect::<Vec<_>>(), "versions {versions:?}");
    let latest = table.read_latest().map_err(err)?;
    check!(latest.rows() == history.last().unwrap().as_slice(), "read_latest differs from the fold");
    for (v, want) in history.iter().enumerate() {
        let got = table.read_version(v as u64).map_err(err)?;
        check!(got.rows() == want.as_slice(), "version {v} differs from the fold");
    }
    check!(table.state().map_err(err)? == state, "replaying the log twice differs");
    Ok(())
}

/// A commit that dies at `point` leaves the previous version readable; the
/// next writer must break the abandoned lock and then commits normally.
pub fn crash_trial(seed: u64, dir: &Path, point: CrashPoint) -> Outcome {
    let mut rng = rng(seed);
    let per_file = rng.gen_range(1..16);
    let lake = lake_with(dir, per_file, None, false);
    let commits = rng.gen_range(0..5);
    let history = random_history(&mut rng, &lake, commits)?;
    let table = lake.table("s", "t");
    let before = table.state().ok();

    let n = rng.gen_range(0..40);
    let doomed = kv_rows(&mut rng, n);
    let overwrite = history.is_empty() || rng.gen_bool(0.5);
    let crashing = lake_with(dir, per_file, Some(point), false).table("s", "t");
    let result = if overwrite {
        crashing.commit_overwrite(&doomed)
    } else {
        crashing.commit_append(&doomed)
    };
    check!(
        matches!(result, Err(LakeError::InjectedCrash(p)) if p == point),
        "commit did not stop at {point:?}: {result:?}"
    );

    match history.last() {
        None => check!(!table.exists().map_err(err)?, "a crashed first commit created the table"),
        Some(want) => {
            let after = table.state().map_err(err)?;
            check!(Some(&after) == before.as_ref(), "log changed after the crash");
            let got = table.read_latest().map_err(err)?;
            check!(got.rows() == want.as_slice(), "previous version unreadable after the crash");
        }
    }
    check!(
        matches!(table.commit_append(&doomed), Err(LakeError::ConcurrentWriter { .. })),
        "abandoned lock was not honoured"
    );

    let recovering = lake_with(dir, per_file, None, true).table("s", "t");
    let mut want = if overwrite { Vec::new() } else { history.last().cloned().unwrap_or_default() };
    want.extend(doomed.rows().iter().cloned());
    let record = if overwrite {
        recovering.commit_overwrite(&doomed)
    } else {
        recovering.commit_append(&doomed)
    }
    .map_err(err)?;
    check!(record.version == history.len() as u64, "recovered commit got version {}", record.version);
    let got = table.read_latest().map_err(err)?;
    check!(got.rows() == want.as_slice(), "content after recovery differs");
    Ok(())
}
