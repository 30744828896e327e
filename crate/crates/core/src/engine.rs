// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

//! Per-table ingestion and the pipeline that runs a whole mapping table.
//!
//! Each entry resolves to one of three methods:
//!
//! * full refresh: read the source snapshot and overwrite the table;
//! * incremental by date: append source rows whose watermark column is
//!   strictly greater than the lake's current maximum;
//! * incremental by hash: fingerprint every source row and append those whose
//!   `(key, hash)` pair is not in the lake's effective snapshot.
//!
//! Both incremental methods only append, so an updated key has several
//! physical rows. [`effective_snapshot`] keeps the latest one per key.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cdc::{CdcError, DigestPlan, PreviousIndex, RowDigest};
use crate::lake::{Lake, LakeError, LakeTable, Operation};
use crate::metadata::{CredentialStore, CredentialsError, IngestionType, MappingEntry, MappingTable};
use crate::sources::{open_source, Source, SourceCapabilities, SourceError};
use crate::table::{canonical_fields, RowBatch, TableData, TableError};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("cannot ingest {entry}: {reason}")]
    UnsatisfiableIngestion { entry: String, reason: String },
    #[error(transparent)]
    Credentials(#[from] CredentialsError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Lake(#[from] LakeError),
    #[error(transparent)]
    Cdc(#[from] CdcError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("pipeline error: {0}")]
    PipelineError(String),
}

impl EngineError {
    /// Stable machine-readable error category.
    pub fn kind(&self) -> &'static str {
        match self {
            EngineError::UnsatisfiableIngestion { .. } => "unsatisfiable_ingestion",
            EngineError::Credentials(_) => "unknown_credentials_ref",
            EngineError::Source(SourceError::SourceUnavailable(_)) => "source_unavailable",
            EngineError::Source(SourceError::AuthFailure(_)) => "auth_failure",
            EngineError::Source(SourceError::SchemaMismatch(_)) => "schema_mismatch",
            EngineError::Source(SourceError::UnknownColumn(_)) => "unknown_column",
            EngineError::Source(_) => "source_error",
            EngineError::Lake(LakeError::ConcurrentWriter { .. }) => "concurrent_writer",
            EngineError::Lake(LakeError::SchemaDrift { .. }) => "schema_drift",
            EngineError::Lake(LakeError::CorruptLog(_)) => "corrupt_log",
            EngineError::Lake(_) => "lake_error",
            EngineError::Cdc(CdcError::NullPrimaryKey { .. }) => "null_primary_key",
            EngineError::Cdc(_) => "cdc_error",
            EngineError::Table(_) => "table_error",
            EngineError::PipelineError(_) => "pipeline_error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestionMethod {
    FullRefresh,
    IncrementalByDate,
    IncrementalByHash,
}

/// Outcome of ingesting one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestionReport {
    pub source_name: String,
    pub table_name: String,
    pub method: IngestionMethod,
    pub rows_read_from_source: u64,
    pub rows_written_to_lake: u64,
    pub resulting_version: u64,
    pub wall_time_ms: f64,
    /// An incremental entry was loaded in full because the table had no
    /// previous state to compare against.
    pub fallback_applied: bool,
    /// Keys in the lake that the source no longer has (hash method only).
    /// Deletions are never propagated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keys_in_lake_not_in_source: Option<u64>,
}

/// Failure of one entry in a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryFailure {
    pub source_name: String,
    pub table_name: String,
    pub error_kind: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum EntryOutcome {
    Ok(IngestionReport),
    Error(EntryFailure),
}

impl EntryOutcome {
    pub fn report(&self) -> Option<&IngestionReport> {
        match self {
            EntryOutcome::Ok(r) => Some(r),
            EntryOutcome::Error(_) => None,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, EntryOutcome::Ok(_))
    }
}

pub fn resolve_method(entry: &MappingEntry, caps: SourceCapabilities) -> Result<IngestionMethod, EngineError> {
    if entry.ingestion_type == IngestionType::Full {
        return Ok(IngestionMethod::FullRefresh);
    }
    let filter = caps.supports_watermark_filter && !caps.snapshot_only;
    match (&entry.watermark_column, entry.key()) {
        (Some(_), _) if filter => Ok(IngestionMethod::IncrementalByDate),
        // Without a usable watermark, fall back on key comparison.
        (_, Some(_)) => Ok(IngestionMethod::IncrementalByHash),
        (Some(_), None) => Err(EngineError::UnsatisfiableIngestion {
            entry: entry.qualified_name(),
            reason: "source cannot filter by watermark and no primary key is configured".into(),
        }),
        (None, None) => Err(EngineError::UnsatisfiableIngestion {
            entry: entry.qualified_name(),
            reason: "incremental ingestion needs a watermark column or a primary key".into(),
        }),
    }
}

fn report(
    entry: &MappingEntry,
    method: IngestionMethod,
    started: Instant,
    read: u64,
    written: u64,
    version: u64,
) -> IngestionReport {
    IngestionReport {
        source_name: entry.source_name.clone(),
        table_name: entry.table_name.clone(),
        method,
        rows_read_from_source: read,
        rows_written_to_lake: written,
        resulting_version: version,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        fallback_applied: false,
        keys_in_lake_not_in_source: None,
    }
}

fn lake_table(entry: &MappingEntry, lake: &Lake) -> LakeTable {
    lake.table(&entry.source_name, &entry.table_name)
}

/// Digests for a full load, so a later hash run need not re-read the data.
/// `None` when the entry has no key or a key cell is null.
fn snapshot_digests(entry: &MappingEntry, data: &TableData) -> Option<(DigestPlan, Vec<RowDigest>)> {
    let plan = DigestPlan::new(data.schema(), entry.key()?, entry.hash_columns.as_deref()).ok()?;
    let digests = plan.digest_table(data)?;
    Some((plan, digests))
}

/// Overwrites the table with the source's current snapshot.
pub fn full_ingest(entry: &MappingEntry, source: &dyn Source, lake: &Lake) -> Result<IngestionReport, EngineError> {
    let started = Instant::now();
    let snapshot = source.read_snapshot()?;
    let read = started.elapsed();
    let digests = snapshot_digests(entry, &snapshot);
    let batch = RowBatch::from_table(&snapshot);
    drop(snapshot);
    let commit = lake_table(entry, lake).commit_batch(
        Operation::Overwrite,
        &batch,
        digests.as_ref().map(|(p, d)| (p, d.as_slice())),
    )?;
    log::debug!("{}: read source in {read:?}, committed by {:?}", entry.qualified_name(), started.elapsed());
    Ok(report(
        entry,
        IngestionMethod::FullRefresh,
        started,
        batch.len() as u64,
        commit.row_count,
        commit.version,
    ))
}

fn fallback_full(
    entry: &MappingEntry,
    source: &dyn Source,
    lake: &Lake,
    method: IngestionMethod,
) -> Result<IngestionReport, EngineError> {
    log::info!("{}: no previous state, loading in full", entry.qualified_name());
    let mut r = full_ingest(entry, source, lake)?;
    r.method = method;
    r.fallback_applied = true;
    Ok(r)
}

/// Appends source rows whose watermark is strictly after the lake's maximum.
pub fn incremental_ingest_by_date(
    entry: &MappingEntry,
    source: &dyn Source,
    lake: &Lake,
) -> Result<IngestionReport, EngineError> {
    let started = Instant::now();
    let method = IngestionMethod::IncrementalByDate;
    let column = entry.watermark_column.as_deref().ok_or_else(|| EngineError::UnsatisfiableIngestion {
        entry: entry.qualified_name(),
        reason: "no watermark column configured".into(),
    })?;
    let table = lake_table(entry, lake);
    if !table.exists()? {
        return fallback_full(entry, source, lake, method);
    }
    let Some(watermark) = table.max_watermark(column)? else {
        return fallback_full(entry, source, lake, method);
    };
    let fresh = source.read_since(column, watermark)?;
    let commit = table.commit_append(&fresh)?;
    Ok(report(entry, method, started, fresh.len() as u64, commit.row_count, commit.version))
}

/// Latest-wins `(key, hash)` index of the table's current snapshot, from
/// stored digests when they match `plan`, else by scanning the data files.
fn index_lake(table: &LakeTable, plan: &DigestPlan) -> Result<PreviousIndex, EngineError> {
    let state = table.state()?;
    let mut index = PreviousIndex::new();
    if table.for_each_digest(&state, plan, |d| index.upsert(d.key, d.hash))? {
        return Ok(index);
    }
    log::debug!("{}: no usable digests, scanning data files", table.name());
    let schema = state
        .schema()
        .ok_or_else(|| LakeError::TableMissing(table.name().to_string()))?
        .clone();
    let mut row = 0usize;
    table.for_each_record(&state, |rec| -> Result<(), EngineError> {
        let fields = canonical_fields(rec, &schema).map_err(|e| LakeError::CorruptLog(e.to_string()))?;
        let d = plan.digest_fields(&fields).ok_or(CdcError::NullPrimaryKey { row })?;
        index.upsert(d.key, d.hash);
        row += 1;
        Ok(())
    })?;
    Ok(index)
}

/// Appends source rows that are new or whose fingerprint changed.
pub fn incremental_ingest_by_hash(
    entry: &MappingEntry,
    source: &dyn Source,
    lake: &Lake,
) -> Result<IngestionReport, EngineError> {
    let started = Instant::now();
    let method = IngestionMethod::IncrementalByHash;
    let key = entry.key().ok_or_else(|| EngineError::UnsatisfiableIngestion {
        entry: entry.qualified_name(),
        reason: "hash ingestion requires a primary key".into(),
    })?;
    let table = lake_table(entry, lake);
    if !table.exists()? {
        return fallback_full(entry, source, lake, method);
    }
    let schema = source.schema()?;
    let lake_fp = table.state()?.latest().map(|c| c.schema_fingerprint.clone());
    if let Some(expected) = lake_fp {
        let found = schema.fingerprint();
        if expected != found {
            return Err(LakeError::SchemaDrift { expected, found }.into());
        }
    }
    let plan = DigestPlan::new(&schema, key, entry.hash_columns.as_deref())?;
    let mut index = index_lake(&table, &plan)?;
    let indexed = started.elapsed();
    let scan = source.scan_changes(&plan, &mut index)?;
    let scanned = started.elapsed();
    let commit = table.commit_batch(Operation::Append, &scan.changed, Some((&plan, &scan.digests)))?;
    log::debug!(
        "{}: indexed lake in {indexed:?}, scanned source by {scanned:?}, committed by {:?}",
        entry.qualified_name(),
        started.elapsed()
    );
    let mut r = report(entry, method, started, scan.rows_read, commit.row_count, commit.version);
    r.keys_in_lake_not_in_source = Some(index.unseen() as u64);
    Ok(r)
}

/// Resolves the method for `entry` and runs it.
pub fn ingest(entry: &MappingEntry, source: &dyn Source, lake: &Lake) -> Result<IngestionReport, EngineError> {
    match resolve_method(entry, source.capabilities())? {
        IngestionMethod::FullRefresh => full_ingest(entry, source, lake),
        IngestionMethod::IncrementalByDate => incremental_ingest_by_date(entry, source, lake),
        IngestionMethod::IncrementalByHash => incremental_ingest_by_hash(entry, source, lake),
    }
}

/// The table's logical content: with a key, the last physical row per key
/// (highest version, then last position); otherwise the raw snapshot.
pub fn effective_snapshot(table: &LakeTable, primary_key: Option<&[String]>) -> Result<TableData, EngineError> {
    let snapshot = table.read_latest()?;
    let Some(key) = primary_key.filter(|k| !k.is_empty()) else {
        return Ok(snapshot);
    };
    let plan = DigestPlan::new(snapshot.schema(), key, None)?;
    let mut winner: HashMap<Box<[u8]>, usize> = HashMap::with_capacity(snapshot.len());
    for (i, row) in snapshot.rows().iter().enumerate() {
        let k = plan.key_of(row).ok_or(CdcError::NullPrimaryKey { row: i })?;
        winner.insert(k, i);
    }
    let mut keep: Vec<usize> = winner.into_values().collect();
    keep.sort_unstable();
    let schema = snapshot.schema().clone();
    let mut rows = snapshot.into_rows();
    let kept = keep.into_iter().map(|i| std::mem::take(&mut rows[i])).collect();
    Ok(TableData::new(schema, kept)?)
}

/// Settings for [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    /// Maximum entries ingested at once; `None` picks
    /// `min(entries, available CPU parallelism)`.
    pub parallelism: Option<usize>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions { parallelism: None }
    }
}

impl PipelineOptions {
    fn workers(&self, entries: usize) -> usize {
        let cap = self.parallelism.unwrap_or_else(|| {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        });
        cap.min(entries).max(1)
    }
}

fn run_entry(
    entry: &MappingEntry,
    lake: &Lake,
    source_root: &Path,
    credentials: &CredentialStore,
) -> Result<IngestionReport, EngineError> {
    let secret = credentials.resolve_credentials(&entry.credentials_ref)?;
    let source = open_source(entry, &secret, source_root)?;
    ingest(entry, &*source, lake)
}

/// Ingests every entry. A failing entry is reported and does not stop the
/// others; outcomes come back in mapping order.
pub fn run_pipeline(
    mapping: &MappingTable,
    lake: &Lake,
    source_root: &Path,
    credentials: &CredentialStore,
    options: &PipelineOptions,
) -> Result<Vec<EntryOutcome>, EngineError> {
    let entries = mapping.entries();
    if entries.is_empty() {
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(lake.root()).map_err(|e| {
        EngineError::PipelineError(format!("cannot create lake root {}: {e}", lake.root().display()))
    })?;

    let results: Mutex<Vec<Option<EntryOutcome>>> = Mutex::new(vec![None; entries.len()]);
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(entry) = entries.get(i) else { break };
        let outcome = match run_entry(entry, lake, source_root, credentials) {
            Ok(r) => EntryOutcome::Ok(r),
            Err(e) => {
                log::error!("{}: {e}", entry.qualified_name());
                EntryOutcome::Error(EntryFailure {
                    source_name: entry.source_name.clone(),
                    table_name: entry.table_name.clone(),
                    error_kind: e.kind().to_string(),
                    error: e.to_string(),
                })
            }
        };
        results.lock().expect("results lock")[i] = Some(outcome);
    };
    let workers = options.workers(entries.len());
    if workers == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(worker);
            }
        });
    }
    Ok(results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|o| o.expect("every entry processed"))
        .collect())
}
