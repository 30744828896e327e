// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

//! Folder-per-table storage with a transactional commit log.
//!
//! Layout: `<lake>/<source_name>/<table_name>/{_schema.json, _log/*.json, part-*.csv}`.
//!
//! A commit writes its data files first, then publishes one log record. The
//! latest snapshot is the files of the most recent overwrite followed by the
//! files of every later append. Data files never referenced by a published
//! record are ignored, so a writer that dies before publishing leaves the
//! previous version intact.

mod commit_log;
mod digests;
mod lock;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

pub use self::digests::{digest_file_name, DigestRef};
pub use self::lock::{WriterLock, LOCK_FILE};
pub use self::commit_log::{log_file_name, CommitRecord, Operation, LOG_DIR};

use crate::cdc::{DigestPlan, RowDigest};
use crate::table::{
    read_csv, scan_csv, write_csv_rows, ColumnType, CsvError, RawRecord, RowBatch, Schema, TableData, Timestamp,
};

pub const SCHEMA_FILE: &str = "_schema.json";

#[derive(Debug, thiserror::Error)]
pub enum LakeError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("another writer holds {lock} (age {age:?})")]
    ConcurrentWriter { lock: PathBuf, age: Option<Duration> },
    #[error("schema drift: table has fingerprint {expected}, data has {found}")]
    SchemaDrift { expected: String, found: String },
    #[error("table {0} does not exist")]
    TableMissing(String),
    #[error("corrupt log: {0}")]
    CorruptLog(String),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("column {column:?} has type {found}, expected timestamp")]
    NotATimestamp { column: String, found: ColumnType },
    #[error("injected crash at {0:?}")]
    InjectedCrash(CrashPoint),
}

/// Where a simulated writer crash stops a commit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashPoint {
    /// Data files written, no log record staged.
    AfterDataWrite,
    /// Log record staged in a temporary file but not published.
    BeforeLogPublish,
}

#[derive(Debug, Clone)]
pub struct LakeOptions {
    /// Age after which a lock may be broken.
    pub lock_ttl: Duration,
    /// Break locks older than `lock_ttl` instead of failing.
    pub break_stale_locks: bool,
    pub max_rows_per_file: usize,
    /// fsync data files, log records, and the log directory.
    pub durable: bool,
    /// Test hook: abort commits at this point, abandoning the lock.
    pub crash_point: Option<CrashPoint>,
}

impl Default for LakeOptions {
    fn default() -> Self {
        LakeOptions {
            lock_ttl: Duration::from_secs(300),
            break_stale_locks: false,
            max_rows_per_file: 250_000,
            durable: true,
            crash_point: None,
        }
    }
}

/// Root directory holding one folder per table.
#[derive(Debug, Clone)]
pub struct Lake {
    root: PathBuf,
    options: LakeOptions,
}

impl Lake {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self::with_options(root, LakeOptions::default())
    }

    pub fn with_options(root: impl Into<PathBuf>, options: LakeOptions) -> Self {
        Lake {
            root: root.into(),
            options,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn options(&self) -> &LakeOptions {
        &self.options
    }

    pub fn table(&self, source_name: &str, table_name: &str) -> LakeTable {
        LakeTable {
            name: format!("{source_name}/{table_name}"),
            dir: self.root.join(source_name).join(table_name),
            options: self.options.clone(),
        }
    }
}

/// True iff the table's log holds at least one record.
pub fn table_exists(lake_root: &Path, source_name: &str, table_name: &str) -> Result<bool, LakeError> {
    Lake::new(lake_root).table(source_name, table_name).exists()
}

/// Replayed state of a table's log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableState {
    pub dir: PathBuf,
    pub current_version: Option<u64>,
    pub active_files: Vec<String>,
    pub commits: Vec<CommitRecord>,
}

impl TableState {
    /// Folds `commits`: an overwrite resets the active files, an append extends them.
    pub fn replay(dir: PathBuf, commits: Vec<CommitRecord>) -> Self {
        let mut active = Vec::new();
        for c in &commits {
            if c.operation == Operation::Overwrite {
                active.clear();
            }
            active.extend(c.data_files.iter().cloned());
        }
        TableState {
            dir,
            current_version: commits.last().map(|c| c.version),
            active_files: active,
            commits,
        }
    }

    pub fn latest(&self) -> Option<&CommitRecord> {
        self.commits.last()
    }

    pub fn schema(&self) -> Option<&Schema> {
        self.latest().map(|c| &c.schema)
    }

    /// Commits whose files make up the latest snapshot.
    pub fn active_commits(&self) -> &[CommitRecord] {
        let start = self
            .commits
            .iter()
            .rposition(|c| c.operation == Operation::Overwrite)
            .unwrap_or(0);
        &self.commits[start..]
    }

    pub fn row_count(&self) -> u64 {
        self.active_commits().iter().map(|c| c.row_count).sum()
    }
}

/// One table folder.
#[derive(Debug, Clone)]
pub struct LakeTable {
    name: String,
    dir: PathBuf,
    options: LakeOptions,
}

impl LakeTable {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn log_dir(&self) -> PathBuf {
        self.dir.join(LOG_DIR)
    }

    pub fn exists(&self) -> Result<bool, LakeError> {
        Ok(!commit_log::list_versions(&self.log_dir())?.is_empty())
    }

    /// Replays the log; an absent table has no current version.
    pub fn state(&self) -> Result<TableState, LakeError> {
        Ok(TableState::replay(self.dir.clone(), commit_log::read_log(&self.log_dir())?))
    }

    fn existing_state(&self) -> Result<TableState, LakeError> {
        let state = self.state()?;
        if state.current_version.is_none() {
            return Err(LakeError::TableMissing(self.name.clone()));
        }
        Ok(state)
    }

    /// Replaces the table's contents with `data`, creating the table if needed.
    pub fn commit_overwrite(&self, data: &TableData) -> Result<CommitRecord, LakeError> {
        self.commit_batch(Operation::Overwrite, &RowBatch::from_table(data), None)
    }

    /// Adds `data` after the current snapshot. The schema must match exactly.
    pub fn commit_append(&self, data: &TableData) -> Result<CommitRecord, LakeError> {
        self.commit_batch(Operation::Append, &RowBatch::from_table(data), None)
    }

    /// Commits encoded rows, optionally with one digest per row computed by `plan`.
    pub fn commit_batch(
        &self,
        operation: Operation,
        batch: &RowBatch,
        digests: Option<(&DigestPlan, &[RowDigest])>,
    ) -> Result<CommitRecord, LakeError> {
        if let Some((_, rows)) = digests {
            assert_eq!(rows.len(), batch.len(), "one digest per row");
        }
        let log_dir = self.log_dir();
        fs::create_dir_all(&log_dir).map_err(|source| LakeError::Io {
            path: log_dir.clone(),
            source,
        })?;
        let lock = WriterLock::acquire(&log_dir, self.options.lock_ttl, self.options.break_stale_locks)?;

        let state = self.state()?;
        let version = state.current_version.map_or(0, |v| v + 1);
        let schema = batch.schema();
        let fingerprint = schema.fingerprint();
        if operation == Operation::Append {
            if let Some(current) = state.latest() {
                if current.schema_fingerprint != fingerprint {
                    return Err(LakeError::SchemaDrift {
                        expected: current.schema_fingerprint.clone(),
                        found: fingerprint,
                    });
                }
            }
        }

        let mut data_files = Vec::new();
        let per_file = self.options.max_rows_per_file.max(1);
        let mut start = 0;
        while start < batch.len() {
            let end = (start + per_file).min(batch.len());
            let name = format!("part-{version}-{}.csv", data_files.len());
            self.write_part(&name, schema, batch.body(start..end))?;
            data_files.push(name);
            start = end;
        }
        let digest_ref = match digests {
            Some((plan, rows)) => {
                let file = digest_file_name(version);
                digests::write_digests(&self.dir.join(&file), rows, self.options.durable)?;
                Some(DigestRef {
                    file,
                    key_columns: plan.key_column_names().to_vec(),
                    hash_columns: plan.hash_column_names().to_vec(),
                })
            }
            None => None,
        };
        if self.options.crash_point == Some(CrashPoint::AfterDataWrite) {
            lock.abandon();
            return Err(LakeError::InjectedCrash(CrashPoint::AfterDataWrite));
        }

        let record = CommitRecord {
            version,
            operation,
            data_files,
            row_count: batch.len() as u64,
            wall_timestamp: Timestamp::now(),
            schema_fingerprint: fingerprint,
            schema: schema.clone(),
            timestamp_max: batch.timestamp_max(),
            digests: digest_ref,
        };
        let staged = commit_log::stage_record(&log_dir, &record, self.options.durable)?;
        if self.options.crash_point == Some(CrashPoint::BeforeLogPublish) {
            lock.abandon();
            return Err(LakeError::InjectedCrash(CrashPoint::BeforeLogPublish));
        }
        commit_log::publish(&log_dir, &staged, version, self.options.durable)?;

        // Derived sidecar for humans and tools; reads use the log.
        crate::metadata::write_atomic(&self.dir.join(SCHEMA_FILE), schema.to_json().as_bytes()).map_err(
            |source| LakeError::Io {
                path: self.dir.join(SCHEMA_FILE),
                source,
            },
        )?;
        drop(lock);
        log::debug!("{}: committed v{version} {operation} ({} rows)", self.name, record.row_count);
        Ok(record)
    }

    fn write_part(&self, name: &str, schema: &Schema, body: &[u8]) -> Result<(), LakeError> {
        let target = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        let io = |source| LakeError::Io {
            path: tmp.clone(),
            source,
        };
        let file = fs::File::create(&tmp).map_err(io)?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        write_csv_rows(&mut out, schema, &[]).map_err(|e| io(e.into()))?;
        out.write_all(body).map_err(io)?;
        let file = out.into_inner().map_err(|e| io(e.into_error()))?;
        if self.options.durable {
            file.sync_all().map_err(io)?;
        }
        fs::rename(&tmp, &target).map_err(io)
    }

    /// Visits the stored digests of the latest snapshot in row order, if every
    /// active commit has digests computed over the same columns as `plan`.
    /// Returns `false` without visiting anything otherwise.
    pub fn for_each_digest(
        &self,
        state: &TableState,
        plan: &DigestPlan,
        mut f: impl FnMut(RowDigest),
    ) -> Result<bool, LakeError> {
        let commits = state.active_commits();
        let usable = !commits.is_empty()
            && commits.iter().all(|c| {
                c.digests.as_ref().is_some_and(|d| {
                    d.key_columns == plan.key_column_names() && d.hash_columns == plan.hash_column_names()
                })
            });
        if !usable {
            return Ok(false);
        }
        for c in commits {
            let d = c.digests.as_ref().expect("checked above");
            digests::read_digests(&self.dir.join(&d.file), c.row_count, &mut f)?;
        }
        Ok(true)
    }

    fn check_files(&self, state: &TableState) -> Result<(), LakeError> {
        for f in &state.active_files {
            if !self.dir.join(f).is_file() {
                return Err(LakeError::CorruptLog(format!(
                    "{}: data file {f} referenced by the log is missing",
                    self.name
                )));
            }
        }
        Ok(())
    }

    fn corrupt(&self, e: CsvError) -> LakeError {
        LakeError::CorruptLog(format!("{}: {e}", self.name))
    }

    /// Rows of the latest snapshot in commit order.
    pub fn read_latest(&self) -> Result<TableData, LakeError> {
        let state = self.existing_state()?;
        self.read_state(&state)
    }

    /// Rows as of `version`, by replaying the log prefix.
    pub fn read_version(&self, version: u64) -> Result<TableData, LakeError> {
        let state = self.existing_state()?;
        if version >= state.commits.len() as u64 {
            return Err(LakeError::CorruptLog(format!("{}: no version {version}", self.name)));
        }
        let prefix = state.commits[..=version as usize].to_vec();
        self.read_state(&TableState::replay(self.dir.clone(), prefix))
    }

    pub fn read_state(&self, state: &TableState) -> Result<TableData, LakeError> {
        let schema = state
            .schema()
            .ok_or_else(|| LakeError::TableMissing(self.name.clone()))?
            .clone();
        self.check_files(state)?;
        let mut out = TableData::empty(schema.clone());
        for f in &state.active_files {
            let part = read_csv(&self.dir.join(f), &schema).map_err(|e| self.corrupt(e))?;
            out.extend(part).expect("parts share the table schema");
        }
        Ok(out)
    }

    /// Visits every row of the active files without parsing cells.
    pub fn for_each_record<E: From<LakeError>>(
        &self,
        state: &TableState,
        mut f: impl FnMut(&RawRecord<'_>) -> Result<(), E>,
    ) -> Result<(), E> {
        let schema = state
            .schema()
            .ok_or_else(|| LakeError::TableMissing(self.name.clone()))?;
        self.check_files(state)?;
        for name in &state.active_files {
            let mut scanner = scan_csv(&self.dir.join(name), schema).map_err(|e| self.corrupt(e))?;
            while scanner.advance().map_err(|e| self.corrupt(e))? {
                f(&scanner.current())?;
            }
        }
        Ok(())
    }

    /// Maximum non-null value of a timestamp column over the latest snapshot.
    ///
    /// Uses per-commit statistics, scanning only commits that lack them.
    pub fn max_watermark(&self, column: &str) -> Result<Option<Timestamp>, LakeError> {
        let state = self.existing_state()?;
        let schema = state.schema().expect("existing table has a schema");
        let idx = schema
            .index_of(column)
            .ok_or_else(|| LakeError::UnknownColumn(column.to_string()))?;
        let ty = schema.columns()[idx].ty;
        if ty != ColumnType::Timestamp {
            return Err(LakeError::NotATimestamp {
                column: column.to_string(),
                found: ty,
            });
        }
        let mut best: Option<Timestamp> = None;
        for commit in state.active_commits() {
            let commit_max = match commit.timestamp_max.get(column) {
                Some(m) => *m,
                None => self.scan_max(commit, idx)?,
            };
            best = best.max(commit_max);
        }
        Ok(best)
    }

    fn scan_max(&self, commit: &CommitRecord, idx: usize) -> Result<Option<Timestamp>, LakeError> {
        let mut best = None;
        for name in &commit.data_files {
            let part = read_csv(&self.dir.join(name), &commit.schema).map_err(|e| self.corrupt(e))?;
            best = best.max(part.max_timestamp(idx));
        }
        Ok(best)
    }
}

/// Digest of every file under `dir` (relative path and content), ignoring
/// nothing. Used to compare lake trees.
pub fn tree_digest(dir: &Path) -> Result<String, LakeError> {
    let mut files = BTreeMap::new();
    collect_files(dir, dir, &mut files)?;
    let mut h = crate::fnv::Fnv1a64::new();
    for (rel, path) in files {
        h.write(rel.as_bytes());
        h.write_byte(0);
        let bytes = fs::read(&path).map_err(|source| LakeError::Io { path, source })?;
        h.write(&(bytes.len() as u64).to_le_bytes());
        h.write(&bytes);
    }
    Ok(format!("{:016x}", h.finish()))
}

fn collect_files(base: &Path, dir: &Path, out: &mut BTreeMap<String, PathBuf>) -> Result<(), LakeError> {
    let io = |source| LakeError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(io(e)),
    };
    for entry in entries {
        let entry = entry.map_err(io)?;
        let path = entry.path();
        if entry.file_type().map_err(io)?.is_dir() {
            collect_files(base, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(base)
                .expect("walked from base")
                .to_string_lossy()
                .replace('\\', "/");
            out.insert(rel, path);
        }
    }
    Ok(())
}
