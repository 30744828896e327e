// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

//! Batch source connectors.
//!
//! Every connector exposes a full snapshot. Connectors that keep history also
//! support a strict watermark filter (`column > watermark`). Snapshot-only
//! connectors refuse the filter instead of silently reading everything.

mod csv_dir;
mod memory;
mod snapshot_only;

use std::path::Path;

pub use csv_dir::{CsvSource, SourceConfig, SCHEMAS_DIR, SOURCE_CONFIG_FILE};
pub use memory::MemorySource;
pub use snapshot_only::SnapshotOnly;

use crate::cdc::{CdcError, Change, DigestPlan, PreviousIndex, RowDigest};
use crate::metadata::{MappingEntry, Secret};
use crate::table::{ColumnType, CsvError, RowBatch, Schema, TableData, Timestamp};

#[derive(Debug, thiserror::Error)]
pub enum SourceError {
    #[error("source unavailable: {0}")]
    SourceUnavailable(String),
    #[error("authentication failed for source {0:?}")]
    AuthFailure(String),
    #[error("read error: {0}")]
    ReadError(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("source does not support {0}")]
    UnsupportedCapability(&'static str),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("column {column:?} has type {found}, expected {expected}")]
    ColumnType {
        column: String,
        expected: ColumnType,
        found: ColumnType,
    },
    #[error(transparent)]
    Cdc(#[from] CdcError),
}

impl From<CsvError> for SourceError {
    fn from(e: CsvError) -> Self {
        match e {
            CsvError::HeaderMismatch { .. } => SourceError::SchemaMismatch(e.to_string()),
            e if e.is_not_found() => SourceError::SourceUnavailable(e.to_string()),
            e => SourceError::ReadError(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceCapabilities {
    pub supports_watermark_filter: bool,
    pub snapshot_only: bool,
}

impl SourceCapabilities {
    pub const FULL_HISTORY: SourceCapabilities = SourceCapabilities {
        supports_watermark_filter: true,
        snapshot_only: false,
    };

    pub const SNAPSHOT_ONLY: SourceCapabilities = SourceCapabilities {
        supports_watermark_filter: false,
        snapshot_only: true,
    };
}

/// Result of scanning a source for changes against a previous index.
#[derive(Debug, Clone)]
pub struct ChangeScan {
    /// Inserted and modified rows, in source order.
    pub changed: RowBatch,
    /// Digest of each row in `changed`.
    pub digests: Vec<RowDigest>,
    pub inserted: u64,
    pub modified: u64,
    pub unchanged: u64,
    pub rows_read: u64,
}

impl ChangeScan {
    pub fn new(schema: Schema) -> Self {
        ChangeScan {
            changed: RowBatch::new(schema),
            digests: Vec::new(),
            inserted: 0,
            modified: 0,
            unchanged: 0,
            rows_read: 0,
        }
    }

    /// Counts a classified row; returns whether it belongs in `changed`.
    pub fn count(&mut self, change: Change) -> bool {
        self.rows_read += 1;
        match change {
            Change::Inserted => self.inserted += 1,
            Change::Modified => self.modified += 1,
            Change::Unchanged => self.unchanged += 1,
        }
        change != Change::Unchanged
    }
}

/// A readable source table.
pub trait Source: Send {
    fn capabilities(&self) -> SourceCapabilities;

    /// Schema the source delivers rows in.
    fn schema(&self) -> Result<Schema, SourceError>;

    /// Full current contents, in source order.
    fn read_snapshot(&self) -> Result<TableData, SourceError>;

    /// Rows whose `column` is non-null and strictly greater than `watermark`.
    fn read_since(&self, column: &str, watermark: Timestamp) -> Result<TableData, SourceError>;

    /// Classifies every source row against `previous`.
    ///
    /// The default reads a full snapshot; connectors may override this with
    /// a cheaper scan that only materializes changed rows.
    fn scan_changes(&self, plan: &DigestPlan, previous: &mut PreviousIndex) -> Result<ChangeScan, SourceError> {
        let snapshot = self.read_snapshot()?;
        let mut scan = ChangeScan::new(snapshot.schema().clone());
        for (i, row) in snapshot.rows().iter().enumerate() {
            let key = plan.key_of(row).ok_or(CdcError::NullPrimaryKey { row: i })?;
            let hash = plan.hash_of(row);
            if scan.count(previous.classify(&key, hash)) {
                scan.changed.push_row(row);
                scan.digests.push(RowDigest { key, hash });
            }
        }
        Ok(scan)
    }
}

impl<S: Source + ?Sized> Source for Box<S> {
    fn capabilities(&self) -> SourceCapabilities {
        (**self).capabilities()
    }
    fn schema(&self) -> Result<Schema, SourceError> {
        (**self).schema()
    }
    fn read_snapshot(&self) -> Result<TableData, SourceError> {
        (**self).read_snapshot()
    }
    fn read_since(&self, column: &str, watermark: Timestamp) -> Result<TableData, SourceError> {
        (**self).read_since(column, watermark)
    }
    fn scan_changes(&self, plan: &DigestPlan, previous: &mut PreviousIndex) -> Result<ChangeScan, SourceError> {
        (**self).scan_changes(plan, previous)
    }
}

/// Index of a timestamp-typed column, or the matching error.
pub fn watermark_index(schema: &Schema, column: &str) -> Result<usize, SourceError> {
    let i = schema
        .index_of(column)
        .ok_or_else(|| SourceError::UnknownColumn(column.to_string()))?;
    let ty = schema.columns()[i].ty;
    if ty != ColumnType::Timestamp {
        return Err(SourceError::ColumnType {
            column: column.to_string(),
            expected: ColumnType::Timestamp,
            found: ty,
        });
    }
    Ok(i)
}

/// Opens the CSV-directory connector for `entry` under `source_root`.
///
/// `<source_root>/<source_name>/_source.json` may mark the source snapshot-only
/// or pin the SHA-256 of the expected secret.
pub fn open_source(
    entry: &MappingEntry,
    secret: &Secret,
    source_root: &Path,
) -> Result<Box<dyn Source>, SourceError> {
    let source = CsvSource::open(source_root, entry, secret)?;
    if source.config().snapshot_only {
        Ok(Box::new(SnapshotOnly::new(source)))
    } else {
        Ok(Box::new(source))
    }
}
