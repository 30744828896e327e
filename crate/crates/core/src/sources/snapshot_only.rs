// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

use super::{ChangeScan, Source, SourceCapabilities, SourceError};
use crate::cdc::{DigestPlan, PreviousIndex};
use crate::table::{Schema, TableData, Timestamp};

/// Hides a source's history: only whole snapshots can be read.
#[derive(Debug, Clone)]
pub struct SnapshotOnly<S> {
    inner: S,
}

impl<S: Source> SnapshotOnly<S> {
    pub fn new(inner: S) -> Self {
        SnapshotOnly { inner }
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: Source> Source for SnapshotOnly<S> {
    fn capabilities(&self) -> SourceCapabilities {
        SourceCapabilities::SNAPSHOT_ONLY
    }

    fn schema(&self) -> Result<Schema, SourceError> {
        self.inner.schema()
    }

    fn read_snapshot(&self) -> Result<TableData, SourceError> {
        self.inner.read_snapshot()
    }

    fn read_since(&self, _column: &str, _watermark: Timestamp) -> Result<TableData, SourceError> {
        Err(SourceError::UnsupportedCapability("watermark-filtered reads"))
    }

    fn scan_changes(&self, plan: &DigestPlan, previous: &mut PreviousIndex) -> Result<ChangeScan, SourceError> {
        self.inner.scan_changes(plan, previous)
    }
}
