// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

use std::sync::{Arc, RwLock};

use super::{watermark_index, Source, SourceCapabilities, SourceError};
use crate::table::{Schema, TableData, Timestamp};

/// In-memory table; clones share the same data so tests can mutate it
/// between reads.
#[derive(Debug, Clone)]
pub struct MemorySource {
    data: Arc<RwLock<TableData>>,
}

impl MemorySource {
    pub fn new(data: TableData) -> Self {
        MemorySource {
            data: Arc::new(RwLock::new(data)),
        }
    }

    pub fn replace(&self, data: TableData) {
        *self.data.write().expect("memory source lock") = data;
    }
}

impl Source for MemorySource {
    fn capabilities(&self) -> SourceCapabilities {
        SourceCapabilities::FULL_HISTORY
    }

    fn schema(&self) -> Result<Schema, SourceError> {
        Ok(self.data.read().expect("memory source lock").schema().clone())
    }

    fn read_snapshot(&self) -> Result<TableData, SourceError> {
        Ok(self.data.read().expect("memory source lock").clone())
    }

    fn read_since(&self, column: &str, watermark: Timestamp) -> Result<TableData, SourceError> {
        let data = self.data.read().expect("memory source lock");
        let i = watermark_index(data.schema(), column)?;
        let rows = data
            .rows()
            .iter()
            .filter(|r| matches!(r[i].as_ref().and_then(|v| v.as_timestamp()), Some(t) if t > watermark))
            .cloned()
            .collect();
        Ok(TableData::new(data.schema().clone(), rows).expect("rows come from a valid table"))
    }
}
