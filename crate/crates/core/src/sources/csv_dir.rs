// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

//! One CSV file per table: `<root>/<source_name>/<table_name>.csv`.
//!
//! Column types come from, in order: the entry's `schema_ref`
//! (`<root>/_schemas/<schema_ref>.json`), a sidecar
//! `<root>/<source_name>/<table_name>.schema.json`, or else every header
//! column is read as text.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{watermark_index, ChangeScan, Source, SourceCapabilities, SourceError};
use crate::cdc::{CdcError, DigestPlan, PreviousIndex, RowDigest};
use crate::metadata::{MappingEntry, Secret};
use crate::table::{canonical_fields, scan_csv, CsvScanner, Schema, TableData, Timestamp};

pub const SCHEMAS_DIR: &str = "_schemas";
pub const SOURCE_CONFIG_FILE: &str = "_source.json";

/// Per-source settings from `_source.json`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    #[serde(default)]
    pub snapshot_only: bool,
    /// Lowercase hex SHA-256 the resolved secret must hash to.
    #[serde(default)]
    pub secret_sha256: Option<String>,
}

#[derive(Debug)]
pub struct CsvSource {
    path: PathBuf,
    declared: Option<Schema>,
    config: SourceConfig,
}

impl CsvSource {
    pub fn open(root: &Path, entry: &MappingEntry, secret: &Secret) -> Result<Self, SourceError> {
        let dir = root.join(&entry.source_name);
        if !dir.is_dir() {
            return Err(SourceError::SourceUnavailable(format!(
                "source directory {} does not exist",
                dir.display()
            )));
        }
        let config = match std::fs::read_to_string(dir.join(SOURCE_CONFIG_FILE)) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| {
                SourceError::SourceUnavailable(format!("invalid {SOURCE_CONFIG_FILE}: {e}"))
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => SourceConfig::default(),
            Err(e) => return Err(SourceError::SourceUnavailable(e.to_string())),
        };
        if let Some(expected) = &config.secret_sha256 {
            let actual = hex::encode(Sha256::digest(secret.expose()));
            if !actual.eq_ignore_ascii_case(expected) {
                return Err(SourceError::AuthFailure(entry.source_name.clone()));
            }
        }
        let path = dir.join(format!("{}.csv", entry.table_name));
        if !path.is_file() {
            return Err(SourceError::SourceUnavailable(format!(
                "table file {} does not exist",
                path.display()
            )));
        }
        let declared = match &entry.schema_ref {
            Some(name) => {
                let p = root.join(SCHEMAS_DIR).join(format!("{name}.json"));
                if !p.is_file() {
                    return Err(SourceError::SourceUnavailable(format!(
                        "schema {name:?} not found at {}",
                        p.display()
                    )));
                }
                Some(Schema::load(&p).map_err(|e| SourceError::SourceUnavailable(e.to_string()))?)
            }
            None => {
                let p = dir.join(format!("{}.schema.json", entry.table_name));
                if p.is_file() {
                    Some(Schema::load(&p).map_err(|e| SourceError::SourceUnavailable(e.to_string()))?)
                } else {
                    None
                }
            }
        };
        Ok(CsvSource {
            path,
            declared,
            config,
        })
    }

    pub fn from_file(path: impl Into<PathBuf>, schema: Option<Schema>) -> Self {
        CsvSource {
            path: path.into(),
            declared: schema,
            config: SourceConfig::default(),
        }
    }

    pub fn config(&self) -> &SourceConfig {
        &self.config
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn scanner(&self) -> Result<(CsvScanner, Schema), SourceError> {
        match &self.declared {
            Some(schema) => Ok((scan_csv(&self.path, schema)?, schema.clone())),
            None => {
                let mut scanner = CsvScanner::open(&self.path)?;
                let names: Vec<&str> = scanner.header().iter().map(String::as_str).collect();
                let schema = Schema::text(&names).map_err(|e| SourceError::SchemaMismatch(e.to_string()))?;
                scanner.bind(&schema)?;
                Ok((scanner, schema))
            }
        }
    }
}

impl Source for CsvSource {
    fn capabilities(&self) -> SourceCapabilities {
        SourceCapabilities::FULL_HISTORY
    }

    fn schema(&self) -> Result<Schema, SourceError> {
        self.scanner().map(|(_, s)| s)
    }

    fn read_snapshot(&self) -> Result<TableData, SourceError> {
        let (mut scanner, schema) = self.scanner()?;
        let mut rows = Vec::new();
        while scanner.advance()? {
            rows.push(scanner.current().parse_row(&schema)?);
        }
        Ok(TableData::new(schema, rows).expect("rows parsed against schema"))
    }

    fn read_since(&self, column: &str, watermark: Timestamp) -> Result<TableData, SourceError> {
        let (mut scanner, schema) = self.scanner()?;
        let wm = watermark_index(&schema, column)?;
        let mut rows = Vec::new();
        while scanner.advance()? {
            let rec = scanner.current();
            let Some(text) = rec.cell(wm) else { continue };
            let ts = Timestamp::parse(text).map_err(|e| rec.value_error(&schema, wm, e.into()))?;
            if ts > watermark {
                rows.push(rec.parse_row(&schema)?);
            }
        }
        Ok(TableData::new(schema, rows).expect("rows parsed against schema"))
    }

    // Canonicalizes raw fields once and copies changed rows without parsing them.
    fn scan_changes(&self, plan: &DigestPlan, previous: &mut PreviousIndex) -> Result<ChangeScan, SourceError> {
        let (mut scanner, schema) = self.scanner()?;
        let mut scan = ChangeScan::new(schema.clone());
        let mut key = Vec::new();
        while scanner.advance()? {
            let rec = scanner.current();
            let fields = canonical_fields(&rec, &schema)?;
            let row = scan.rows_read as usize;
            let hash = plan
                .digest_fields_into(&fields, &mut key)
                .ok_or(CdcError::NullPrimaryKey { row })?;
            if scan.count(previous.classify(&key, hash)) {
                scan.changed.push_canonical(&fields);
                scan.digests.push(RowDigest {
                    key: key.as_slice().into(),
                    hash,
                });
            }
        }
        Ok(scan)
    }
}
