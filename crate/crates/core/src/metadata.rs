// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

//! The mapping table: one entry per ingested table, naming its source,
//! credentials reference, key, watermark, and ingestion type.
//!
//! On disk the mapping table is a JSON array of entry objects. Credentials are
//! referenced by key and resolved from a separate JSON object file.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Environment variable naming the credentials file.
pub const CREDENTIALS_ENV: &str = "LAKEFLOW_CREDENTIALS";

#[derive(Debug, thiserror::Error)]
pub enum MetadataError {
    #[error("mapping file {0} does not exist")]
    FileMissing(PathBuf),
    #[error("parse error at line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("entry {index}: {rule}")]
    ValidationError { index: usize, rule: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IngestionType {
    Full,
    Incremental,
}

impl IngestionType {
    pub fn as_str(self) -> &'static str {
        match self {
            IngestionType::Full => "full",
            IngestionType::Incremental => "incremental",
        }
    }
}

impl fmt::Display for IngestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for IngestionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("full") {
            Ok(IngestionType::Full)
        } else if s.eq_ignore_ascii_case("incremental") {
            Ok(IngestionType::Incremental)
        } else {
            Err(format!("unknown ingestion type {s:?} (expected \"full\" or \"incremental\")"))
        }
    }
}

impl Serialize for IngestionType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for IngestionType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One row of the mapping table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingEntry {
    pub source_name: String,
    pub table_name: String,
    pub credentials_ref: String,
    pub primary_key: Option<Vec<String>>,
    pub watermark_column: Option<String>,
    pub ingestion_type: IngestionType,
    /// Columns fingerprinted for change detection; all non-key columns when absent.
    pub hash_columns: Option<Vec<String>>,
    pub schema_ref: Option<String>,
}

impl MappingEntry {
    pub fn new(
        source_name: impl Into<String>,
        table_name: impl Into<String>,
        credentials_ref: impl Into<String>,
        ingestion_type: IngestionType,
    ) -> Self {
        MappingEntry {
            source_name: source_name.into(),
            table_name: table_name.into(),
            credentials_ref: credentials_ref.into(),
            primary_key: None,
            watermark_column: None,
            ingestion_type,
            hash_columns: None,
            schema_ref: None,
        }
    }

    pub fn with_primary_key<S: Into<String>>(mut self, cols: impl IntoIterator<Item = S>) -> Self {
        self.primary_key = Some(cols.into_iter().map(Into::into).collect());
        self
    }

    pub fn with_watermark(mut self, col: impl Into<String>) -> Self {
        self.watermark_column = Some(col.into());
        self
    }

    pub fn with_hash_columns<S: Into<String>>(mut self, cols: impl IntoIterator<Item = S>) -> Self {
        self.hash_columns = Some(cols.into_iter().map(Into::into).collect());
        self
    }

    pub fn with_schema_ref(mut self, schema: impl Into<String>) -> Self {
        self.schema_ref = Some(schema.into());
        self
    }

    /// Non-empty primary key, if configured.
    pub fn key(&self) -> Option<&[String]> {
        self.primary_key.as_deref().filter(|k| !k.is_empty())
    }

    pub fn qualified_name(&self) -> String {
        format!("{}/{}", self.source_name, self.table_name)
    }

    /// Checks the per-entry rules; the message names the violated rule.
    pub fn validate(&self) -> Result<(), String> {
        for (field, value) in [
            ("source_name", &self.source_name),
            ("table_name", &self.table_name),
            ("credentials_ref", &self.credentials_ref),
        ] {
            if value.trim().is_empty() {
                return Err(format!("{field} must be non-empty"));
            }
        }
        for (field, value) in [("source_name", &self.source_name), ("table_name", &self.table_name)] {
            if value.contains(['/', '\\']) || value == "." || value == ".." {
                return Err(format!("{field} {value:?} is not a valid identifier"));
            }
        }
        if let Some(pk) = &self.primary_key {
            if pk.is_empty() {
                return Err("primary_key must be null or list at least one column".into());
            }
            if pk.iter().any(|c| c.is_empty()) {
                return Err("primary_key contains an empty column name".into());
            }
            let unique: HashSet<_> = pk.iter().collect();
            if unique.len() != pk.len() {
                return Err("primary_key lists a column twice".into());
            }
        }
        if matches!(&self.watermark_column, Some(w) if w.is_empty()) {
            return Err("watermark_column must be null or non-empty".into());
        }
        if self.ingestion_type == IngestionType::Incremental
            && self.watermark_column.is_none()
            && self.key().is_none()
        {
            return Err("incremental ingestion requires a watermark_column or a primary_key".into());
        }
        if let Some(hc) = &self.hash_columns {
            if hc.iter().any(|c| c.is_empty()) {
                return Err("hash_columns contains an empty column name".into());
            }
            if let Some(pk) = &self.primary_key {
                if let Some(c) = hc.iter().find(|c| pk.contains(c)) {
                    return Err(format!("hash column {c:?} is also a primary key column"));
                }
            }
        }
        if matches!(&self.schema_ref, Some(s) if s.is_empty()) {
            return Err("schema_ref must be null or non-empty".into());
        }
        Ok(())
    }
}

/// Validated, immutable mapping table.
///
/// `version` is an in-memory generation counter: tables built with
/// [`MappingTable::new`] or loaded from disk start at 0, and each
/// [`MappingTable::with_entry`] bumps it. The wire format does not carry it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MappingTable {
    entries: Vec<MappingEntry>,
    version: u64,
}

impl MappingTable {
    pub fn new(entries: Vec<MappingEntry>) -> Result<Self, MetadataError> {
        validate_all(&entries)?;
        Ok(MappingTable { entries, version: 0 })
    }

    pub fn with_entry(&self, entry: MappingEntry) -> Result<Self, MetadataError> {
        let mut entries = self.entries.clone();
        entries.push(entry);
        validate_all(&entries)?;
        Ok(MappingTable {
            entries,
            version: self.version + 1,
        })
    }

    pub fn entries(&self) -> &[MappingEntry] {
        &self.entries
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("mapping entries serialize")
    }
}

/// Verdict for each entry, including the cross-entry uniqueness rule.
pub fn entry_verdicts(entries: &[MappingEntry]) -> Vec<Result<(), String>> {
    let mut seen = HashSet::new();
    entries
        .iter()
        .map(|e| {
            e.validate()?;
            if !seen.insert((e.source_name.as_str(), e.table_name.as_str())) {
                return Err(format!(
                    "duplicate (source_name, table_name) = ({}, {})",
                    e.source_name, e.table_name
                ));
            }
            Ok(())
        })
        .collect()
}

fn validate_all(entries: &[MappingEntry]) -> Result<(), MetadataError> {
    match entry_verdicts(entries).into_iter().enumerate().find(|(_, v)| v.is_err()) {
        Some((index, Err(rule))) => Err(MetadataError::ValidationError { index, rule }),
        _ => Ok(()),
    }
}

/// Parses mapping JSON without validating entries.
pub fn parse_entries(text: &str) -> Result<Vec<MappingEntry>, MetadataError> {
    serde_json::from_str(text).map_err(|e| MetadataError::ParseError {
        line: e.line(),
        reason: e.to_string(),
    })
}

pub fn load_mapping_table(path: &Path) -> Result<MappingTable, MetadataError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(MetadataError::FileMissing(path.to_path_buf()))
        }
        Err(source) => {
            return Err(MetadataError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    MappingTable::new(parse_entries(&text)?)
}

/// Writes `table` via a temporary file renamed into place.
pub fn save_mapping_table(table: &MappingTable, path: &Path) -> Result<(), MetadataError> {
    let mut body = table.to_json();
    body.push('\n');
    write_atomic(path, body.as_bytes()).map_err(|source| MetadataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    std::fs::rename(&tmp, path)
}

#[derive(Debug, thiserror::Error)]
pub enum CredentialsError {
    #[error("unknown credentials reference {0:?}")]
    UnknownCredentialsRef(String),
    #[error("cannot load credentials file {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
}

/// Secret bytes. Never printed: `Debug` is redacted and there is no `Display`.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret(Vec<u8>);

impl Secret {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        Secret(bytes.into())
    }

    pub fn expose(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(<redacted>)")
    }
}

/// Reference → secret map.
#[derive(Clone, Default)]
pub struct CredentialStore {
    secrets: BTreeMap<String, String>,
}

impl fmt::Debug for CredentialStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CredentialStore")
            .field("refs", &self.secrets.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl CredentialStore {
    pub fn from_map(secrets: BTreeMap<String, String>) -> Self {
        CredentialStore { secrets }
    }

    /// Loads a JSON object of `ref → secret`.
    pub fn from_file(path: &Path) -> Result<Self, CredentialsError> {
        let unreadable = |reason: String| CredentialsError::Unreadable {
            path: path.to_path_buf(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| unreadable(e.to_string()))?;
        // Do not echo serde's message: it may quote file content.
        let secrets = serde_json::from_str(&text).map_err(|e| {
            unreadable(format!("invalid JSON object at line {}", e.line()))
        })?;
        Ok(CredentialStore { secrets })
    }

    /// Uses `explicit` when given, else the file named by `LAKEFLOW_CREDENTIALS`,
    /// else an empty store.
    pub fn discover(explicit: Option<&Path>) -> Result<Self, CredentialsError> {
        match explicit {
            Some(p) => Self::from_file(p),
            None => match std::env::var_os(CREDENTIALS_ENV) {
                Some(p) if !p.is_empty() => Self::from_file(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn insert(&mut self, reference: impl Into<String>, secret: impl Into<String>) {
        self.secrets.insert(reference.into(), secret.into());
    }

    /// Resolves a reference. Missing and empty secrets are both unknown.
    pub fn resolve_credentials(&self, reference: &str) -> Result<Secret, CredentialsError> {
        match self.secrets.get(reference) {
            Some(s) if !s.is_empty() => Ok(Secret::new(s.as_bytes())),
            _ => Err(CredentialsError::UnknownCredentialsRef(reference.to_string())),
        }
    }
}
