// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

//! Row fingerprints and change classification.
//!
//! A row is serialized canonically over an ordered column list: each cell is
//! `0x00` when null, otherwise `0x01` followed by the UTF-8 canonical text of
//! the value; cells are separated by `0x1F`. The fingerprint is FNV-1a 64 over
//! those bytes. Keys use the same serialization over the primary-key columns,
//! so composite keys compare exactly.

use std::collections::hash_map::Entry;
use std::borrow::Cow;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fnv::Fnv1a64;
use crate::table::{canonical_text, CsvError, RawRecord, Row, Schema, TableData, Value};

const NULL: u8 = 0x00;
const PRESENT: u8 = 0x01;
const SEPARATOR: u8 = 0x1f;

#[derive(Debug, thiserror::Error)]
pub enum CdcError {
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("primary key must name at least one column")]
    EmptyPrimaryKey,
    #[error("hash column {0:?} is part of the primary key")]
    HashColumnInKey(String),
    #[error("row {row} has a null primary key cell")]
    NullPrimaryKey { row: usize },
    #[error("previous snapshot contains key {key} more than once")]
    DuplicateKeyInPrevious { key: String },
    #[error("incoming and previous schemas differ")]
    SchemaMismatch,
    #[error(transparent)]
    Csv(#[from] CsvError),
}

/// 64-bit row fingerprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowHash(pub u64);

impl RowHash {
    pub fn to_hex(self) -> String {
        format!("{:016x}", self.0)
    }
}

impl fmt::Display for RowHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// Canonical key bytes of a row.
pub type KeyBytes = Box<[u8]>;

fn resolve(schema: &Schema, columns: &[impl AsRef<str>]) -> Result<Vec<usize>, CdcError> {
    columns
        .iter()
        .map(|c| {
            schema
                .index_of(c.as_ref())
                .ok_or_else(|| CdcError::UnknownColumn(c.as_ref().to_string()))
        })
        .collect()
}

trait Sink {
    fn put_byte(&mut self, b: u8);
    fn put(&mut self, bytes: &[u8]);
}

impl Sink for Vec<u8> {
    fn put_byte(&mut self, b: u8) {
        self.push(b);
    }
    fn put(&mut self, bytes: &[u8]) {
        self.extend_from_slice(bytes);
    }
}

impl Sink for Fnv1a64 {
    fn put_byte(&mut self, b: u8) {
        self.write_byte(b);
    }
    fn put(&mut self, bytes: &[u8]) {
        self.write(bytes);
    }
}

fn serialize_cells<S: Sink>(row: &Row, indexes: &[usize], scratch: &mut String, sink: &mut S) {
    for (n, &i) in indexes.iter().enumerate() {
        if n > 0 {
            sink.put_byte(SEPARATOR);
        }
        match &row[i] {
            None => sink.put_byte(NULL),
            Some(v) => {
                sink.put_byte(PRESENT);
                match v {
                    Value::Text(s) => sink.put(s.as_bytes()),
                    Value::Decimal(d) => sink.put(d.as_str().as_bytes()),
                    other => {
                        scratch.clear();
                        other.render_into(scratch);
                        sink.put(scratch.as_bytes());
                    }
                }
            }
        }
    }
}

fn serialize_fields<S: Sink>(fields: &[Option<Cow<'_, str>>], indexes: &[usize], sink: &mut S) {
    for (n, &i) in indexes.iter().enumerate() {
        if n > 0 {
            sink.put_byte(SEPARATOR);
        }
        match &fields[i] {
            None => sink.put_byte(NULL),
            Some(text) => {
                sink.put_byte(PRESENT);
                sink.put(text.as_bytes());
            }
        }
    }
}

fn serialize_raw<S: Sink>(
    rec: &RawRecord<'_>,
    schema: &Schema,
    indexes: &[usize],
    sink: &mut S,
) -> Result<(), CsvError> {
    for (n, &i) in indexes.iter().enumerate() {
        if n > 0 {
            sink.put_byte(SEPARATOR);
        }
        match rec.cell(i) {
            None => sink.put_byte(NULL),
            Some(text) => {
                let canon = canonical_text(schema.columns()[i].ty, text)
                    .map_err(|e| rec.value_error(schema, i, e))?;
                sink.put_byte(PRESENT);
                sink.put(canon.as_bytes());
            }
        }
    }
    Ok(())
}

/// Canonical byte serialization of `row` over `columns`, in the given order.
pub fn canonical_serialize(
    row: &Row,
    columns: &[impl AsRef<str>],
    schema: &Schema,
) -> Result<Vec<u8>, CdcError> {
    let idx = resolve(schema, columns)?;
    let mut out = Vec::new();
    serialize_cells(row, &idx, &mut String::new(), &mut out);
    Ok(out)
}

/// FNV-1a 64 over [`canonical_serialize`].
pub fn row_hash(row: &Row, columns: &[impl AsRef<str>], schema: &Schema) -> Result<RowHash, CdcError> {
    let idx = resolve(schema, columns)?;
    let mut h = Fnv1a64::new();
    serialize_cells(row, &idx, &mut String::new(), &mut h);
    Ok(RowHash(h.finish()))
}

/// Primary-key and hash columns resolved against a schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigestPlan {
    key: Vec<usize>,
    hashed: Vec<usize>,
    key_names: Vec<String>,
    hashed_names: Vec<String>,
}

impl DigestPlan {
    /// `hash_columns` defaults to every non-key column in schema order.
    pub fn new(
        schema: &Schema,
        primary_key: &[impl AsRef<str>],
        hash_columns: Option<&[String]>,
    ) -> Result<Self, CdcError> {
        if primary_key.is_empty() {
            return Err(CdcError::EmptyPrimaryKey);
        }
        let key = resolve(schema, primary_key)?;
        let hashed = match hash_columns {
            Some(cols) => {
                let idx = resolve(schema, cols)?;
                if let Some(i) = idx.iter().find(|i| key.contains(i)) {
                    return Err(CdcError::HashColumnInKey(schema.columns()[*i].name.clone()));
                }
                idx
            }
            None => (0..schema.len()).filter(|i| !key.contains(i)).collect(),
        };
        let names = |idx: &[usize]| idx.iter().map(|&i| schema.columns()[i].name.clone()).collect();
        Ok(DigestPlan {
            key_names: names(&key),
            hashed_names: names(&hashed),
            key,
            hashed,
        })
    }

    pub fn key_column_names(&self) -> &[String] {
        &self.key_names
    }

    pub fn hash_column_names(&self) -> &[String] {
        &self.hashed_names
    }

    pub fn key_columns(&self) -> &[usize] {
        &self.key
    }

    pub fn hash_columns(&self) -> &[usize] {
        &self.hashed
    }

    /// Key bytes, or `None` when any key cell is null.
    pub fn key_of(&self, row: &Row) -> Option<KeyBytes> {
        if self.key.iter().any(|&i| row[i].is_none()) {
            return None;
        }
        let mut out = Vec::with_capacity(16);
        serialize_cells(row, &self.key, &mut String::new(), &mut out);
        Some(out.into_boxed_slice())
    }

    pub fn hash_of(&self, row: &Row) -> RowHash {
        let mut h = Fnv1a64::new();
        serialize_cells(row, &self.hashed, &mut String::new(), &mut h);
        RowHash(h.finish())
    }

    pub fn key_of_raw(&self, rec: &RawRecord<'_>, schema: &Schema) -> Result<Option<KeyBytes>, CsvError> {
        if self.key.iter().any(|&i| rec.cell(i).is_none()) {
            return Ok(None);
        }
        let mut out = Vec::with_capacity(16);
        serialize_raw(rec, schema, &self.key, &mut out)?;
        Ok(Some(out.into_boxed_slice()))
    }

    pub fn hash_of_raw(&self, rec: &RawRecord<'_>, schema: &Schema) -> Result<RowHash, CsvError> {
        let mut h = Fnv1a64::new();
        serialize_raw(rec, schema, &self.hashed, &mut h)?;
        Ok(RowHash(h.finish()))
    }

    /// Key and fingerprint of a row given as canonical fields in schema order.
    pub fn digest_fields(&self, fields: &[Option<Cow<'_, str>>]) -> Option<RowDigest> {
        let mut key = Vec::with_capacity(16);
        let hash = self.digest_fields_into(fields, &mut key)?;
        Some(RowDigest {
            key: key.into_boxed_slice(),
            hash,
        })
    }

    /// Like [`DigestPlan::digest_fields`], writing the key bytes into `key`.
    pub fn digest_fields_into(&self, fields: &[Option<Cow<'_, str>>], key: &mut Vec<u8>) -> Option<RowHash> {
        if self.key.iter().any(|&i| fields[i].is_none()) {
            return None;
        }
        key.clear();
        serialize_fields(fields, &self.key, key);
        let mut h = Fnv1a64::new();
        serialize_fields(fields, &self.hashed, &mut h);
        Some(RowHash(h.finish()))
    }

    /// Digests of every row in order; `None` if any key cell is null.
    pub fn digest_table(&self, data: &TableData) -> Option<Vec<RowDigest>> {
        data.rows()
            .iter()
            .map(|row| {
                Some(RowDigest {
                    key: self.key_of(row)?,
                    hash: self.hash_of(row),
                })
            })
            .collect()
    }

    /// Readable form of key bytes for diagnostics.
    pub fn display_key(key: &[u8]) -> String {
        key.split(|&b| b == SEPARATOR)
            .map(|cell| match cell.split_first() {
                Some((&PRESENT, text)) => String::from_utf8_lossy(text).into_owned(),
                _ => "null".to_string(),
            })
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Key bytes and fingerprint of one row.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RowDigest {
    pub key: KeyBytes,
    pub hash: RowHash,
}

/// A row with its key and fingerprint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyedRow {
    pub key: KeyBytes,
    pub hash: RowHash,
    pub row: Row,
}

impl KeyedRow {
    pub fn new(plan: &DigestPlan, row: Row, index: usize) -> Result<Self, CdcError> {
        let key = plan.key_of(&row).ok_or(CdcError::NullPrimaryKey { row: index })?;
        Ok(KeyedRow {
            key,
            hash: plan.hash_of(&row),
            row,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Change {
    Inserted,
    Modified,
    Unchanged,
}

#[derive(Debug, Clone, Copy)]
struct PreviousEntry {
    hash: RowHash,
    seen: bool,
}

/// Key → fingerprint of the previous state, one entry per key.
#[derive(Debug, Default)]
pub struct PreviousIndex {
    entries: HashMap<KeyBytes, PreviousEntry>,
}

impl PreviousIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `key`, replacing any earlier fingerprint (latest wins).
    pub fn upsert(&mut self, key: KeyBytes, hash: RowHash) {
        self.entries.insert(key, PreviousEntry { hash, seen: false });
    }

    /// Records `key`; returns `false` if it was already present.
    pub fn insert_unique(&mut self, key: KeyBytes, hash: RowHash) -> bool {
        match self.entries.entry(key) {
            Entry::Occupied(_) => false,
            Entry::Vacant(v) => {
                v.insert(PreviousEntry { hash, seen: false });
                true
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &[u8]) -> Option<RowHash> {
        self.entries.get(key).map(|e| e.hash)
    }

    /// Classifies an incoming `(key, hash)` pair and marks the key as seen.
    pub fn classify(&mut self, key: &[u8], hash: RowHash) -> Change {
        match self.entries.get_mut(key) {
            None => Change::Inserted,
            Some(e) => {
                e.seen = true;
                if e.hash == hash {
                    Change::Unchanged
                } else {
                    Change::Modified
                }
            }
        }
    }

    /// Keys never passed to [`PreviousIndex::classify`]: present before, absent now.
    pub fn unseen(&self) -> usize {
        self.entries.values().filter(|e| !e.seen).count()
    }
}

/// Incoming rows partitioned against a previous state.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChangeSet {
    pub inserted: Vec<Row>,
    pub modified: Vec<Row>,
    pub unchanged_count: u64,
}

impl ChangeSet {
    pub fn changed_count(&self) -> usize {
        self.inserted.len() + self.modified.len()
    }

    pub fn total(&self) -> u64 {
        self.changed_count() as u64 + self.unchanged_count
    }

    /// Adds a row according to its classification.
    pub fn record(&mut self, change: Change, row: Row) {
        match change {
            Change::Inserted => self.inserted.push(row),
            Change::Modified => self.modified.push(row),
            Change::Unchanged => self.unchanged_count += 1,
        }
    }

    /// Inserted rows followed by modified rows, each in incoming order.
    pub fn into_changed_rows(self) -> Vec<Row> {
        let mut rows = self.inserted;
        rows.extend(self.modified);
        rows
    }
}

/// Builds the previous index, rejecting duplicate keys.
pub fn index_previous(previous: &TableData, plan: &DigestPlan) -> Result<PreviousIndex, CdcError> {
    let mut index = PreviousIndex::new();
    for (i, row) in previous.rows().iter().enumerate() {
        let key = plan.key_of(row).ok_or(CdcError::NullPrimaryKey { row: i })?;
        let hash = plan.hash_of(row);
        if index.get(&key).is_some() {
            return Err(CdcError::DuplicateKeyInPrevious {
                key: DigestPlan::display_key(&key),
            });
        }
        index.insert_unique(key, hash);
    }
    Ok(index)
}

/// Classifies each incoming row against `previous`, which must have unique keys.
///
/// The changed rows are exactly the left anti-join of incoming with previous
/// on `(key, hash)`.
pub fn classify_changes(
    incoming: &TableData,
    previous: &TableData,
    primary_key: &[impl AsRef<str>],
    hash_columns: Option<&[String]>,
    schema: &Schema,
) -> Result<ChangeSet, CdcError> {
    if incoming.schema() != schema || previous.schema() != schema {
        return Err(CdcError::SchemaMismatch);
    }
    let plan = DigestPlan::new(schema, primary_key, hash_columns)?;
    let mut index = index_previous(previous, &plan)?;
    classify_against(incoming, &plan, &mut index)
}

/// Classifies incoming rows against an existing index.
pub fn classify_against(
    incoming: &TableData,
    plan: &DigestPlan,
    index: &mut PreviousIndex,
) -> Result<ChangeSet, CdcError> {
    let mut changes = ChangeSet::default();
    for (i, row) in incoming.rows().iter().enumerate() {
        let key = plan.key_of(row).ok_or(CdcError::NullPrimaryKey { row: i })?;
        let change = index.classify(&key, plan.hash_of(row));
        changes.record(change, row.clone());
    }
    Ok(changes)
}
