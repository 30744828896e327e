// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

//! Commit records and the `_log/` directory.
//!
//! Each commit is one `%012d.json` file. A commit is visible iff its file
//! exists; files are created by linking a fully written temporary file into
//! place, which fails rather than replacing an existing version.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::digests::DigestRef;
use super::LakeError;
use crate::table::{Schema, Timestamp};

pub const LOG_DIR: &str = "_log";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operation {
    Overwrite,
    Append,
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operation::Overwrite => "overwrite",
            Operation::Append => "append",
        })
    }
}

/// One entry of a table's commit log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub version: u64,
    pub operation: Operation,
    pub data_files: Vec<String>,
    pub row_count: u64,
    pub wall_timestamp: Timestamp,
    pub schema_fingerprint: String,
    /// Full schema of the committed rows.
    pub schema: Schema,
    /// Per timestamp column, the maximum non-null value in this commit's rows.
    #[serde(default)]
    pub timestamp_max: BTreeMap<String, Option<Timestamp>>,
    /// Row digests of this commit, in row order, when the writer supplied them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digests: Option<DigestRef>,
}

pub fn log_file_name(version: u64) -> String {
    format!("{version:012}.json")
}

fn parse_log_file_name(name: &str) -> Option<u64> {
    let digits = name.strip_suffix(".json")?;
    if digits.len() != 12 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> LakeError + '_ {
    move |source| LakeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Committed versions present in `log_dir`, sorted. Missing directory is empty.
pub fn list_versions(log_dir: &Path) -> Result<Vec<u64>, LakeError> {
    let entries = match fs::read_dir(log_dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io(log_dir)(e)),
    };
    let mut versions = Vec::new();
    for entry in entries {
        let entry = entry.map_err(io(log_dir))?;
        if let Some(v) = entry.file_name().to_str().and_then(parse_log_file_name) {
            versions.push(v);
        }
    }
    versions.sort_unstable();
    Ok(versions)
}

/// Reads and checks the whole log: versions must be exactly `0..n`.
pub fn read_log(log_dir: &Path) -> Result<Vec<CommitRecord>, LakeError> {
    let versions = list_versions(log_dir)?;
    let mut records = Vec::with_capacity(versions.len());
    for (expected, v) in versions.into_iter().enumerate() {
        if v != expected as u64 {
            return Err(LakeError::CorruptLog(format!(
                "{}: version {expected} missing (next present is {v})",
                log_dir.display()
            )));
        }
        records.push(read_record(log_dir, v)?);
    }
    Ok(records)
}

pub fn read_record(log_dir: &Path, version: u64) -> Result<CommitRecord, LakeError> {
    let path = log_dir.join(log_file_name(version));
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    let record: CommitRecord = serde_json::from_str(&text)
        .map_err(|e| LakeError::CorruptLog(format!("{}: {e}", path.display())))?;
    if record.version != version {
        return Err(LakeError::CorruptLog(format!(
            "{} records version {}",
            path.display(),
            record.version
        )));
    }
    if record.schema.fingerprint() != record.schema_fingerprint {
        return Err(LakeError::CorruptLog(format!(
            "{}: schema does not match its fingerprint",
            path.display()
        )));
    }
    Ok(record)
}

/// Writes the record to a temporary file; [`publish`] makes it visible.
pub fn stage_record(log_dir: &Path, record: &CommitRecord, durable: bool) -> Result<PathBuf, LakeError> {
    let tmp = log_dir.join(format!(".tmp-{}-{}.json", record.version, std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(io(&tmp))?;
    let body = serde_json::to_vec_pretty(record).expect("commit record serializes");
    f.write_all(&body).map_err(io(&tmp))?;
    if durable {
        f.sync_all().map_err(io(&tmp))?;
    }
    Ok(tmp)
}

pub fn publish(log_dir: &Path, staged: &Path, version: u64, durable: bool) -> Result<(), LakeError> {
    let target = log_dir.join(log_file_name(version));
    match fs::hard_link(staged, &target) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
            let _ = fs::remove_file(staged);
            return Err(LakeError::CorruptLog(format!(
                "version {version} was committed by another writer"
            )));
        }
        Err(e) => return Err(io(&target)(e)),
    }
    fs::remove_file(staged).map_err(io(staged))?;
    if durable {
        sync_dir(log_dir)?;
    }
    Ok(())
}

pub fn sync_dir(dir: &Path) -> Result<(), LakeError> {
    #[cfg(unix)]
    {
        fs::File::open(dir)
            .and_then(|d| d.sync_all())
            .map_err(io(dir))?;
    }
    #[cfg(not(unix))]
    let _ = dir;
    Ok(())
}
