// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

//! Binary sidecar with one `(key, hash)` pair per committed row.
//!
//! Layout: magic `LFDIGST1`, row count (u64 LE), then per row the key length
//! (u32 LE), the key bytes and the hash (u64 LE).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LakeError;
use crate::cdc::{RowDigest, RowHash};

const MAGIC: &[u8; 8] = b"LFDIGST1";

/// Where a commit's digests live and which columns produced them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestRef {
    pub file: String,
    pub key_columns: Vec<String>,
    pub hash_columns: Vec<String>,
}

pub fn digest_file_name(version: u64) -> String {
    format!("digest-{version}.bin")
}

pub(super) fn write_digests(path: &Path, rows: &[RowDigest], durable: bool) -> Result<(), LakeError> {
    let io = |source| LakeError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io)?;
    let mut out = BufWriter::with_capacity(1 << 20, file);
    out.write_all(MAGIC).map_err(io)?;
    out.write_all(&(rows.len() as u64).to_le_bytes()).map_err(io)?;
    for d in rows {
        out.write_all(&(d.key.len() as u32).to_le_bytes()).map_err(io)?;
        out.write_all(&d.key).map_err(io)?;
        out.write_all(&d.hash.0.to_le_bytes()).map_err(io)?;
    }
    let file = out.into_inner().map_err(|e| io(e.into_error()))?;
    if durable {
        file.sync_all().map_err(io)?;
    }
    Ok(())
}

struct Cursor<'a> {
    rest: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.rest.len() < n {
            return None;
        }
        let (head, tail) = self.rest.split_at(n);
        self.rest = tail;
        Some(head)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

/// Decodes a sidecar, checking that it holds exactly `expected_rows` rows.
pub(super) fn read_digests(
    path: &Path,
    expected_rows: u64,
    mut f: impl FnMut(RowDigest),
) -> Result<(), LakeError> {
    let bytes = fs::read(path).map_err(|source| LakeError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let corrupt = |what: &str| LakeError::CorruptLog(format!("{}: {what}", path.display()));
    let truncated = || corrupt("truncated");
    let mut cur = Cursor { rest: &bytes };
    if cur.take(MAGIC.len()) != Some(MAGIC.as_slice()) {
        return Err(corrupt("bad magic"));
    }
    let count = cur.u64().ok_or_else(truncated)?;
    if count != expected_rows {
        return Err(corrupt(&format!("holds {count} rows, commit has {expected_rows}")));
    }
    for _ in 0..count {
        let len = cur.u32().ok_or_else(truncated)? as usize;
        let key = cur.take(len).ok_or_else(truncated)?.into();
        let hash = RowHash(cur.u64().ok_or_else(truncated)?);
        f(RowDigest { key, hash });
    }
    if !cur.rest.is_empty() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(())
}
