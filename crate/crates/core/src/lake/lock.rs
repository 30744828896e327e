// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

//! Exclusive single-writer lock file.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime};

use serde::{Deserialize, Serialize};

use super::LakeError;
use crate::table::Timestamp;

pub const LOCK_FILE: &str = "LOCK";

#[derive(Debug, Serialize, Deserialize)]
struct LockInfo {
    pid: u32,
    acquired_at: Timestamp,
}

/// Held while a commit is in progress; removes the lock file on drop.
#[derive(Debug)]
pub struct WriterLock {
    path: PathBuf,
}

impl WriterLock {
    /// Creates `<log_dir>/LOCK`, failing with `ConcurrentWriter` if it exists.
    ///
    /// A lock older than `ttl` is removed first only when `break_stale` is set.
    pub fn acquire(log_dir: &Path, ttl: Duration, break_stale: bool) -> Result<Self, LakeError> {
        let path = log_dir.join(LOCK_FILE);
        match Self::try_create(&path) {
            Ok(lock) => return Ok(lock),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {}
            Err(source) => return Err(LakeError::Io { path, source }),
        }
        let age = lock_age(&path);
        if break_stale && age.is_some_and(|a| a >= ttl) {
            log::warn!("breaking stale lock {} (age {:?})", path.display(), age);
            match fs::remove_file(&path) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(source) => return Err(LakeError::Io { path, source }),
            }
            return Self::try_create(&path).map_err(|source| {
                if source.kind() == std::io::ErrorKind::AlreadyExists {
                    LakeError::ConcurrentWriter {
                        lock: path.clone(),
                        age: None,
                    }
                } else {
                    LakeError::Io {
                        path: path.clone(),
                        source,
                    }
                }
            });
        }
        Err(LakeError::ConcurrentWriter { lock: path, age })
    }

    fn try_create(path: &Path) -> std::io::Result<Self> {
        let mut f = OpenOptions::new().write(true).create_new(true).open(path)?;
        let info = LockInfo {
            pid: std::process::id(),
            acquired_at: Timestamp::now(),
        };
        let lock = WriterLock {
            path: path.to_path_buf(),
        };
        f.write_all(serde_json::to_string(&info).expect("lock info serializes").as_bytes())?;
        Ok(lock)
    }

    /// Leaves the lock file behind, as a crashed writer would.
    pub fn abandon(self) {
        std::mem::forget(self);
    }
}

impl Drop for WriterLock {
    fn drop(&mut self) {
        if let Err(e) = fs::remove_file(&self.path) {
            log::warn!("failed to release lock {}: {e}", self.path.display());
        }
    }
}

fn lock_age(path: &Path) -> Option<Duration> {
    let from_content = fs::read_to_string(path)
        .ok()
        .and_then(|t| serde_json::from_str::<LockInfo>(&t).ok())
        .map(|info| {
            let now = Timestamp::now().as_millis();
            Duration::from_millis(now.saturating_sub(info.acquired_at.as_millis()).max(0) as u64)
        });
    from_content.or_else(|| {
        let modified = fs::metadata(path).ok()?.modified().ok()?;
        SystemTime::now().duration_since(modified).ok()
    })
}
