// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

//! Metadata-driven ingestion of relational tables into an append-only,
//! versioned data lake, with hash-based change detection for sources that
//! only expose snapshots.

pub mod bench;
pub mod cdc;
pub mod cli;
pub mod engine;
pub mod fnv;
pub mod lake;
pub mod metadata;
pub mod sources;
pub mod table;
