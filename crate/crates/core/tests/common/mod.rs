// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

//! Fixtures shared by the integration tests and the acceptance suite.

#![allow(dead_code)]

pub mod trials;

use std::collections::HashMap;
use std::path::Path;

use lakeflow::lake::{Lake, LakeOptions};
use lakeflow::table::{Column, ColumnType, Row, Schema, TableData, Timestamp, Value};
use rand::seq::SliceRandom;
use rand::Rng;

pub const ID: usize = 0;
pub const TS: usize = 1;
pub const AMOUNT: usize = 2;
pub const LABEL: usize = 3;
pub const FLAG: usize = 4;

/// 2024-01-01T00:00:00Z.
pub const BASE_MS: i64 = 1_704_067_200_000;

pub fn schema() -> Schema {
    Schema::new(vec![
        Column::new("id", ColumnType::Integer),
        Column::new("ts", ColumnType::Timestamp),
        Column::new("amount", ColumnType::Decimal),
        Column::new("label", ColumnType::Text),
        Column::new("flag", ColumnType::Boolean),
    ])
    .unwrap()
}

pub fn ts(ms: i64) -> Option<Value> {
    Some(Value::Timestamp(Timestamp::from_millis(ms)))
}

fn amount<R: Rng>(rng: &mut R) -> Option<Value> {
    let cents: i64 = rng.gen_range(-500_000..500_000);
    let sign = if cents < 0 { "-" } else { "" };
    let c = cents.abs();
    Some(Value::decimal(&format!("{sign}{}.{:02}", c / 100, c % 100)).unwrap())
}

const WORDS: &[&str] = &["alpha", "beta", "gamma", "a,b", "say \"hi\"", " pad ", "ünï", "x\ny"];

fn label<R: Rng>(rng: &mut R) -> Option<Value> {
    // Empty text reads back as null, so labels are never empty.
    if rng.gen_bool(0.1) {
        None
    } else {
        Some(Value::text(format!("{}{}", WORDS.choose(rng).unwrap(), rng.gen_range(0..1000))))
    }
}

/// A random non-key cell for column `col`.
pub fn random_cell<R: Rng>(rng: &mut R, col: usize) -> Option<Value> {
    match col {
        AMOUNT => amount(rng),
        LABEL => label(rng),
        FLAG => rng.gen_bool(0.9).then(|| Value::Boolean(rng.gen())),
        TS => ts(BASE_MS + rng.gen_range(0..1_000_000)),
        _ => unreachable!("column {col} is not randomized"),
    }
}

pub fn random_row<R: Rng>(rng: &mut R, id: i64, ts_ms: i64) -> Row {
    vec![
        Some(Value::Integer(id)),
        ts(ts_ms),
        random_cell(rng, AMOUNT),
        random_cell(rng, LABEL),
        random_cell(rng, FLAG),
    ]
}

/// `n` rows with distinct shuffled ids from `first_id` and timestamps within
/// `[BASE_MS, BASE_MS + span_ms)`.
pub fn random_table<R: Rng>(rng: &mut R, n: usize, first_id: i64, span_ms: i64) -> TableData {
    let mut ids: Vec<i64> = (first_id..first_id + n as i64).collect();
    ids.shuffle(rng);
    let rows = ids
        .into_iter()
        .map(|id| {
            let t = BASE_MS + rng.gen_range(0..span_ms);
            random_row(rng, id, t)
        })
        .collect();
    TableData::new(schema(), rows).unwrap()
}

pub fn id_of(row: &Row) -> i64 {
    match row[ID] {
        Some(Value::Integer(i)) => i,
        ref other => panic!("row without integer id: {other:?}"),
    }
}

pub fn max_ts(data: &TableData) -> i64 {
    data.max_timestamp(TS).expect("table has timestamps").as_millis()
}

/// Rows sorted by id, for comparing snapshots keyed by primary key.
pub fn by_key(data: &TableData) -> Vec<Row> {
    let mut rows = data.rows().to_vec();
    rows.sort_by_key(id_of);
    rows
}

/// Changes some existing rows (moving their timestamp past the current
/// maximum) and appends new ids, also after the maximum.
pub fn mutate<R: Rng>(rng: &mut R, base: &TableData, updates: usize, inserts: usize) -> TableData {
    let mut rows = base.rows().to_vec();
    let mut next_ts = max_ts(base) + 1;
    let mut picks: Vec<usize> = (0..rows.len()).collect();
    picks.shuffle(rng);
    for &i in picks.iter().take(updates) {
        let col = [AMOUNT, LABEL, FLAG][rng.gen_range(0..3)];
        let before = rows[i][col].clone();
        while rows[i][col] == before {
            rows[i][col] = random_cell(rng, col);
        }
        rows[i][TS] = ts(next_ts);
        next_ts += rng.gen_range(1..5);
    }
    let mut next_id = rows.iter().map(id_of).max().unwrap_or(0) + 1;
    for _ in 0..inserts {
        rows.push(random_row(rng, next_id, next_ts));
        next_id += 1;
        next_ts += rng.gen_range(0..3);
    }
    TableData::new(schema(), rows).unwrap()
}

/// Incoming rows whose key is new, or whose `compared` cells differ from the
/// previous row with that key, found by comparing values cell by cell.
pub fn brute_force_diff(
    previous: &TableData,
    incoming: &TableData,
    key: &[usize],
    compared: &[usize],
) -> (Vec<Row>, Vec<Row>) {
    let project = |row: &Row| -> Vec<Option<Value>> { key.iter().map(|&k| row[k].clone()).collect() };
    let mut prev: HashMap<Vec<Option<Value>>, &Row> = HashMap::new();
    for row in previous.rows() {
        assert!(prev.insert(project(row), row).is_none(), "duplicate key in previous");
    }
    let (mut inserted, mut modified) = (Vec::new(), Vec::new());
    for row in incoming.rows() {
        match prev.get(&project(row)) {
            None => inserted.push(row.clone()),
            Some(old) => {
                if compared.iter().any(|&c| old[c] != row[c]) {
                    modified.push(row.clone());
                }
            }
        }
    }
    (inserted, modified)
}

pub fn fast_lake(dir: &Path) -> Lake {
    Lake::with_options(
        dir,
        LakeOptions {
            durable: false,
            ..LakeOptions::default()
        },
    )
}

/// Writes `<root>/<source>/<table>.csv` and its schema sidecar.
pub fn write_source_table(root: &Path, source: &str, table: &str, data: &TableData) {
    let dir = root.join(source);
    std::fs::create_dir_all(&dir).unwrap();
    let mut bytes = Vec::new();
    lakeflow::table::write_csv(&mut bytes, data).unwrap();
    std::fs::write(dir.join(format!("{table}.csv")), bytes).unwrap();
    std::fs::write(dir.join(format!("{table}.schema.json")), data.schema().to_json()).unwrap();
}

/// One frozen FNV vector: the expected hex and what this build computes.
pub struct GoldenCase {
    pub expected_hex: String,
    pub actual_hex: String,
}

pub fn golden_cases() -> Vec<GoldenCase> {
    #[derive(serde::Deserialize)]
    struct Vector {
        columns: Vec<Column>,
        row: Vec<Option<String>>,
        expected_hash_hex: String,
    }
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/fnv_vectors.json");
    let text = std::fs::read_to_string(&path).unwrap();
    let vectors: Vec<Vector> = serde_json::from_str(&text).unwrap();
    vectors
        .into_iter()
        .map(|v| {
            let schema = Schema::new(v.columns).unwrap();
            let row: Row = v
                .row
                .iter()
                .zip(schema.columns())
                .map(|(cell, col)| cell.as_deref().map(|t| Value::parse(col.ty, t).unwrap()))
                .collect();
            let names: Vec<&str> = schema.names().collect();
            let hash = lakeflow::cdc::row_hash(&row, &names, &schema).unwrap();
            GoldenCase {
                expected_hex: v.expected_hash_hex,
                actual_hex: hash.to_hex(),
            }
        })
        .collect()
}

/// Four tables under `<root>/sources/shop`: two full, one date-driven and one
/// hash-driven. When `unreachable` is set the last entry points at a source
/// directory that does not exist.
pub struct PipelineFixture {
    pub sources: std::path::PathBuf,
    pub lake: std::path::PathBuf,
    pub mapping: lakeflow::metadata::MappingTable,
    pub credentials: lakeflow::metadata::CredentialStore,
    pub data: Vec<TableData>,
}

pub const CREDENTIALS_REF: &str = "shop_local";

pub fn pipeline_fixture<R: Rng>(rng: &mut R, root: &Path, rows: usize, unreachable: bool) -> PipelineFixture {
    use lakeflow::metadata::{CredentialStore, IngestionType, MappingEntry, MappingTable};
    let sources = root.join("sources");
    let data: Vec<TableData> = (0..4).map(|_| random_table(rng, rows, 1, 86_400_000)).collect();
    for (i, d) in data.iter().enumerate() {
        write_source_table(&sources, "shop", &format!("t{i}"), d);
    }
    let entry = |i: usize, ty| MappingEntry::new("shop", format!("t{i}"), CREDENTIALS_REF, ty);
    let mut entries = vec![
        entry(0, IngestionType::Full),
        entry(1, IngestionType::Incremental).with_watermark("ts").with_primary_key(["id"]),
        entry(2, IngestionType::Incremental).with_primary_key(["id"]),
        entry(3, IngestionType::Full),
    ];
    if unreachable {
        entries[3].source_name = "offline".into();
    }
    let mut credentials = CredentialStore::default();
    credentials.insert(CREDENTIALS_REF, "local-dev");
    PipelineFixture {
        sources,
        lake: root.join("lake"),
        mapping: MappingTable::new(entries).unwrap(),
        credentials,
        data,
    }
}

impl PipelineFixture {
    /// Writes the mapping and credentials files; returns the global CLI flags.
    pub fn cli_flags(&self, root: &Path) -> Vec<std::ffi::OsString> {
        let mapping = root.join("mapping.json");
        lakeflow::metadata::save_mapping_table(&self.mapping, &mapping).unwrap();
        let credentials = root.join("credentials.json");
        std::fs::write(&credentials, format!("{{\"{CREDENTIALS_REF}\": \"local-dev\"}}")).unwrap();
        [
            ("--lake", self.lake.as_path()),
            ("--sources", self.sources.as_path()),
            ("--mapping", mapping.as_path()),
            ("--credentials", credentials.as_path()),
        ]
        .into_iter()
        .flat_map(|(flag, path)| [flag.into(), path.as_os_str().to_owned()])
        .collect()
    }
}
