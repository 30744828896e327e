// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

mod common;

use std::collections::BTreeMap;

use common::{by_key, fast_lake, mutate, pipeline_fixture, write_source_table};
use lakeflow::engine::{run_pipeline, EntryOutcome, IngestionMethod, PipelineOptions};
use lakeflow::lake::Operation;
use lakeflow::metadata::{CredentialStore, MappingEntry, MappingTable};
use lakeflow::table::Row;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn options(n: usize) -> PipelineOptions {
    PipelineOptions { parallelism: Some(n) }
}

fn contents(lake: &lakeflow::lake::Lake, mapping: &MappingTable) -> BTreeMap<String, Vec<Row>> {
    mapping
        .entries()
        .iter()
        .filter_map(|e| {
            let t = lake.table(&e.source_name, &e.table_name);
            t.read_latest().ok().map(|d| (e.qualified_name(), d.rows().to_vec()))
        })
        .collect()
}

#[test]
fn empty_mapping_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let lake = fast_lake(&dir.path().join("lake"));
    let mapping = MappingTable::new(Vec::new()).unwrap();
    let out = run_pipeline(&mapping, &lake, dir.path(), &CredentialStore::default(), &options(4)).unwrap();
    assert!(out.is_empty());
}

#[test]
fn hybrid_run_overwrites_full_and_appends_incremental() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dir = tempfile::tempdir().unwrap();
    let fx = pipeline_fixture(&mut rng, dir.path(), 300, false);
    let lake = fast_lake(&fx.lake);
    let first = run_pipeline(&fx.mapping, &lake, &fx.sources, &fx.credentials, &options(2)).unwrap();
    assert!(first.iter().all(EntryOutcome::is_ok));
    for (i, d) in fx.data.iter().enumerate() {
        let changed = mutate(&mut rng, d, 30, 10);
        write_source_table(&fx.sources, "shop", &format!("t{i}"), &changed);
    }
    let second = run_pipeline(&fx.mapping, &lake, &fx.sources, &fx.credentials, &options(2)).unwrap();
    let methods: Vec<IngestionMethod> = second.iter().map(|o| o.report().unwrap().method).collect();
    assert_eq!(
        methods,
        [
            IngestionMethod::FullRefresh,
            IngestionMethod::IncrementalByDate,
            IngestionMethod::IncrementalByHash,
            IngestionMethod::FullRefresh
        ]
    );
    let written: Vec<u64> = second.iter().map(|o| o.report().unwrap().rows_written_to_lake).collect();
    assert_eq!(written, [310, 40, 40, 310]);
    for (i, op) in [Operation::Overwrite, Operation::Append, Operation::Append, Operation::Overwrite]
        .into_iter()
        .enumerate()
    {
        let state = lake.table("shop", &format!("t{i}")).state().unwrap();
        assert_eq!(state.current_version, Some(1));
        assert_eq!(state.latest().unwrap().operation, op, "t{i}");
    }
}

#[test]
fn outcome_does_not_depend_on_parallelism() {
    let mut lakes = Vec::new();
    for workers in [1, 4] {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dir = tempfile::tempdir().unwrap();
        let fx = pipeline_fixture(&mut rng, dir.path(), 200, false);
        let lake = fast_lake(&fx.lake);
        run_pipeline(&fx.mapping, &lake, &fx.sources, &fx.credentials, &options(workers)).unwrap();
        lakes.push(contents(&lake, &fx.mapping));
    }
    assert_eq!(lakes[0], lakes[1]);
    assert_eq!(lakes[0].len(), 4);
}

#[test]
fn failures_are_isolated_and_reported_in_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dir = tempfile::tempdir().unwrap();
    let fx = pipeline_fixture(&mut rng, dir.path(), 100, true);
    let mut entries = fx.mapping.entries().to_vec();
    entries.insert(1, MappingEntry::new("shop", "t0", "missing_ref", lakeflow::metadata::IngestionType::Full));
    entries[1].table_name = "t0_copy".into();
    let mapping = MappingTable::new(entries).unwrap();
    let lake = fast_lake(&fx.lake);
    let out = run_pipeline(&mapping, &lake, &fx.sources, &fx.credentials, &options(3)).unwrap();
    let kinds: Vec<&str> = out
        .iter()
        .map(|o| match o {
            EntryOutcome::Ok(_) => "ok",
            EntryOutcome::Error(f) => f.error_kind.as_str(),
        })
        .collect();
    assert_eq!(kinds, ["ok", "unknown_credentials_ref", "ok", "ok", "source_unavailable"]);
    for i in 0..3 {
        let got = lake.table("shop", &format!("t{i}")).read_latest().unwrap();
        assert_eq!(by_key(&got), by_key(&fx.data[i]));
    }
    assert!(!lake.table("offline", "t3").exists().unwrap());
}

#[test]
fn permuting_entries_leaves_tables_unchanged() {
    use rand::seq::SliceRandom;
    let mut finals = Vec::new();
    for shuffle_seed in [None, Some(1u64), Some(2)] {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dir = tempfile::tempdir().unwrap();
        let fx = pipeline_fixture(&mut rng, dir.path(), 150, false);
        let mut entries = fx.mapping.entries().to_vec();
        if let Some(s) = shuffle_seed {
            entries.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
        }
        let mapping = MappingTable::new(entries).unwrap();
        let lake = fast_lake(&fx.lake);
        for round in 0..2 {
            if round == 1 {
                for (i, d) in fx.data.iter().enumerate() {
                    let changed = mutate(&mut ChaCha8Rng::seed_from_u64(100 + i as u64), d, 20, 5);
                    write_source_table(&fx.sources, "shop", &format!("t{i}"), &changed);
                }
            }
            let out = run_pipeline(&mapping, &lake, &fx.sources, &fx.credentials, &options(2)).unwrap();
            assert!(out.iter().all(EntryOutcome::is_ok));
        }
        finals.push(contents(&lake, &fx.mapping));
    }
    assert_eq!(finals[0], finals[1]);
    assert_eq!(finals[0], finals[2]);
}
