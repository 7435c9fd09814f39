#![allow(dead_code)]

pub mod oracles;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use observatory_core::exporter::{
    export_row, list_partitions, read_partition, run_export, spec_for, ExportOptions, ExportState,
};
use observatory_core::model::{format_date, parse_timestamp, PostRecord, Timestamp};
use observatory_core::store::Store;
use observatory_core::table::{Row, TableName};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

/// One fetch of a post: id, minutes before the fetch it was created (first
/// sighting only), and its score at the fetch.
pub type Fetch = (u8, u16, i64);

#[derive(Debug, Clone)]
pub struct Batch {
    pub advance_hours: u16,
    pub fetches: Vec<Fetch>,
}

pub fn batch_strategy() -> impl Strategy<Value = Batch> {
    (1u16..96, proptest::collection::vec((0u8..24, 0u16..4320, -5i64..500), 0..12))
        .prop_map(|(advance_hours, fetches)| Batch { advance_hours, fetches })
}

pub fn scenario_strategy() -> impl Strategy<Value = Vec<Batch>> {
    proptest::collection::vec(batch_strategy(), 1..6)
}

fn file_bytes(out: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for date in list_partitions(out, TableName::Posts).unwrap() {
        let p = out.join("data/posts").join(format!("{date}.parquet"));
        files.insert(date, std::fs::read(p).unwrap());
    }
    files
}

/// Applies each batch to a store, exports after it, and checks the export
/// invariants against the store as the oracle.
pub fn check_export_scenario(batches: &[Batch]) -> Result<(), TestCaseError> {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut store = Store::open_in_memory().unwrap();
    let spec = spec_for(TableName::Posts);
    let mut clock = parse_timestamp("2026-02-01T00:00:00+00:00").unwrap();
    let mut created: HashMap<u8, String> = HashMap::new();
    let mut prev_mark: Option<Timestamp> = None;
    for batch in batches {
        clock = clock.add_secs(batch.advance_hours as i64 * 3600);
        for (i, &(id, age_min, score)) in batch.fetches.iter().enumerate() {
            let at = Timestamp::from_micros(clock.micros() + i as i64).unwrap();
            let created_at =
                created.entry(id).or_insert_with(|| clock.add_secs(-(age_min as i64) * 60).to_string()).clone();
            let rec = PostRecord {
                id: format!("p{id:02}"),
                agent_id: format!("a{}", id % 5),
                agent_name: format!("agent{}", id % 5),
                submolt: "general".into(),
                title: format!("title {id}"),
                content: format!("content {id} {score}"),
                url: None,
                score,
                comment_count: 0,
                created_at,
                fetched_at: at,
                is_pinned: false,
            };
            store.upsert(&rec).unwrap();
        }
        let export_date = format_date(clock.utc_date());
        let mut opts = ExportOptions::new(&out, export_date.clone());
        opts.tables = Some([TableName::Posts].into());
        let report = run_export(&store, &opts).unwrap();
        prop_assert!(report.failed().is_empty());

        // Watermark monotonicity.
        let mark = report.state.last_exported(TableName::Posts);
        if let Some(p) = prev_mark {
            prop_assert!(mark.is_some_and(|m| m >= p), "watermark went back: {:?} -> {:?}", prev_mark, mark);
        }
        prev_mark = mark;

        // Oracle: the store grouped by dump date.
        let mut expected: BTreeMap<String, Vec<Row>> = BTreeMap::new();
        for r in store.all_rows(TableName::Posts).unwrap() {
            let row = export_row(&r, spec, &export_date);
            let date = row.0[12].as_text().unwrap().to_string();
            expected.entry(date).or_default().push(row);
        }
        let dates = list_partitions(&out, TableName::Posts).unwrap();
        prop_assert_eq!(dates.clone(), expected.keys().cloned().collect::<Vec<_>>());
        let mut seen: HashMap<String, String> = HashMap::new();
        let mut total = 0;
        for date in &dates {
            let rows = read_partition(&out, spec, date).unwrap();
            for r in &rows {
                let id = r.0[0].as_text().unwrap().to_string();
                prop_assert_eq!(r.0[12].as_text(), Some(date.as_str()));
                prop_assert!(seen.insert(id.clone(), date.clone()).is_none(), "{} in two partitions", id);
            }
            total += rows.len();
            // Latest fetched values win, including backfilled updates.
            prop_assert_eq!(&rows, &expected[date]);
        }
        prop_assert_eq!(total as u64, store.count(TableName::Posts).unwrap());

        // Idempotence on a frozen store.
        let before = file_bytes(&out);
        let state_before = ExportState::load(&out.join("state.json")).unwrap();
        let again = run_export(&store, &opts).unwrap();
        prop_assert_eq!(again.partitions_written(), 0);
        prop_assert_eq!(file_bytes(&out), before);
        prop_assert_eq!(again.state, state_before);
    }
    Ok(())
}

/// Posts decoded from partitions.
pub fn exported_posts(out: &Path) -> Vec<PostRecord> {
    observatory_core::exporter::read_table(out).unwrap()
}

/// Generated corpus as stored records observed at the end of its window.
pub fn sim_records(
    cfg: &observatory_core::simulator::SimConfig,
) -> (
    observatory_core::simulator::Corpus,
    observatory_core::simulator::GroundTruth,
    Vec<PostRecord>,
    Vec<observatory_core::model::CommentRecord>,
) {
    let (corpus, truth) = observatory_core::simulator::generate_corpus(cfg).unwrap();
    let at = cfg.window_end().unwrap();
    let posts = corpus.posts.iter().cloned().map(|p| p.observed(at)).collect();
    let comments = corpus.comments.iter().cloned().map(|c| c.observed(at)).collect();
    (corpus, truth, posts, comments)
}
