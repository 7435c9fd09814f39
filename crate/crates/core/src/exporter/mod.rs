//! Incremental, date-partitioned export of store tables with watermark
//! state, a rolling backfill window, keep-most-recent merging and a schema
//! manifest.
//!
//! Output layout under the export root:
//!
//! ```text
//! data/<table>/<dump_date>.parquet
//! manifest.json
//! state.json        (default location; configurable)
//! ```

pub mod parquet_io;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions, TryLockError};
use std::path::{Path, PathBuf};

use chrono::Duration;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{derive_local_fields, parse_date, parse_timestamp, Timestamp};
use crate::store::{Store, StoreError};
use crate::table::{cmp_keys, Column, Record, Row, RowError, TableName, Value, DERIVED_COLUMNS};
pub use parquet_io::ColumnarError;

pub const STATE_VERSION: u32 = 1;
pub const MANIFEST_VERSION: u32 = 1;
pub const STATE_FILE: &str = "state.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_DIR: &str = "data";
pub const PARTITION_EXT: &str = "parquet";

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{0} is excluded from export")]
    Excluded(TableName),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Columnar(#[from] ColumnarError),
    #[error(transparent)]
    Row(#[from] RowError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: unsupported state version {found}")]
    StateVersion { path: PathBuf, found: u32 },
    #[error("another export holds {0}")]
    Locked(PathBuf),
    #[error("invalid export date {0:?}; expected YYYY-MM-DD")]
    ExportDate(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io { path: path.to_path_buf(), source }
}

/// Export metadata for one table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSpec {
    pub table: TableName,
    pub creation_column: &'static str,
    pub incremental_column: &'static str,
    pub backfill_days: u32,
    pub primary_key: &'static [&'static str],
    pub exportable: bool,
}

const fn spec(
    table: TableName,
    creation_column: &'static str,
    incremental_column: &'static str,
    backfill_days: u32,
    primary_key: &'static [&'static str],
) -> TableSpec {
    TableSpec { table, creation_column, incremental_column, backfill_days, primary_key, exportable: true }
}

pub static REGISTRY: [TableSpec; 7] = [
    spec(TableName::Agents, "first_seen_at", "last_seen_at", 7, &["id"]),
    spec(TableName::Posts, "created_at", "fetched_at", 7, &["id"]),
    spec(TableName::Comments, "created_at", "fetched_at", 7, &["id"]),
    spec(TableName::Submolts, "first_seen_at", "first_seen_at", 30, &["name"]),
    spec(TableName::Snapshots, "timestamp", "timestamp", 0, &["id"]),
    spec(TableName::WordFrequency, "hour", "hour", 0, &["word", "hour"]),
    TableSpec {
        exportable: false,
        ..spec(TableName::Follows, "first_seen_at", "first_seen_at", 0, &["follower_id", "following_id"])
    },
];

pub fn spec_for(table: TableName) -> &'static TableSpec {
    REGISTRY.iter().find(|s| s.table == table).expect("registry covers every table")
}

impl TableSpec {
    /// Whether the export appends the derived text columns.
    pub fn has_derived_columns(&self) -> bool {
        matches!(self.table, TableName::Posts | TableName::Comments)
    }

    /// Exported columns in file order.
    pub fn columns(&self) -> Vec<Column> {
        let mut cols = self.table.schema().columns.to_vec();
        if self.has_derived_columns() {
            cols.extend_from_slice(&DERIVED_COLUMNS);
        }
        cols
    }

    pub fn column_names(&self) -> Vec<&'static str> {
        self.columns().iter().map(|c| c.name).collect()
    }

    fn index_in_export(&self, name: &str) -> usize {
        self.columns().iter().position(|c| c.name == name).expect("registry columns exist")
    }

    /// `last_exported` (or the epoch) minus the backfill window.
    pub fn cutoff(&self, last_exported: Option<Timestamp>) -> Timestamp {
        let base = last_exported.unwrap_or_else(Timestamp::epoch);
        base.checked_sub(Duration::days(self.backfill_days as i64)).unwrap_or(base)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableState {
    pub last_exported: Option<Timestamp>,
}

/// Per-table watermarks, persisted as `state.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportState {
    pub version: u32,
    pub tables: BTreeMap<TableName, TableState>,
}

impl Default for ExportState {
    fn default() -> Self {
        ExportState { version: STATE_VERSION, tables: BTreeMap::new() }
    }
}

impl ExportState {
    /// Reads `path`; a missing file is an empty state.
    pub fn load(path: &Path) -> Result<Self, ExportError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::default()),
            Err(e) => return Err(io_err(path)(e)),
        };
        let state: ExportState =
            serde_json::from_str(&text).map_err(|source| ExportError::Json { path: path.into(), source })?;
        if state.version != STATE_VERSION {
            return Err(ExportError::StateVersion { path: path.into(), found: state.version });
        }
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<(), ExportError> {
        let text = serde_json::to_string_pretty(self).expect("state serializes");
        write_atomic(path, |tmp| fs::write(tmp, format!("{text}\n")).map_err(io_err(tmp)))
    }

    pub fn last_exported(&self, table: TableName) -> Option<Timestamp> {
        self.tables.get(&table).and_then(|t| t.last_exported)
    }

    /// Moves the watermark forward; never backwards.
    pub fn advance(&mut self, table: TableName, to: Timestamp) {
        let entry = self.tables.entry(table).or_default();
        if entry.last_exported.is_none_or(|cur| to > cur) {
            entry.last_exported = Some(to);
        }
    }
}

/// Rows whose incremental column is strictly after the backfill cutoff.
pub fn select_incremental(store: &Store, spec: &TableSpec, state: &ExportState) -> Result<Vec<Row>, ExportError> {
    if !spec.exportable {
        return Err(ExportError::Excluded(spec.table));
    }
    let cutoff = spec.cutoff(state.last_exported(spec.table));
    Ok(store.query_rows_since(spec.table, spec.incremental_column, &cutoff)?)
}

/// UTC date of the creation column, or `export_date` when it does not parse.
pub fn assign_partition(row: &Row, spec: &TableSpec, export_date: &str) -> String {
    let idx = spec.table.schema().index_of(spec.creation_column).expect("creation column exists");
    let created = row.get(idx).as_text().unwrap_or("");
    derive_local_fields(created, "", export_date).dump_date
}

/// The stored row plus any derived columns, aligned with [`TableSpec::columns`].
pub fn export_row(row: &Row, spec: &TableSpec, export_date: &str) -> Row {
    if !spec.has_derived_columns() {
        return row.clone();
    }
    let schema = spec.table.schema();
    let text = |name: &str| row.get(schema.index_of(name).expect("column exists")).as_text().unwrap_or("");
    let f = derive_local_fields(text(spec.creation_column), text("content"), export_date);
    let mut values = row.0.clone();
    values.push(Value::Text(f.dump_date));
    values.push(f.date.map_or(Value::Null, Value::Text));
    values.push(f.hour.map_or(Value::Null, |h| Value::Integer(h as i64)));
    values.push(Value::from(f.content_length));
    Row(values)
}

fn cmp_incremental(a: &Value, b: &Value) -> Ordering {
    match (a.as_timestamp(), b.as_timestamp()) {
        (Some(x), Some(y)) => x.cmp(&y),
        (Some(_), None) => Ordering::Greater,
        (None, Some(_)) => Ordering::Less,
        (None, None) => a.total_cmp(b),
    }
}

/// Collision statistics of one merge. Collected only when requested.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeCounters {
    /// Input rows dropped because another row with the same key won.
    pub collapsed: u64,
    /// Existing rows replaced by a different incoming row.
    pub updated: u64,
}

impl MergeCounters {
    fn add(&mut self, other: MergeCounters) {
        self.collapsed += other.collapsed;
        self.updated += other.updated;
    }
}

/// Union keyed by primary key. On collision the greater incremental value
/// wins and ties go to the incoming row. Output is sorted by key.
pub fn merge_dedup(existing: Vec<Row>, incoming: Vec<Row>, spec: &TableSpec) -> Vec<Row> {
    merge_dedup_counted(existing, incoming, spec).0
}

pub fn merge_dedup_counted(existing: Vec<Row>, incoming: Vec<Row>, spec: &TableSpec) -> (Vec<Row>, MergeCounters) {
    let schema = spec.table.schema();
    let keys = schema.key_indices();
    let inc = spec.index_in_export(spec.incremental_column);
    let n_in = existing.len() + incoming.len();
    let mut tagged: Vec<(bool, Row)> =
        existing.into_iter().map(|r| (false, r)).chain(incoming.into_iter().map(|r| (true, r))).collect();
    // Stable: within one key, existing rows precede incoming ones.
    tagged.sort_by(|a, b| cmp_keys(&a.1.key(&keys), &b.1.key(&keys)));
    let mut out: Vec<(bool, Row)> = Vec::with_capacity(tagged.len());
    let mut counters = MergeCounters::default();
    for (is_new, row) in tagged {
        if let Some((last_new, last)) = out.last_mut() {
            if cmp_keys(&last.key(&keys), &row.key(&keys)) == Ordering::Equal {
                if cmp_incremental(row.get(inc), last.get(inc)) != Ordering::Less {
                    if is_new && !*last_new && row != *last {
                        counters.updated += 1;
                    }
                    *last = row;
                    *last_new = is_new;
                }
                continue;
            }
        }
        out.push((is_new, row));
    }
    counters.collapsed = (n_in - out.len()) as u64;
    (out.into_iter().map(|(_, r)| r).collect(), counters)
}

pub fn partition_path(out_dir: &Path, table: TableName, dump_date: &str) -> PathBuf {
    out_dir.join(DATA_DIR).join(table.as_str()).join(format!("{dump_date}.{PARTITION_EXT}"))
}

/// Dump dates of the partition files present for `table`, sorted.
pub fn list_partitions(out_dir: &Path, table: TableName) -> Result<Vec<String>, ExportError> {
    let dir = out_dir.join(DATA_DIR).join(table.as_str());
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let entries = match fs::read_dir(&dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(&dir)(e)),
    };
    let mut dates = Vec::new();
    for entry in entries {
        let path = entry.map_err(io_err(&dir))?.path();
        if path.extension().is_some_and(|e| e == PARTITION_EXT) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                dates.push(stem.to_string());
            }
        }
    }
    dates.sort();
    Ok(dates)
}

pub fn read_partition(out_dir: &Path, spec: &TableSpec, dump_date: &str) -> Result<Vec<Row>, ExportError> {
    Ok(parquet_io::read_rows(&partition_path(out_dir, spec.table, dump_date), &spec.columns())?)
}

/// Every exported row of `R`'s table, partition by partition in date order.
pub fn read_table<R: Record>(out_dir: &Path) -> Result<Vec<R>, ExportError> {
    let spec = spec_for(R::TABLE);
    let columns = spec.columns();
    let mut out = Vec::new();
    for date in list_partitions(out_dir, R::TABLE)? {
        for row in read_partition(out_dir, spec, &date)? {
            out.push(R::from_row(&columns, &row)?);
        }
    }
    Ok(out)
}

/// Writes through a sibling temp file renamed over `path`.
fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<(), ExportError>) -> Result<(), ExportError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    let result = write(&tmp).and_then(|()| fs::rename(&tmp, path).map_err(io_err(path)));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestTable {
    pub columns: Vec<String>,
    pub creation_column: String,
    pub incremental_column: String,
    pub primary_key: Vec<String>,
    pub backfill_days: u32,
    pub exportable: bool,
    pub last_exported: Option<Timestamp>,
    pub partition_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub tables: BTreeMap<TableName, ManifestTable>,
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<(), ExportError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(path, |tmp| fs::write(tmp, format!("{text}\n")).map_err(io_err(tmp)))
    }

    pub fn load(path: &Path) -> Result<Self, ExportError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|source| ExportError::Json { path: path.into(), source })
    }
}

/// `partitions` maps tables to their partition-file counts; absent means 0.
pub fn build_manifest(
    registry: &[TableSpec],
    state: &ExportState,
    partitions: &BTreeMap<TableName, usize>,
) -> Manifest {
    let tables = registry
        .iter()
        .map(|s| {
            let entry = ManifestTable {
                columns: s.column_names().into_iter().map(String::from).collect(),
                creation_column: s.creation_column.into(),
                incremental_column: s.incremental_column.into(),
                primary_key: s.primary_key.iter().map(|k| k.to_string()).collect(),
                backfill_days: s.backfill_days,
                exportable: s.exportable,
                last_exported: state.last_exported(s.table),
                partition_count: if s.exportable { partitions.get(&s.table).copied().unwrap_or(0) } else { 0 },
            };
            (s.table, entry)
        })
        .collect();
    Manifest { version: MANIFEST_VERSION, tables }
}

/// Exclusive advisory lock held for the duration of a run.
pub struct ExportLock {
    _file: File,
    path: PathBuf,
}

impl ExportLock {
    pub fn acquire(path: &Path) -> Result<Self, ExportError> {
        let file = OpenOptions::new().create(true).truncate(false).write(true).open(path).map_err(io_err(path))?;
        match file.try_lock() {
            Ok(()) => Ok(ExportLock { _file: file, path: path.to_path_buf() }),
            Err(TryLockError::WouldBlock) => Err(ExportError::Locked(path.to_path_buf())),
            Err(TryLockError::Error(e)) => Err(io_err(path)(e)),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub fn lock_path(state_path: &Path) -> PathBuf {
    let name = state_path.file_name().and_then(|n| n.to_str()).unwrap_or(STATE_FILE);
    state_path.with_file_name(format!("{name}.lock"))
}

#[derive(Debug, Clone)]
pub struct ExportOptions {
    pub out_dir: PathBuf,
    pub state_path: PathBuf,
    /// `YYYY-MM-DD`; partition fallback for unparseable creation times.
    pub export_date: String,
    /// Restrict the run to these tables; `None` exports every exportable table.
    pub tables: Option<BTreeSet<TableName>>,
    pub collect_counters: bool,
}

impl ExportOptions {
    pub fn new(out_dir: impl Into<PathBuf>, export_date: impl Into<String>) -> Self {
        let out_dir = out_dir.into();
        ExportOptions {
            state_path: out_dir.join(STATE_FILE),
            out_dir,
            export_date: export_date.into(),
            tables: None,
            collect_counters: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TableOutcome {
    pub rows_selected: usize,
    /// Dump dates whose files were (re)written.
    pub written: Vec<String>,
    pub unchanged: usize,
    pub counters: Option<MergeCounters>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportReport {
    pub state: ExportState,
    pub tables: BTreeMap<TableName, TableOutcome>,
    pub manifest: Manifest,
}

impl ExportReport {
    pub fn failed(&self) -> Vec<TableName> {
        self.tables.iter().filter(|(_, o)| o.error.is_some()).map(|(t, _)| *t).collect()
    }

    pub fn partitions_written(&self) -> usize {
        self.tables.values().map(|o| o.written.len()).sum()
    }
}

fn export_table(
    out_dir: &Path,
    spec: &TableSpec,
    rows: &[Row],
    export_date: &str,
    counters: bool,
) -> Result<TableOutcome, ExportError> {
    let mut groups: BTreeMap<String, Vec<Row>> = BTreeMap::new();
    for r in rows {
        groups.entry(assign_partition(r, spec, export_date)).or_default().push(export_row(r, spec, export_date));
    }
    let columns = spec.columns();
    let mut outcome = TableOutcome { rows_selected: rows.len(), ..Default::default() };
    let mut total = MergeCounters::default();
    if !groups.is_empty() {
        let dir = out_dir.join(DATA_DIR).join(spec.table.as_str());
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    for (date, incoming) in groups {
        let path = partition_path(out_dir, spec.table, &date);
        let existing = if path.exists() { parquet_io::read_rows(&path, &columns)? } else { Vec::new() };
        let had_file = path.exists();
        let (merged, c) = merge_dedup_counted(existing.clone(), incoming, spec);
        total.add(c);
        if had_file && merged == existing {
            outcome.unchanged += 1;
            continue;
        }
        write_atomic(&path, |tmp| Ok(parquet_io::write_rows(tmp, spec.table.as_str(), &columns, &merged)?))?;
        outcome.written.push(date);
    }
    if counters {
        outcome.counters = Some(total);
    }
    Ok(outcome)
}

fn max_incremental(rows: &[Row], spec: &TableSpec) -> Option<Timestamp> {
    let idx = spec.table.schema().index_of(spec.incremental_column).expect("incremental column exists");
    rows.iter().filter_map(|r| r.get(idx).as_text().and_then(|s| parse_timestamp(s).ok())).max()
}

/// One export run. Tables are written in parallel; a table that fails keeps
/// its previous partitions and watermark while the others proceed.
pub fn run_export(store: &Store, opts: &ExportOptions) -> Result<ExportReport, ExportError> {
    if parse_date(&opts.export_date).is_none() {
        return Err(ExportError::ExportDate(opts.export_date.clone()));
    }
    let specs: Vec<&TableSpec> = match &opts.tables {
        Some(filter) => {
            let mut v = Vec::new();
            for &t in filter {
                let s = spec_for(t);
                if !s.exportable {
                    return Err(ExportError::Excluded(t));
                }
                v.push(s);
            }
            v
        }
        None => REGISTRY.iter().filter(|s| s.exportable).collect(),
    };
    fs::create_dir_all(&opts.out_dir).map_err(io_err(&opts.out_dir))?;
    if let Some(parent) = opts.state_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let _lock = ExportLock::acquire(&lock_path(&opts.state_path))?;
    let mut state = ExportState::load(&opts.state_path)?;

    let mut selected = Vec::with_capacity(specs.len());
    for s in &specs {
        selected.push((*s, select_incremental(store, s, &state)?));
    }

    let results: Vec<(TableName, Result<TableOutcome, ExportError>, Option<Timestamp>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = selected
            .iter()
            .map(|(spec, rows)| {
                scope.spawn(move || {
                    let r = export_table(&opts.out_dir, spec, rows, &opts.export_date, opts.collect_counters);
                    (spec.table, r, max_incremental(rows, spec))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("export worker panicked")).collect()
    });

    let mut tables = BTreeMap::new();
    for (table, result, max_seen) in results {
        match result {
            Ok(outcome) => {
                if let Some(ts) = max_seen {
                    state.advance(table, ts);
                }
                tables.insert(table, outcome);
            }
            Err(e) => {
                tracing::error!(%table, error = %e, "table export failed");
                tables.insert(table, TableOutcome { error: Some(e.to_string()), ..Default::default() });
            }
        }
    }
    state.save(&opts.state_path)?;

    let mut counts = BTreeMap::new();
    for s in REGISTRY.iter().filter(|s| s.exportable) {
        counts.insert(s.table, list_partitions(&opts.out_dir, s.table)?.len());
    }
    let manifest = build_manifest(&REGISTRY, &state, &counts);
    manifest.save(&opts.out_dir.join(MANIFEST_FILE))?;
    Ok(ExportReport { state, tables, manifest })
}
