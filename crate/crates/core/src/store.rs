//! Single-file relational store backed by SQLite.
//!
//! Every timestamp column is stored twice: the verbatim ISO-8601 text that
//! the archive publishes, and a hidden `<column>__us` integer (microseconds
//! since the epoch, `NULL` when unparseable) that range scans use so that
//! comparisons are by instant rather than by string.

use std::path::{Path, PathBuf};

use rusqlite::types::{ToSqlOutput, Value as SqlValue, ValueRef};
use rusqlite::{params_from_iter, Connection, OpenFlags, OptionalExtension};
use thiserror::Error;

use crate::model::{PostRecord, Timestamp};
use crate::table::{validate_row, Column, ColumnType, MergeRule, Record, Row, RowError, TableName, TableSchema, Value};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("sqlite: {0}")]
    Sqlite(#[from] rusqlite::Error),
    #[error(transparent)]
    Row(#[from] RowError),
    #[error("{table} has no timestamp column {column:?}")]
    UnknownColumn { table: TableName, column: String },
    #[error("store opened read-only")]
    ReadOnly,
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpenMode {
    ReadOnly,
    ReadWrite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsertOutcome {
    Inserted,
    Replaced,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpsertCounts {
    pub inserted: usize,
    pub replaced: usize,
}

impl UpsertCounts {
    fn add(&mut self, outcome: UpsertOutcome) {
        match outcome {
            UpsertOutcome::Inserted => self.inserted += 1,
            UpsertOutcome::Replaced => self.replaced += 1,
        }
    }
}

pub struct Store {
    conn: Connection,
    mode: OpenMode,
    path: Option<PathBuf>,
}

fn shadow(name: &str) -> String {
    format!("{name}__us")
}

fn quoted(name: &str) -> String {
    format!("\"{name}\"")
}

fn sql_type(ty: ColumnType) -> &'static str {
    match ty {
        ColumnType::Text | ColumnType::Timestamp => "TEXT",
        ColumnType::Integer | ColumnType::Bool => "INTEGER",
        ColumnType::Real => "REAL",
    }
}

/// Physical column list: declared columns followed by timestamp shadows.
fn physical_columns(schema: &TableSchema) -> Vec<String> {
    let mut cols: Vec<String> = schema.columns.iter().map(|c| c.name.to_string()).collect();
    cols.extend(schema.columns.iter().filter(|c| c.ty == ColumnType::Timestamp).map(|c| shadow(c.name)));
    cols
}

fn create_table_sql(schema: &TableSchema) -> String {
    let mut defs: Vec<String> = schema
        .columns
        .iter()
        .map(|c| {
            let null = if c.nullable { "" } else { " NOT NULL" };
            format!("{} {}{}", quoted(c.name), sql_type(c.ty), null)
        })
        .collect();
    let mut indexes = Vec::new();
    for c in schema.columns.iter().filter(|c| c.ty == ColumnType::Timestamp) {
        defs.push(format!("{} INTEGER", quoted(&shadow(c.name))));
        indexes.push(format!(
            "CREATE INDEX IF NOT EXISTS \"idx_{t}_{c}\" ON \"{t}\"({s});",
            t = schema.table,
            c = c.name,
            s = quoted(&shadow(c.name))
        ));
    }
    let pk: Vec<String> = schema.primary_key.iter().map(|k| quoted(k)).collect();
    defs.push(format!("PRIMARY KEY ({})", pk.join(", ")));
    format!("CREATE TABLE IF NOT EXISTS \"{}\" (\n  {}\n);\n{}", schema.table, defs.join(",\n  "), indexes.join("\n"))
}

fn to_sql(v: &Value) -> SqlValue {
    match v {
        Value::Null => SqlValue::Null,
        Value::Bool(b) => SqlValue::Integer(i64::from(*b)),
        Value::Integer(i) => SqlValue::Integer(*i),
        Value::Real(r) => SqlValue::Real(*r),
        Value::Text(s) => SqlValue::Text(s.clone()),
    }
}

fn from_sql(c: &Column, v: ValueRef<'_>) -> Value {
    match (v, c.ty) {
        (ValueRef::Null, _) => Value::Null,
        (ValueRef::Integer(i), ColumnType::Bool) => Value::Bool(i != 0),
        (ValueRef::Integer(i), ColumnType::Real) => Value::Real(i as f64),
        (ValueRef::Integer(i), _) => Value::Integer(i),
        (ValueRef::Real(r), _) => Value::Real(r),
        (ValueRef::Text(t), _) | (ValueRef::Blob(t), _) => Value::Text(String::from_utf8_lossy(t).into_owned()),
    }
}

fn shadow_value(v: &Value) -> SqlValue {
    match v.as_timestamp() {
        Some(ts) => SqlValue::Integer(ts.micros()),
        None => SqlValue::Null,
    }
}

/// Combines an existing row with an incoming one per the column merge rules.
pub fn merge_rows(columns: &[Column], existing: &Row, incoming: &Row) -> Row {
    let values = columns
        .iter()
        .zip(existing.0.iter().zip(&incoming.0))
        .map(|(c, (old, new))| match c.merge {
            MergeRule::Replace => new.clone(),
            MergeRule::Keep => old.clone(),
            MergeRule::Earliest | MergeRule::Latest => match (old.as_timestamp(), new.as_timestamp()) {
                (Some(a), Some(b)) => {
                    let take_new = if c.merge == MergeRule::Earliest { b < a } else { b > a };
                    if take_new {
                        new.clone()
                    } else {
                        old.clone()
                    }
                }
                (None, Some(_)) => new.clone(),
                _ => old.clone(),
            },
        })
        .collect();
    Row(values)
}

impl Store {
    pub fn open(path: impl AsRef<Path>, mode: OpenMode) -> Result<Self> {
        let path = path.as_ref();
        let conn = match mode {
            OpenMode::ReadOnly => {
                Connection::open_with_flags(path, OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX)?
            }
            OpenMode::ReadWrite => {
                let conn = Connection::open(path)?;
                conn.pragma_update(None, "journal_mode", "WAL")?;
                conn.pragma_update(None, "synchronous", "NORMAL")?;
                conn
            }
        };
        conn.busy_timeout(std::time::Duration::from_secs(30))?;
        let store = Store { conn, mode, path: Some(path.to_path_buf()) };
        if mode == OpenMode::ReadWrite {
            store.init_schema()?;
        }
        Ok(store)
    }

    pub fn open_in_memory() -> Result<Self> {
        let store = Store { conn: Connection::open_in_memory()?, mode: OpenMode::ReadWrite, path: None };
        store.init_schema()?;
        Ok(store)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn mode(&self) -> OpenMode {
        self.mode
    }

    fn init_schema(&self) -> Result<()> {
        let ddl: Vec<String> = TableName::ALL.iter().map(|t| create_table_sql(t.schema())).collect();
        self.conn.execute_batch(&ddl.join("\n"))?;
        Ok(())
    }

    fn select_sql(schema: &TableSchema) -> String {
        let cols: Vec<String> = schema.columns.iter().map(|c| quoted(c.name)).collect();
        format!("SELECT {} FROM \"{}\"", cols.join(", "), schema.table)
    }

    fn order_by_key(schema: &TableSchema) -> String {
        let pk: Vec<String> = schema.primary_key.iter().map(|k| quoted(k)).collect();
        pk.join(", ")
    }

    fn read_rows(&self, schema: &TableSchema, sql: &str, params: &[SqlValue]) -> Result<Vec<Row>> {
        let mut stmt = self.conn.prepare_cached(sql)?;
        let mut rows = stmt.query(params_from_iter(params.iter()))?;
        let mut out = Vec::new();
        while let Some(r) = rows.next()? {
            let mut values = Vec::with_capacity(schema.columns.len());
            for (i, c) in schema.columns.iter().enumerate() {
                values.push(from_sql(c, r.get_ref(i)?));
            }
            out.push(Row(values));
        }
        Ok(out)
    }

    fn find_by_key(&self, schema: &TableSchema, key: &[Value]) -> Result<Option<Row>> {
        let cond: Vec<String> = schema.primary_key.iter().map(|k| format!("{} = ?", quoted(k))).collect();
        let sql = format!("{} WHERE {}", Self::select_sql(schema), cond.join(" AND "));
        let params: Vec<SqlValue> = key.iter().map(to_sql).collect();
        Ok(self.read_rows(schema, &sql, &params)?.into_iter().next())
    }

    fn upsert_in(&self, table: TableName, row: &Row) -> Result<UpsertOutcome> {
        let schema = table.schema();
        validate_row(table.as_str(), schema.columns, row)?;
        let key = row.key(&schema.key_indices());
        let existing = self.find_by_key(schema, &key)?;
        let (final_row, outcome) = match existing {
            Some(old) => (merge_rows(schema.columns, &old, row), UpsertOutcome::Replaced),
            None => (row.clone(), UpsertOutcome::Inserted),
        };
        let cols = physical_columns(schema);
        let placeholders = vec!["?"; cols.len()].join(", ");
        let sql = format!(
            "INSERT OR REPLACE INTO \"{}\" ({}) VALUES ({})",
            schema.table,
            cols.iter().map(|c| quoted(c)).collect::<Vec<_>>().join(", "),
            placeholders
        );
        let mut params: Vec<SqlValue> = final_row.0.iter().map(to_sql).collect();
        for (c, v) in schema.columns.iter().zip(&final_row.0) {
            if c.ty == ColumnType::Timestamp {
                params.push(shadow_value(v));
            }
        }
        self.conn.prepare_cached(&sql)?.execute(params_from_iter(params.iter()))?;
        Ok(outcome)
    }

    /// Inserts a new row or merges into the existing one with the same key.
    pub fn upsert_row(&mut self, table: TableName, row: &Row) -> Result<UpsertOutcome> {
        if self.mode == OpenMode::ReadOnly {
            return Err(StoreError::ReadOnly);
        }
        let tx = self.conn.unchecked_transaction()?;
        let outcome = self.upsert_in(table, row)?;
        tx.commit()?;
        Ok(outcome)
    }

    /// Upserts a batch inside a single transaction; all or nothing.
    pub fn upsert_rows<'a>(
        &mut self,
        table: TableName,
        rows: impl IntoIterator<Item = &'a Row>,
    ) -> Result<UpsertCounts> {
        if self.mode == OpenMode::ReadOnly {
            return Err(StoreError::ReadOnly);
        }
        let tx = self.conn.unchecked_transaction()?;
        let mut counts = UpsertCounts::default();
        for row in rows {
            counts.add(self.upsert_in(table, row)?);
        }
        tx.commit()?;
        Ok(counts)
    }

    pub fn upsert<R: Record>(&mut self, record: &R) -> Result<UpsertOutcome> {
        self.upsert_row(R::TABLE, &record.to_row())
    }

    pub fn upsert_all<R: Record>(&mut self, records: &[R]) -> Result<UpsertCounts> {
        let rows: Vec<Row> = records.iter().map(Record::to_row).collect();
        self.upsert_rows(R::TABLE, rows.iter())
    }

    fn timestamp_column(table: TableName, column: &str) -> Result<&'static Column> {
        table
            .schema()
            .column(column)
            .filter(|c| c.ty == ColumnType::Timestamp)
            .ok_or_else(|| StoreError::UnknownColumn { table, column: column.to_string() })
    }

    /// Rows whose `column` is strictly later than `threshold`, ascending.
    ///
    /// Rows whose value in `column` does not parse are never returned.
    pub fn query_rows_since(&self, table: TableName, column: &str, threshold: &Timestamp) -> Result<Vec<Row>> {
        let c = Self::timestamp_column(table, column)?;
        let schema = table.schema();
        let s = quoted(&shadow(c.name));
        let sql = format!("{} WHERE {s} > ? ORDER BY {s}, {}", Self::select_sql(schema), Self::order_by_key(schema));
        self.read_rows(schema, &sql, &[SqlValue::Integer(threshold.micros())])
    }

    /// Every row, ordered by primary key.
    pub fn all_rows(&self, table: TableName) -> Result<Vec<Row>> {
        let schema = table.schema();
        let sql = format!("{} ORDER BY {}", Self::select_sql(schema), Self::order_by_key(schema));
        self.read_rows(schema, &sql, &[])
    }

    pub fn get_row(&self, table: TableName, key: &[Value]) -> Result<Option<Row>> {
        self.find_by_key(table.schema(), key)
    }

    pub fn load<R: Record>(&self) -> Result<Vec<R>> {
        let schema = R::TABLE.schema();
        self.all_rows(R::TABLE)?.iter().map(|r| R::from_row(schema.columns, r).map_err(StoreError::from)).collect()
    }

    pub fn get<R: Record>(&self, key: &[Value]) -> Result<Option<R>> {
        let schema = R::TABLE.schema();
        match self.get_row(R::TABLE, key)? {
            Some(r) => Ok(Some(R::from_row(schema.columns, &r)?)),
            None => Ok(None),
        }
    }

    pub fn count(&self, table: TableName) -> Result<u64> {
        let n: i64 = self.conn.query_row(&format!("SELECT COUNT(*) FROM \"{table}\""), [], |r| r.get(0))?;
        Ok(n as u64)
    }

    /// Posts created in the closed interval `[from, to]`.
    pub fn posts_created_between(&self, from: &Timestamp, to: &Timestamp) -> Result<Vec<PostRecord>> {
        let schema = TableName::Posts.schema();
        let sql = format!(
            "{} WHERE \"created_at__us\" BETWEEN ? AND ? ORDER BY \"created_at__us\", \"id\"",
            Self::select_sql(schema)
        );
        self.read_rows(schema, &sql, &[SqlValue::Integer(from.micros()), SqlValue::Integer(to.micros())])?
            .iter()
            .map(|r| PostRecord::from_row(schema.columns, r).map_err(StoreError::from))
            .collect()
    }

    /// Agent ids seen as authors or commenters, plus stored profiles; sorted.
    pub fn known_agent_ids(&self) -> Result<Vec<String>> {
        let mut stmt = self.conn.prepare_cached(
            "SELECT agent_id FROM posts UNION SELECT agent_id FROM comments \
             UNION SELECT id FROM agents ORDER BY 1",
        )?;
        let ids = stmt.query_map([], |r| r.get::<_, String>(0))?.collect::<rusqlite::Result<Vec<_>>>()?;
        Ok(ids)
    }

    /// Latest creation instant among stored rows of a posts/comments table.
    pub fn max_created(&self, table: TableName) -> Result<Option<Timestamp>> {
        Self::timestamp_column(table, "created_at")?;
        let v: Option<i64> = self
            .conn
            .query_row(&format!("SELECT MAX(\"created_at__us\") FROM \"{table}\""), [], |r| r.get(0))
            .optional()?
            .flatten();
        Ok(v.and_then(Timestamp::from_micros))
    }
}

impl rusqlite::ToSql for Value {
    fn to_sql(&self) -> rusqlite::Result<ToSqlOutput<'_>> {
        Ok(ToSqlOutput::Owned(to_sql(self)))
    }
}
