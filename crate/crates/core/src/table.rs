//! Table schemas and the dynamically typed row representation shared by the
//! store, the exporter and the columnar reader/writer.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    parse_timestamp, AgentRecord, CommentRecord, FollowEdge, PostRecord, SnapshotRecord, SubmoltRecord, Timestamp,
    WordFrequencyRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableName {
    Agents,
    Posts,
    Comments,
    Submolts,
    Snapshots,
    WordFrequency,
    Follows,
}

impl TableName {
    pub const ALL: [TableName; 7] = [
        TableName::Agents,
        TableName::Posts,
        TableName::Comments,
        TableName::Submolts,
        TableName::Snapshots,
        TableName::WordFrequency,
        TableName::Follows,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TableName::Agents => "agents",
            TableName::Posts => "posts",
            TableName::Comments => "comments",
            TableName::Submolts => "submolts",
            TableName::Snapshots => "snapshots",
            TableName::WordFrequency => "word_frequency",
            TableName::Follows => "follows",
        }
    }

    pub fn schema(&self) -> &'static TableSchema {
        match self {
            TableName::Agents => &AGENTS,
            TableName::Posts => &POSTS,
            TableName::Comments => &COMMENTS,
            TableName::Submolts => &SUBMOLTS,
            TableName::Snapshots => &SNAPSHOTS,
            TableName::WordFrequency => &WORD_FREQUENCY,
            TableName::Follows => &FOLLOWS,
        }
    }
}

impl fmt::Display for TableName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TableName {
    type Err = RowError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TableName::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| RowError::UnknownTable(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Text,
    Integer,
    Real,
    Bool,
    /// ISO-8601 text; the store keeps a numeric shadow for range scans.
    Timestamp,
}

/// How an upsert combines an existing value with the incoming one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeRule {
    Replace,
    /// Never changes once written.
    Keep,
    /// Earliest instant wins.
    Earliest,
    /// Latest instant wins.
    Latest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Column {
    pub name: &'static str,
    pub ty: ColumnType,
    pub nullable: bool,
    pub merge: MergeRule,
}

const fn col(name: &'static str, ty: ColumnType) -> Column {
    Column { name, ty, nullable: false, merge: MergeRule::Replace }
}

const fn opt(name: &'static str, ty: ColumnType) -> Column {
    Column { name, ty, nullable: true, merge: MergeRule::Replace }
}

const fn merged(name: &'static str, ty: ColumnType, merge: MergeRule) -> Column {
    Column { name, ty, nullable: false, merge }
}

use ColumnType::{Bool, Integer, Real, Text, Timestamp as Ts};

#[derive(Debug)]
pub struct TableSchema {
    pub table: TableName,
    pub columns: &'static [Column],
    pub primary_key: &'static [&'static str],
}

impl TableSchema {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_names(&self) -> Vec<&'static str> {
        self.columns.iter().map(|c| c.name).collect()
    }

    pub fn key_indices(&self) -> Vec<usize> {
        self.primary_key.iter().map(|k| self.index_of(k).expect("primary key column exists")).collect()
    }
}

pub static AGENTS: TableSchema = TableSchema {
    table: TableName::Agents,
    columns: &[
        col("id", Text),
        col("name", Text),
        opt("description", Text),
        col("karma", Integer),
        col("follower_count", Integer),
        col("following_count", Integer),
        col("is_claimed", Bool),
        opt("owner_x_handle", Text),
        merged("first_seen_at", Ts, MergeRule::Earliest),
        merged("last_seen_at", Ts, MergeRule::Latest),
        opt("created_at", Ts),
        opt("avatar_url", Text),
    ],
    primary_key: &["id"],
};

pub static POSTS: TableSchema = TableSchema {
    table: TableName::Posts,
    columns: &[
        col("id", Text),
        col("agent_id", Text),
        col("agent_name", Text),
        col("submolt", Text),
        col("title", Text),
        col("content", Text),
        opt("url", Text),
        col("score", Integer),
        col("comment_count", Integer),
        merged("created_at", Ts, MergeRule::Keep),
        merged("fetched_at", Ts, MergeRule::Latest),
        col("is_pinned", Bool),
    ],
    primary_key: &["id"],
};

pub static COMMENTS: TableSchema = TableSchema {
    table: TableName::Comments,
    columns: &[
        col("id", Text),
        col("post_id", Text),
        col("agent_id", Text),
        col("agent_name", Text),
        opt("parent_id", Text),
        col("content", Text),
        col("score", Integer),
        merged("created_at", Ts, MergeRule::Keep),
        merged("fetched_at", Ts, MergeRule::Latest),
    ],
    primary_key: &["id"],
};

pub static SUBMOLTS: TableSchema = TableSchema {
    table: TableName::Submolts,
    columns: &[
        col("name", Text),
        col("display_name", Text),
        opt("description", Text),
        col("subscriber_count", Integer),
        col("post_count", Integer),
        opt("created_at", Ts),
        merged("first_seen_at", Ts, MergeRule::Earliest),
        opt("avatar_url", Text),
        opt("banner_url", Text),
    ],
    primary_key: &["name"],
};

pub static SNAPSHOTS: TableSchema = TableSchema {
    table: TableName::Snapshots,
    columns: &[
        col("id", Text),
        col("timestamp", Ts),
        col("total_agents", Integer),
        col("total_posts", Integer),
        col("total_comments", Integer),
        col("active_agents_24h", Integer),
        opt("avg_sentiment", Real),
        col("top_words", Text),
    ],
    primary_key: &["id"],
};

pub static WORD_FREQUENCY: TableSchema = TableSchema {
    table: TableName::WordFrequency,
    columns: &[col("word", Text), col("hour", Ts), col("count", Integer)],
    primary_key: &["word", "hour"],
};

pub static FOLLOWS: TableSchema = TableSchema {
    table: TableName::Follows,
    columns: &[col("follower_id", Text), col("following_id", Text), merged("first_seen_at", Ts, MergeRule::Earliest)],
    primary_key: &["follower_id", "following_id"],
};

/// Columns appended to posts and comments at export time.
pub static DERIVED_COLUMNS: [Column; 4] =
    [col("dump_date", Text), opt("date", Text), opt("hour", Integer), col("content_length", Integer)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Bool(bool),
    Integer(i64),
    Real(f64),
    Text(String),
}

impl Value {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Integer(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Real(v) => Some(*v),
            Value::Integer(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    /// Parsed instant for timestamp-valued text.
    pub fn as_timestamp(&self) -> Option<Timestamp> {
        self.as_text().and_then(|s| parse_timestamp(s).ok())
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Bool(_) => 1,
            Value::Integer(_) => 2,
            Value::Real(_) => 3,
            Value::Text(_) => 4,
        }
    }

    /// Total order used for primary-key sorting.
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Integer(a), Value::Integer(b)) => a.cmp(b),
            (Value::Real(a), Value::Real(b)) => a.total_cmp(b),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Null => "null",
            Value::Bool(_) => "bool",
            Value::Integer(_) => "integer",
            Value::Real(_) => "real",
            Value::Text(_) => "text",
        }
    }

    pub fn matches(&self, ty: ColumnType) -> bool {
        matches!(
            (self, ty),
            (Value::Text(_), Text | Ts)
                | (Value::Integer(_), Integer)
                | (Value::Real(_), Real)
                | (Value::Integer(_), Real)
                | (Value::Bool(_), Bool)
        )
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

impl From<Option<String>> for Value {
    fn from(s: Option<String>) -> Self {
        s.map_or(Value::Null, Value::Text)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Integer(v)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Integer(i64::try_from(v).unwrap_or(i64::MAX))
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<Option<f64>> for Value {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Value::Null, Value::Real)
    }
}

impl From<Timestamp> for Value {
    fn from(v: Timestamp) -> Self {
        Value::Text(v.to_string())
    }
}

/// One row, positionally aligned with a column list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row(pub Vec<Value>);

impl Row {
    pub fn get(&self, idx: usize) -> &Value {
        &self.0[idx]
    }

    pub fn key(&self, key_indices: &[usize]) -> Vec<Value> {
        key_indices.iter().map(|&i| self.0[i].clone()).collect()
    }
}

pub fn cmp_keys(a: &[Value], b: &[Value]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RowError {
    #[error("unknown table {0:?}")]
    UnknownTable(String),
    #[error("{table}: {}", .problems.join("; "))]
    Schema { table: String, problems: Vec<String> },
}

/// Checks arity, types and nullability of `row` against `columns`.
pub fn validate_row(table: &str, columns: &[Column], row: &Row) -> Result<(), RowError> {
    let mut problems = Vec::new();
    if row.0.len() != columns.len() {
        problems.push(format!("expected {} columns, got {}", columns.len(), row.0.len()));
    } else {
        for (c, v) in columns.iter().zip(&row.0) {
            if v.is_null() {
                if !c.nullable {
                    problems.push(format!("{} must not be null", c.name));
                }
            } else if !v.matches(c.ty) {
                problems.push(format!("{}: expected {:?}, got {}", c.name, c.ty, v.type_name()));
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(RowError::Schema { table: table.to_string(), problems })
    }
}

/// Named access into a row.
pub struct RowView<'a> {
    columns: &'a [Column],
    row: &'a Row,
    table: &'a str,
}

impl<'a> RowView<'a> {
    pub fn new(table: &'a str, columns: &'a [Column], row: &'a Row) -> Self {
        RowView { columns, row, table }
    }

    fn err(&self, msg: String) -> RowError {
        RowError::Schema { table: self.table.to_string(), problems: vec![msg] }
    }

    pub fn value(&self, name: &str) -> Result<&'a Value, RowError> {
        let idx = self
            .columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| self.err(format!("missing column {name}")))?;
        Ok(&self.row.0[idx])
    }

    pub fn text(&self, name: &str) -> Result<String, RowError> {
        self.opt_text(name)?.ok_or_else(|| self.err(format!("{name} is null")))
    }

    pub fn opt_text(&self, name: &str) -> Result<Option<String>, RowError> {
        match self.value(name)? {
            Value::Null => Ok(None),
            Value::Text(s) => Ok(Some(s.clone())),
            other => Err(self.err(format!("{name}: expected text, got {}", other.type_name()))),
        }
    }

    pub fn int(&self, name: &str) -> Result<i64, RowError> {
        match self.value(name)? {
            Value::Integer(v) => Ok(*v),
            other => Err(self.err(format!("{name}: expected integer, got {}", other.type_name()))),
        }
    }

    pub fn count(&self, name: &str) -> Result<u64, RowError> {
        let v = self.int(name)?;
        u64::try_from(v).map_err(|_| self.err(format!("{name}: negative count {v}")))
    }

    pub fn opt_real(&self, name: &str) -> Result<Option<f64>, RowError> {
        match self.value(name)? {
            Value::Null => Ok(None),
            v => v.as_f64().map(Some).ok_or_else(|| self.err(format!("{name}: expected real, got {}", v.type_name()))),
        }
    }

    pub fn bool(&self, name: &str) -> Result<bool, RowError> {
        match self.value(name)? {
            Value::Bool(v) => Ok(*v),
            Value::Integer(v) => Ok(*v != 0),
            other => Err(self.err(format!("{name}: expected bool, got {}", other.type_name()))),
        }
    }

    pub fn timestamp(&self, name: &str) -> Result<Timestamp, RowError> {
        let text = self.text(name)?;
        parse_timestamp(&text).map_err(|e| self.err(format!("{name}: {e}")))
    }
}

/// Conversion between typed records and positional rows.
pub trait Record: Sized {
    const TABLE: TableName;

    fn to_row(&self) -> Row;

    /// Builds the record from any column list containing this table's columns.
    fn from_view(view: &RowView<'_>) -> Result<Self, RowError>;

    fn from_row(columns: &[Column], row: &Row) -> Result<Self, RowError> {
        Self::from_view(&RowView::new(Self::TABLE.as_str(), columns, row))
    }
}

impl Record for AgentRecord {
    const TABLE: TableName = TableName::Agents;

    fn to_row(&self) -> Row {
        Row(vec![
            self.id.as_str().into(),
            self.name.as_str().into(),
            self.description.clone().into(),
            self.karma.into(),
            self.follower_count.into(),
            self.following_count.into(),
            self.is_claimed.into(),
            self.owner_x_handle.clone().into(),
            self.first_seen_at.into(),
            self.last_seen_at.into(),
            self.created_at.clone().into(),
            self.avatar_url.clone().into(),
        ])
    }

    fn from_view(v: &RowView<'_>) -> Result<Self, RowError> {
        Ok(AgentRecord {
            id: v.text("id")?,
            name: v.text("name")?,
            description: v.opt_text("description")?,
            karma: v.int("karma")?,
            follower_count: v.count("follower_count")?,
            following_count: v.count("following_count")?,
            is_claimed: v.bool("is_claimed")?,
            owner_x_handle: v.opt_text("owner_x_handle")?,
            first_seen_at: v.timestamp("first_seen_at")?,
            last_seen_at: v.timestamp("last_seen_at")?,
            created_at: v.opt_text("created_at")?,
            avatar_url: v.opt_text("avatar_url")?,
        })
    }
}

impl Record for PostRecord {
    const TABLE: TableName = TableName::Posts;

    fn to_row(&self) -> Row {
        Row(vec![
            self.id.as_str().into(),
            self.agent_id.as_str().into(),
            self.agent_name.as_str().into(),
            self.submolt.as_str().into(),
            self.title.as_str().into(),
            self.content.as_str().into(),
            self.url.clone().into(),
            self.score.into(),
            self.comment_count.into(),
            self.created_at.as_str().into(),
            self.fetched_at.into(),
            self.is_pinned.into(),
        ])
    }

    fn from_view(v: &RowView<'_>) -> Result<Self, RowError> {
        Ok(PostRecord {
            id: v.text("id")?,
            agent_id: v.text("agent_id")?,
            agent_name: v.text("agent_name")?,
            submolt: v.text("submolt")?,
            title: v.text("title")?,
            content: v.text("content")?,
            url: v.opt_text("url")?,
            score: v.int("score")?,
            comment_count: v.count("comment_count")?,
            created_at: v.text("created_at")?,
            fetched_at: v.timestamp("fetched_at")?,
            is_pinned: v.bool("is_pinned")?,
        })
    }
}

impl Record for CommentRecord {
    const TABLE: TableName = TableName::Comments;

    fn to_row(&self) -> Row {
        Row(vec![
            self.id.as_str().into(),
            self.post_id.as_str().into(),
            self.agent_id.as_str().into(),
            self.agent_name.as_str().into(),
            self.parent_id.clone().into(),
            self.content.as_str().into(),
            self.score.into(),
            self.created_at.as_str().into(),
            self.fetched_at.into(),
        ])
    }

    fn from_view(v: &RowView<'_>) -> Result<Self, RowError> {
        Ok(CommentRecord {
            id: v.text("id")?,
            post_id: v.text("post_id")?,
            agent_id: v.text("agent_id")?,
            agent_name: v.text("agent_name")?,
            parent_id: v.opt_text("parent_id")?,
            content: v.text("content")?,
            score: v.int("score")?,
            created_at: v.text("created_at")?,
            fetched_at: v.timestamp("fetched_at")?,
        })
    }
}

impl Record for SubmoltRecord {
    const TABLE: TableName = TableName::Submolts;

    fn to_row(&self) -> Row {
        Row(vec![
            self.name.as_str().into(),
            self.display_name.as_str().into(),
            self.description.clone().into(),
            self.subscriber_count.into(),
            self.post_count.into(),
            self.created_at.clone().into(),
            self.first_seen_at.into(),
            self.avatar_url.clone().into(),
            self.banner_url.clone().into(),
        ])
    }

    fn from_view(v: &RowView<'_>) -> Result<Self, RowError> {
        Ok(SubmoltRecord {
            name: v.text("name")?,
            display_name: v.text("display_name")?,
            description: v.opt_text("description")?,
            subscriber_count: v.count("subscriber_count")?,
            post_count: v.count("post_count")?,
            created_at: v.opt_text("created_at")?,
            first_seen_at: v.timestamp("first_seen_at")?,
            avatar_url: v.opt_text("avatar_url")?,
            banner_url: v.opt_text("banner_url")?,
        })
    }
}

impl Record for SnapshotRecord {
    const TABLE: TableName = TableName::Snapshots;

    fn to_row(&self) -> Row {
        Row(vec![
            self.id.as_str().into(),
            self.timestamp.into(),
            self.total_agents.into(),
            self.total_posts.into(),
            self.total_comments.into(),
            self.active_agents_24h.into(),
            self.avg_sentiment.into(),
            self.top_words.as_str().into(),
        ])
    }

    fn from_view(v: &RowView<'_>) -> Result<Self, RowError> {
        Ok(SnapshotRecord {
            id: v.text("id")?,
            timestamp: v.timestamp("timestamp")?,
            total_agents: v.count("total_agents")?,
            total_posts: v.count("total_posts")?,
            total_comments: v.count("total_comments")?,
            active_agents_24h: v.count("active_agents_24h")?,
            avg_sentiment: v.opt_real("avg_sentiment")?,
            top_words: v.text("top_words")?,
        })
    }
}

impl Record for WordFrequencyRecord {
    const TABLE: TableName = TableName::WordFrequency;

    fn to_row(&self) -> Row {
        Row(vec![self.word.as_str().into(), self.hour.into(), self.count.into()])
    }

    fn from_view(v: &RowView<'_>) -> Result<Self, RowError> {
        Ok(WordFrequencyRecord { word: v.text("word")?, hour: v.timestamp("hour")?, count: v.count("count")? })
    }
}

impl Record for FollowEdge {
    const TABLE: TableName = TableName::Follows;

    fn to_row(&self) -> Row {
        Row(vec![self.follower_id.as_str().into(), self.following_id.as_str().into(), self.first_seen_at.into()])
    }

    fn from_view(v: &RowView<'_>) -> Result<Self, RowError> {
        Ok(FollowEdge {
            follower_id: v.text("follower_id")?,
            following_id: v.text("following_id")?,
            first_seen_at: v.timestamp("first_seen_at")?,
        })
    }
}
