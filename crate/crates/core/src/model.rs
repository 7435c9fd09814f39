//! Domain records shared by every stage of the pipeline.
//!
//! Platform-provided creation timestamps are kept as the raw text the API
//! returned, because the archive stores them verbatim and the exporter has to
//! fall back gracefully when one does not parse. Timestamps generated by the
//! observatory itself (`fetched_at`, `first_seen_at`, ...) are always valid and
//! use [`Timestamp`].

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, Timelike, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimestampError {
    #[error("empty timestamp")]
    Empty,
    #[error("not an ISO-8601 timestamp with offset: {0:?}")]
    Invalid(String),
}

/// An instant with an explicit UTC offset.
///
/// Equality and ordering compare the instant, so `13:00+00:00` equals
/// `15:00+02:00`. The original offset is kept for serialization.
#[derive(Clone, Copy)]
pub struct Timestamp(DateTime<FixedOffset>);

impl Timestamp {
    pub fn epoch() -> Self {
        Self::from_utc(DateTime::UNIX_EPOCH)
    }

    pub fn from_utc(dt: DateTime<Utc>) -> Self {
        Timestamp(dt.fixed_offset())
    }

    pub fn from_micros(micros: i64) -> Option<Self> {
        DateTime::from_timestamp_micros(micros).map(Self::from_utc)
    }

    pub fn now() -> Self {
        Self::from_utc(Utc::now())
    }

    pub fn utc(&self) -> DateTime<Utc> {
        self.0.with_timezone(&Utc)
    }

    pub fn inner(&self) -> DateTime<FixedOffset> {
        self.0
    }

    pub fn micros(&self) -> i64 {
        self.0.timestamp_micros()
    }

    pub fn utc_date(&self) -> NaiveDate {
        self.utc().date_naive()
    }

    pub fn utc_hour(&self) -> u8 {
        self.utc().hour() as u8
    }

    /// Truncates to the start of the UTC hour, returned in UTC.
    pub fn truncate_to_hour(&self) -> Self {
        let utc = self.utc();
        let secs = utc.timestamp();
        let floored = secs - secs.rem_euclid(3600);
        Self::from_utc(DateTime::from_timestamp(floored, 0).expect("in range"))
    }

    pub fn checked_add(&self, d: Duration) -> Option<Self> {
        self.0.checked_add_signed(d).map(Timestamp)
    }

    pub fn checked_sub(&self, d: Duration) -> Option<Self> {
        self.0.checked_sub_signed(d).map(Timestamp)
    }

    pub fn add_secs(&self, secs: i64) -> Self {
        self.checked_add(Duration::seconds(secs)).expect("timestamp overflow")
    }

    pub fn duration_since(&self, earlier: &Timestamp) -> Duration {
        self.0.signed_duration_since(earlier.0)
    }
}

/// Parses an ISO-8601 timestamp that carries an explicit offset.
///
/// Offset-less forms such as `2026-02-09T13:00:00` are rejected.
pub fn parse_timestamp(text: &str) -> Result<Timestamp, TimestampError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(TimestampError::Empty);
    }
    DateTime::parse_from_rfc3339(trimmed).map(Timestamp).map_err(|_| TimestampError::Invalid(text.to_string()))
}

impl FromStr for Timestamp {
    type Err = TimestampError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_timestamp(s)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.to_rfc3339())
    }
}

impl fmt::Debug for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Timestamp({})", self.0.to_rfc3339())
    }
}

impl PartialEq for Timestamp {
    fn eq(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

impl Eq for Timestamp {}

impl PartialOrd for Timestamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timestamp {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.cmp(&other.0)
    }
}

impl std::hash::Hash for Timestamp {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.micros().hash(state);
        self.0.timestamp_subsec_nanos().hash(state);
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_timestamp(&text).map_err(serde::de::Error::custom)
    }
}

/// Calendar date in `YYYY-MM-DD` form.
pub fn format_date(date: NaiveDate) -> String {
    date.format("%Y-%m-%d").to_string()
}

pub fn parse_date(text: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(text, "%Y-%m-%d").ok()
}

/// Number of Unicode scalar values in `text`.
pub fn content_length(text: &str) -> u64 {
    text.chars().count() as u64
}

/// Columns the export adds to posts and comments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalFields {
    pub dump_date: String,
    pub date: Option<String>,
    pub hour: Option<u8>,
    pub content_length: u64,
}

/// Computes `dump_date`, `date`, `hour` and `content_length`.
///
/// When `created_at_text` does not parse, `dump_date` falls back to
/// `export_date` and `date`/`hour` are absent.
pub fn derive_local_fields(created_at_text: &str, content: &str, export_date: &str) -> LocalFields {
    let content_length = content_length(content);
    match parse_timestamp(created_at_text) {
        Ok(ts) => {
            let date = format_date(ts.utc_date());
            LocalFields { dump_date: date.clone(), date: Some(date), hour: Some(ts.utc_hour()), content_length }
        }
        Err(_) => LocalFields { dump_date: export_date.to_string(), date: None, hour: None, content_length },
    }
}

/// Maximum post body length enforced by the platform.
pub const MAX_POST_LENGTH: u64 = 40_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: String,
    pub name: String,
    pub description: Option<String>,
    pub karma: i64,
    pub follower_count: u64,
    pub following_count: u64,
    pub is_claimed: bool,
    pub owner_x_handle: Option<String>,
    pub first_seen_at: Timestamp,
    pub last_seen_at: Timestamp,
    pub created_at: Option<String>,
    pub avatar_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub id: String,
    pub agent_id: String,
    pub agent_name: String,
    pub submolt: String,
    pub title: String,
    pub content: String,
    pub url: Option<String>,
    pub score: i64,
    pub comment_count: u64,
    pub created_at: String,
    pub fetched_at: Timestamp,
    pub is_pinned: bool,
}

impl PostRecord {
    pub fn local_fields(&self, export_date: &str) -> LocalFields {
        derive_local_fields(&self.created_at, &self.content, export_date)
    }

    pub fn created(&self) -> Option<Timestamp> {
        parse_timestamp(&self.created_at).ok()
    }

    /// Title and body joined by a single space, the text the annotators scan.
    pub fn full_text(&self) -> String {
        let mut s = String::with_capacity(self.title.len() + self.content.len() + 1);
        s.push_str(&self.title);
        s.push(' ');
        s.push_str(&self.content);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub id: String,
    pub post_id: String,
    pub agent_id: String,
    pub agent_name: String,
    pub parent_id: Option<String>,
    pub content: String,
    pub score: i64,
    pub created_at: String,
    pub fetched_at: Timestamp,
}

impl CommentRecord {
    pub fn local_fields(&self, export_date: &str) -> LocalFields {
        derive_local_fields(&self.created_at, &self.content, export_date)
    }

    pub fn created(&self) -> Option<Timestamp> {
        parse_timestamp(&self.created_at).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmoltRecord {
    pub name: String,
    pub display_name: String,
    pub description: Option<String>,
    pub subscriber_count: u64,
    pub post_count: u64,
    pub created_at: Option<String>,
    pub first_seen_at: Timestamp,
    pub avatar_url: Option<String>,
    pub banner_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub id: String,
    pub timestamp: Timestamp,
    pub total_agents: u64,
    pub total_posts: u64,
    pub total_comments: u64,
    pub active_agents_24h: u64,
    /// Platform-computed; passed through untouched.
    pub avg_sentiment: Option<f64>,
    /// JSON-encoded word list exactly as the platform returned it.
    pub top_words: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordFrequencyRecord {
    pub word: String,
    pub hour: Timestamp,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FollowEdge {
    pub follower_id: String,
    pub following_id: String,
    pub first_seen_at: Timestamp,
}

/// Records as the platform API returns them, before the observatory stamps
/// its own bookkeeping timestamps.
pub mod api {
    use serde::{Deserialize, Serialize};

    use super::{AgentRecord, CommentRecord, PostRecord, SnapshotRecord, SubmoltRecord, Timestamp};

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct RemoteAgent {
        pub id: String,
        pub name: String,
        pub description: Option<String>,
        pub karma: i64,
        pub follower_count: u64,
        pub following_count: u64,
        pub is_claimed: bool,
        pub owner_x_handle: Option<String>,
        pub created_at: Option<String>,
        pub avatar_url: Option<String>,
    }

    impl RemoteAgent {
        pub fn observed(self, at: Timestamp) -> AgentRecord {
            AgentRecord {
                id: self.id,
                name: self.name,
                description: self.description,
                karma: self.karma,
                follower_count: self.follower_count,
                following_count: self.following_count,
                is_claimed: self.is_claimed,
                owner_x_handle: self.owner_x_handle,
                first_seen_at: at,
                last_seen_at: at,
                created_at: self.created_at,
                avatar_url: self.avatar_url,
            }
        }
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct RemotePost {
        pub id: String,
        pub agent_id: String,
        pub agent_name: String,
        pub submolt: String,
        pub title: String,
        pub content: String,
        pub url: Option<String>,
        pub score: i64,
        pub comment_count: u64,
        pub created_at: String,
        pub is_pinned: bool,
    }

    impl RemotePost {
        pub fn observed(self, at: Timestamp) -> PostRecord {
            PostRecord {
                id: self.id,
                agent_id: self.agent_id,
                agent_name: self.agent_name,
                submolt: self.submolt,
                title: self.title,
                content: self.content,
                url: self.url,
                score: self.score,
                comment_count: self.comment_count,
                created_at: self.created_at,
                fetched_at: at,
                is_pinned: self.is_pinned,
            }
        }
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct RemoteComment {
        pub id: String,
        pub post_id: String,
        pub agent_id: String,
        pub agent_name: String,
        pub parent_id: Option<String>,
        pub content: String,
        pub score: i64,
        pub created_at: String,
    }

    impl RemoteComment {
        pub fn observed(self, at: Timestamp) -> CommentRecord {
            CommentRecord {
                id: self.id,
                post_id: self.post_id,
                agent_id: self.agent_id,
                agent_name: self.agent_name,
                parent_id: self.parent_id,
                content: self.content,
                score: self.score,
                created_at: self.created_at,
                fetched_at: at,
            }
        }
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct RemoteSubmolt {
        pub name: String,
        pub display_name: String,
        pub description: Option<String>,
        pub subscriber_count: u64,
        pub post_count: u64,
        pub created_at: Option<String>,
        pub avatar_url: Option<String>,
        pub banner_url: Option<String>,
    }

    impl RemoteSubmolt {
        pub fn observed(self, at: Timestamp) -> SubmoltRecord {
            SubmoltRecord {
                name: self.name,
                display_name: self.display_name,
                description: self.description,
                subscriber_count: self.subscriber_count,
                post_count: self.post_count,
                created_at: self.created_at,
                first_seen_at: at,
                avatar_url: self.avatar_url,
                banner_url: self.banner_url,
            }
        }
    }

    /// Platform-wide aggregates from the stats endpoint.
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct RemoteStats {
        pub total_agents: u64,
        pub total_posts: u64,
        pub total_comments: u64,
        pub active_agents_24h: u64,
        pub avg_sentiment: Option<f64>,
        pub top_words: String,
    }

    impl RemoteStats {
        pub fn observed(self, at: Timestamp) -> SnapshotRecord {
            let hour = at.truncate_to_hour();
            SnapshotRecord {
                id: hour.utc().format("%Y%m%dT%H00Z").to_string(),
                timestamp: at,
                total_agents: self.total_agents,
                total_posts: self.total_posts,
                total_comments: self.total_comments,
                active_agents_24h: self.active_agents_24h,
                avg_sentiment: self.avg_sentiment,
                top_words: self.top_words,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_utc_offset() {
        let ts = parse_timestamp("2026-02-09T13:00:00+00:00").unwrap();
        assert_eq!(ts.utc().to_rfc3339(), "2026-02-09T13:00:00+00:00");
        assert_eq!(ts.utc_hour(), 13);
    }

    #[test]
    fn rejects_empty_and_offsetless() {
        assert_eq!(parse_timestamp(""), Err(TimestampError::Empty));
        assert!(parse_timestamp("2026-02-09T13:00:00").is_err());
        assert!(parse_timestamp("yesterday").is_err());
    }

    #[test]
    fn offset_arithmetic() {
        let ts = parse_timestamp("2026-03-10T23:59:59+02:00").unwrap();
        let utc = parse_timestamp("2026-03-10T21:59:59+00:00").unwrap();
        assert_eq!(ts, utc);
        assert_eq!(ts.to_string(), "2026-03-10T23:59:59+02:00");
    }

    #[test]
    fn derives_fields_from_parseable_timestamp() {
        let f = derive_local_fields("2026-02-09T13:07:00+00:00", "abc", "2026-04-15");
        assert_eq!(
            f,
            LocalFields {
                dump_date: "2026-02-09".into(),
                date: Some("2026-02-09".into()),
                hour: Some(13),
                content_length: 3,
            }
        );
    }

    #[test]
    fn falls_back_to_export_date() {
        let f = derive_local_fields("not-a-date", "", "2026-04-15");
        assert_eq!(f.dump_date, "2026-04-15");
        assert_eq!(f.date, None);
        assert_eq!(f.hour, None);
        assert_eq!(f.content_length, 0);
    }

    #[test]
    fn counts_max_length_post() {
        let text = "x".repeat(40_000);
        let f = derive_local_fields("2026-01-27T00:00:00+00:00", &text, "2026-04-15");
        assert_eq!(f.content_length, MAX_POST_LENGTH);
    }

    #[test]
    fn content_length_counts_scalars_not_bytes() {
        assert_eq!(content_length("héllo"), 5);
        assert_eq!(content_length("🦞🦞"), 2);
    }

    #[test]
    fn truncates_to_hour_in_utc() {
        let ts = parse_timestamp("2026-02-09T13:47:12+02:00").unwrap();
        assert_eq!(ts.truncate_to_hour().to_string(), "2026-02-09T11:00:00+00:00");
    }

    proptest! {
        #[test]
        fn dump_date_is_utc_date(secs in 0i64..4_000_000_000, offset_min in -720i32..=840) {
            let offset = FixedOffset::east_opt(offset_min * 60).unwrap();
            let dt = DateTime::from_timestamp(secs, 0).unwrap().with_timezone(&offset);
            let text = dt.to_rfc3339();
            let f = derive_local_fields(&text, "", "2000-01-01");
            let expected = format_date(DateTime::from_timestamp(secs, 0).unwrap().date_naive());
            prop_assert_eq!(&f.dump_date, &expected);
            prop_assert_eq!(f.date.as_deref(), Some(expected.as_str()));
            prop_assert!(f.hour.unwrap() < 24);
            let reparsed = parse_timestamp(&text).unwrap();
            prop_assert_eq!(reparsed.to_string(), text);
        }

        #[test]
        fn hour_null_iff_date_null(text in ".{0,30}") {
            let f = derive_local_fields(&text, "", "2026-04-15");
            prop_assert_eq!(f.hour.is_none(), f.date.is_none());
        }

        #[test]
        fn content_length_is_additive(a in ".{0,50}", b in ".{0,50}") {
            prop_assert_eq!(content_length(&format!("{a}{b}")), content_length(&a) + content_length(&b));
        }
    }
}
