//! Scheduled, read-only polling of a platform source into the store.

pub mod clock;
pub mod http;
pub mod source;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::api::{RemoteComment, RemotePost};
use crate::model::{parse_timestamp, AgentRecord, SnapshotRecord, Timestamp, WordFrequencyRecord};
use crate::store::{Store, StoreError};
use crate::table::TableName;
pub use clock::{Clock, ManualClock, SystemClock};
pub use http::HttpSource;
pub use source::{PlatformSource, SourceError, SourceResult};

pub const SECONDS_PER_DAY: u64 = 86_400;

#[derive(Debug, Error)]
pub enum CollectError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("interval must be positive")]
    ZeroInterval,
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("reading schedule: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing schedule: {0}")]
    Config(#[from] toml::de::Error),
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_secs())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_secs)
    }
}

/// Poll cadences. Durations are whole seconds in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PollSchedule {
    #[serde(with = "secs")]
    pub posts_interval: Duration,
    pub posts_page_size: usize,
    #[serde(with = "secs")]
    pub comments_interval: Duration,
    pub comments_page_size: usize,
    #[serde(with = "secs")]
    pub agents_interval: Duration,
    /// Profiles refreshed per agents poll, round-robin over known ids.
    pub agent_refresh_batch: usize,
    #[serde(with = "secs")]
    pub submolts_interval: Duration,
    #[serde(with = "secs")]
    pub word_frequency_interval: Duration,
    /// Look-back window of the word-frequency count.
    #[serde(with = "secs")]
    pub word_frequency_window: Duration,
    #[serde(with = "secs")]
    pub snapshots_interval: Duration,
}

impl Default for PollSchedule {
    fn default() -> Self {
        PollSchedule {
            posts_interval: Duration::from_secs(120),
            posts_page_size: 50,
            comments_interval: Duration::from_secs(120),
            comments_page_size: 50,
            agents_interval: Duration::from_secs(15 * 60),
            agent_refresh_batch: 25,
            submolts_interval: Duration::from_secs(3600),
            word_frequency_interval: Duration::from_secs(600),
            word_frequency_window: Duration::from_secs(600),
            snapshots_interval: Duration::from_secs(3600),
        }
    }
}

impl PollSchedule {
    pub fn validate(&self) -> Result<(), CollectError> {
        for feed in Feed::ALL {
            if self.interval(feed).as_secs() == 0 {
                return Err(CollectError::Schedule(format!("{} interval must be at least 1 s", feed.as_str())));
            }
        }
        if self.word_frequency_window.as_secs() == 0 {
            return Err(CollectError::Schedule("word_frequency_window must be at least 1 s".into()));
        }
        if self.posts_page_size == 0 || self.comments_page_size == 0 {
            return Err(CollectError::Schedule("page sizes must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, CollectError> {
        let s: PollSchedule = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, CollectError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn interval(&self, feed: Feed) -> Duration {
        match feed {
            Feed::Posts => self.posts_interval,
            Feed::Comments => self.comments_interval,
            Feed::Agents => self.agents_interval,
            Feed::Submolts => self.submolts_interval,
            Feed::WordFrequency => self.word_frequency_interval,
            Feed::Snapshots => self.snapshots_interval,
        }
    }

    pub fn budget(&self) -> RateBudget {
        RateBudget { page_size: self.posts_page_size as u64, interval: self.posts_interval }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateBudget {
    pub page_size: u64,
    pub interval: Duration,
}

impl RateBudget {
    pub fn daily(&self) -> Result<u64, CollectError> {
        capture_budget(self.page_size, self.interval)
    }
}

/// Posts per day reachable at one page per interval:
/// `floor(page_size * 86400 / interval_seconds)`.
pub fn capture_budget(page_size: u64, interval: Duration) -> Result<u64, CollectError> {
    let nanos = interval.as_nanos();
    if nanos == 0 {
        return Err(CollectError::ZeroInterval);
    }
    let day_nanos = SECONDS_PER_DAY as u128 * 1_000_000_000;
    Ok((page_size as u128 * day_nanos / nanos) as u64)
}

/// Fraction of a day's volume the budget can capture, capped at 1.
pub fn estimate_coverage(daily_volume: u64, budget: u64) -> f64 {
    if daily_volume == 0 {
        return 1.0;
    }
    (budget as f64 / daily_volume as f64).min(1.0)
}

/// Whitespace tokens, lowercased, with every token counted; sorted by word.
pub fn count_words<'a>(texts: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for text in texts {
        for tok in text.split_whitespace() {
            *counts.entry(tok.to_lowercase()).or_insert(0) += 1;
        }
    }
    counts
}

/// Word counts over post content created in `[now - window, now]`, keyed to
/// the hour containing `now`.
pub fn compute_word_frequency(
    store: &Store,
    window: Duration,
    now: Timestamp,
) -> Result<Vec<WordFrequencyRecord>, CollectError> {
    if window.is_zero() {
        return Err(CollectError::ZeroInterval);
    }
    let from = now.add_secs(-(window.as_secs() as i64));
    let posts = store.posts_created_between(&from, &now)?;
    let hour = now.truncate_to_hour();
    Ok(count_words(posts.iter().map(|p| p.content.as_str()))
        .into_iter()
        .map(|(word, count)| WordFrequencyRecord { word, hour, count })
        .collect())
}

/// Fetches platform aggregates and stores them verbatim.
pub fn record_snapshot(
    source: &dyn PlatformSource,
    store: &mut Store,
    now: Timestamp,
) -> Result<SnapshotRecord, CollectError> {
    let snap = source.get_snapshot()?.observed(now);
    store.upsert(&snap)?;
    Ok(snap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feed {
    Posts,
    Comments,
    Agents,
    Submolts,
    WordFrequency,
    Snapshots,
}

impl Feed {
    pub const ALL: [Feed; 6] =
        [Feed::Posts, Feed::Comments, Feed::Agents, Feed::Submolts, Feed::WordFrequency, Feed::Snapshots];

    pub fn as_str(&self) -> &'static str {
        match self {
            Feed::Posts => "posts",
            Feed::Comments => "comments",
            Feed::Agents => "agents",
            Feed::Submolts => "submolts",
            Feed::WordFrequency => "word_frequency",
            Feed::Snapshots => "snapshots",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FeedOutcome {
    Fetched { records: u64 },
    Throttled { records: u64, retry_after_secs: Option<u64> },
    Failed { error: String },
}

impl FeedOutcome {
    pub fn records(&self) -> u64 {
        match self {
            FeedOutcome::Fetched { records } | FeedOutcome::Throttled { records, .. } => *records,
            FeedOutcome::Failed { .. } => 0,
        }
    }
}

/// Per-feed results of one cycle; feeds that were not due are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub at: Timestamp,
    pub feeds: BTreeMap<Feed, FeedOutcome>,
}

impl CycleReport {
    pub fn fetched(&self, feed: Feed) -> Option<u64> {
        self.feeds.get(&feed).map(FeedOutcome::records)
    }
}

/// Backward cursor sweep over a newest-first feed. A sweep starts at the
/// head and pages toward older records until a page comes back short or
/// reaches records already covered by a previous sweep.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sweep {
    pub watermark: Option<Timestamp>,
    pub cursor: Option<Timestamp>,
    pub newest: Option<Timestamp>,
}

impl Sweep {
    pub fn is_idle(&self) -> bool {
        self.cursor.is_none()
    }

    /// Updates the sweep after a page fetched at the current cursor.
    pub fn advance(&mut self, created: &[Option<Timestamp>], limit: usize) {
        let page_newest = created.iter().flatten().max().copied();
        let page_oldest = created.iter().flatten().min().copied();
        if self.cursor.is_none() {
            self.newest = page_newest;
        } else {
            self.newest = self.newest.max(page_newest);
        }
        let reached = match (page_oldest, self.watermark) {
            (Some(o), Some(w)) => o <= w,
            (None, _) => true,
            _ => false,
        };
        if created.len() < limit || reached {
            self.watermark = self.watermark.max(self.newest);
            self.cursor = None;
            self.newest = None;
        } else {
            self.cursor = page_oldest;
        }
    }
}

enum Fetched {
    Posts(SourceResult<Vec<RemotePost>>),
    Comments(SourceResult<Vec<RemoteComment>>),
    Agents(Vec<AgentRecord>, Option<SourceError>),
    Submolts(SourceResult<Vec<crate::model::api::RemoteSubmolt>>),
    Snapshot(SourceResult<crate::model::api::RemoteStats>),
}

/// Poll state across cycles: per-feed next-due times, sweeps and the
/// round-robin agent cursor.
#[derive(Debug, Clone)]
pub struct Collector {
    pub schedule: PollSchedule,
    next_due: HashMap<Feed, Timestamp>,
    pub posts: Sweep,
    pub comments: Sweep,
    agent_cursor: usize,
}

fn retry_secs(e: &SourceError) -> Option<u64> {
    match e {
        SourceError::Throttled { retry_after } => retry_after.map(|d| d.as_secs()),
        _ => None,
    }
}

impl Collector {
    /// Resumes sweeps from what the store already holds.
    pub fn new(schedule: PollSchedule, store: &Store) -> Result<Self, CollectError> {
        schedule.validate()?;
        Ok(Collector {
            schedule,
            next_due: HashMap::new(),
            posts: Sweep { watermark: store.max_created(TableName::Posts)?, ..Default::default() },
            comments: Sweep { watermark: store.max_created(TableName::Comments)?, ..Default::default() },
            agent_cursor: 0,
        })
    }

    pub fn next_due(&self, feed: Feed) -> Option<Timestamp> {
        self.next_due.get(&feed).copied()
    }

    pub fn is_due(&self, feed: Feed, now: Timestamp) -> bool {
        self.next_due(feed).is_none_or(|t| t <= now)
    }

    /// Both content sweeps have caught up with the head of their feeds.
    pub fn caught_up(&self) -> bool {
        self.posts.is_idle() && self.comments.is_idle()
    }

    fn schedule_after(&mut self, feed: Feed, now: Timestamp, outcome: &FeedOutcome) {
        let interval = self.schedule.interval(feed).as_secs();
        let next = match outcome {
            FeedOutcome::Fetched { .. } => now.add_secs(interval as i64),
            FeedOutcome::Throttled { retry_after_secs, .. } => {
                now.add_secs(interval.max(retry_after_secs.unwrap_or(0)) as i64)
            }
            FeedOutcome::Failed { .. } => return,
        };
        self.next_due.insert(feed, next);
    }

    /// Polls every due feed once. Network feeds run concurrently; all store
    /// writes happen on the calling thread.
    pub fn run_poll_cycle(
        &mut self,
        source: &dyn PlatformSource,
        store: &mut Store,
        now: Timestamp,
    ) -> Result<CycleReport, CollectError> {
        let due: Vec<Feed> = Feed::ALL.into_iter().filter(|f| self.is_due(*f, now)).collect();
        let agent_batch: Vec<String> = if due.contains(&Feed::Agents) {
            let known = store.known_agent_ids()?;
            let n = known.len();
            let take = self.schedule.agent_refresh_batch.min(n);
            let start = if n == 0 { 0 } else { self.agent_cursor % n };
            (0..take).map(|i| known[(start + i) % n].clone()).collect()
        } else {
            Vec::new()
        };

        let (tx, rx) = mpsc::channel::<Fetched>();
        let mut feeds = BTreeMap::new();
        std::thread::scope(|scope| -> Result<(), CollectError> {
            for &feed in &due {
                let tx = tx.clone();
                let batch = &agent_batch;
                let (posts_cursor, comments_cursor) = (self.posts.cursor, self.comments.cursor);
                let (posts_limit, comments_limit) = (self.schedule.posts_page_size, self.schedule.comments_page_size);
                let job = move || {
                    let msg = match feed {
                        Feed::Posts => Fetched::Posts(source.list_posts(posts_cursor, posts_limit)),
                        Feed::Comments => Fetched::Comments(source.list_comments(comments_cursor, comments_limit)),
                        Feed::Agents => {
                            let mut got = Vec::new();
                            let mut err = None;
                            for id in batch {
                                match source.get_agent(id) {
                                    Ok(a) => got.push(a.observed(now)),
                                    Err(SourceError::NotFound) => {}
                                    Err(e) => {
                                        err = Some(e);
                                        break;
                                    }
                                }
                            }
                            Fetched::Agents(got, err)
                        }
                        Feed::Submolts => Fetched::Submolts(source.list_submolts()),
                        Feed::Snapshots => Fetched::Snapshot(source.get_snapshot()),
                        Feed::WordFrequency => return,
                    };
                    let _ = tx.send(msg);
                };
                if feed != Feed::WordFrequency {
                    scope.spawn(job);
                }
            }
            drop(tx);
            for msg in rx {
                let (feed, outcome) = self.apply(msg, store, now, &agent_batch)?;
                feeds.insert(feed, outcome);
            }
            Ok(())
        })?;

        if due.contains(&Feed::WordFrequency) {
            let words = compute_word_frequency(store, self.schedule.word_frequency_window, now)?;
            store.upsert_all(&words)?;
            feeds.insert(Feed::WordFrequency, FeedOutcome::Fetched { records: words.len() as u64 });
        }
        for (feed, outcome) in &feeds {
            if let FeedOutcome::Failed { error } = outcome {
                tracing::warn!(feed = feed.as_str(), %error, "poll failed; retrying next cycle");
            }
            self.schedule_after(*feed, now, outcome);
        }
        Ok(CycleReport { at: now, feeds })
    }

    fn apply(
        &mut self,
        msg: Fetched,
        store: &mut Store,
        now: Timestamp,
        agent_batch: &[String],
    ) -> Result<(Feed, FeedOutcome), CollectError> {
        fn failed(e: SourceError) -> FeedOutcome {
            match e {
                SourceError::Throttled { .. } => {
                    FeedOutcome::Throttled { records: 0, retry_after_secs: retry_secs(&e) }
                }
                other => FeedOutcome::Failed { error: other.to_string() },
            }
        }
        Ok(match msg {
            Fetched::Posts(Ok(page)) => {
                let created: Vec<Option<Timestamp>> =
                    page.iter().map(|p| parse_timestamp(&p.created_at).ok()).collect();
                let records: Vec<_> = page.into_iter().map(|p| p.observed(now)).collect();
                store.upsert_all(&records)?;
                self.posts.advance(&created, self.schedule.posts_page_size);
                (Feed::Posts, FeedOutcome::Fetched { records: records.len() as u64 })
            }
            Fetched::Posts(Err(e)) => (Feed::Posts, failed(e)),
            Fetched::Comments(Ok(page)) => {
                let created: Vec<Option<Timestamp>> =
                    page.iter().map(|c| parse_timestamp(&c.created_at).ok()).collect();
                let records: Vec<_> = page.into_iter().map(|c| c.observed(now)).collect();
                store.upsert_all(&records)?;
                self.comments.advance(&created, self.schedule.comments_page_size);
                (Feed::Comments, FeedOutcome::Fetched { records: records.len() as u64 })
            }
            Fetched::Comments(Err(e)) => (Feed::Comments, failed(e)),
            Fetched::Agents(records, err) => {
                store.upsert_all(&records)?;
                let n = records.len() as u64;
                let attempted = match &err {
                    Some(SourceError::Throttled { .. }) | None => {
                        // Not-found ids still count as visited.
                        let visited = if err.is_none() { agent_batch.len() } else { records.len() };
                        self.agent_cursor = self.agent_cursor.wrapping_add(visited);
                        visited
                    }
                    Some(_) => 0,
                };
                tracing::debug!(attempted, stored = n, "agent refresh");
                let outcome = match err {
                    None => FeedOutcome::Fetched { records: n },
                    Some(e @ SourceError::Throttled { .. }) => {
                        FeedOutcome::Throttled { records: n, retry_after_secs: retry_secs(&e) }
                    }
                    Some(e) => FeedOutcome::Failed { error: e.to_string() },
                };
                (Feed::Agents, outcome)
            }
            Fetched::Submolts(Ok(list)) => {
                let records: Vec<_> = list.into_iter().map(|s| s.observed(now)).collect();
                store.upsert_all(&records)?;
                (Feed::Submolts, FeedOutcome::Fetched { records: records.len() as u64 })
            }
            Fetched::Submolts(Err(e)) => (Feed::Submolts, failed(e)),
            Fetched::Snapshot(Ok(stats)) => {
                store.upsert(&stats.observed(now))?;
                (Feed::Snapshots, FeedOutcome::Fetched { records: 1 })
            }
            Fetched::Snapshot(Err(e)) => (Feed::Snapshots, failed(e)),
        })
    }

    /// Runs cycles every `step_secs` of the clock until it reaches `until`.
    pub fn run_until(
        &mut self,
        source: &dyn PlatformSource,
        store: &mut Store,
        clock: &ManualClock,
        until: Timestamp,
        step_secs: i64,
    ) -> Result<Vec<CycleReport>, CollectError> {
        let mut reports = Vec::new();
        while clock.now() <= until {
            reports.push(self.run_poll_cycle(source, store, clock.now())?);
            clock.advance_secs(step_secs);
        }
        Ok(reports)
    }
}
