//! Serves a generated corpus as it would have looked at the clock's "now".

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::{created_micros, Corpus};
use crate::collector::source::{PlatformSource, SourceError, SourceResult};
use crate::collector::Clock;
use crate::model::api::{RemoteAgent, RemoteComment, RemotePost, RemoteStats, RemoteSubmolt};
use crate::model::Timestamp;

const MINUTE_US: i64 = 60_000_000;
const DAY_US: i64 = 86_400_000_000;

/// Newest-first page of items strictly older than `before` (or the newest
/// when `None`) among those created at or before `now`. `created` must be
/// ascending.
pub fn page_bounds(created: &[i64], before: Option<i64>, limit: usize, now: i64) -> std::ops::Range<usize> {
    let mut end = created.partition_point(|&c| c <= now);
    if let Some(b) = before {
        end = end.min(created.partition_point(|&c| c < b));
    }
    end.saturating_sub(limit)..end
}

/// Pure pagination over posts in the corpus at `now`.
pub fn serve_page(corpus: &Corpus, before: Option<Timestamp>, limit: usize, now: Timestamp) -> Vec<RemotePost> {
    let created: Vec<i64> = corpus.posts.iter().map(|p| created_micros(&p.created_at)).collect();
    let range = page_bounds(&created, before.map(|b| b.micros()), limit, now.micros());
    corpus.posts[range].iter().rev().cloned().collect()
}

pub struct SimPlatform {
    corpus: Arc<Corpus>,
    clock: Arc<dyn Clock>,
    rate_limit: u32,
    window: Mutex<(i64, u32)>,
    post_us: Vec<i64>,
    comment_us: Vec<i64>,
    agent_us: Vec<i64>,
    agent_index: HashMap<String, usize>,
    /// Comment creation instants per post id, ascending.
    comments_by_post: HashMap<String, Vec<i64>>,
    requests: AtomicU64,
    throttled: AtomicU64,
}

impl SimPlatform {
    pub fn new(corpus: Arc<Corpus>, clock: Arc<dyn Clock>) -> Self {
        let rate_limit = corpus.config.rate_limit;
        Self::with_rate_limit(corpus, clock, rate_limit)
    }

    pub fn with_rate_limit(corpus: Arc<Corpus>, clock: Arc<dyn Clock>, rate_limit: u32) -> Self {
        let post_us = corpus.posts.iter().map(|p| created_micros(&p.created_at)).collect();
        let comment_us: Vec<i64> = corpus.comments.iter().map(|c| created_micros(&c.created_at)).collect();
        let agent_us = corpus.agents.iter().map(|a| a.created_at.as_deref().map_or(i64::MIN, created_micros)).collect();
        let agent_index = corpus.agents.iter().enumerate().map(|(i, a)| (a.id.clone(), i)).collect();
        let mut comments_by_post: HashMap<String, Vec<i64>> = HashMap::new();
        for (c, &t) in corpus.comments.iter().zip(&comment_us) {
            comments_by_post.entry(c.post_id.clone()).or_default().push(t);
        }
        SimPlatform {
            corpus,
            clock,
            rate_limit,
            window: Mutex::new((i64::MIN, 0)),
            post_us,
            comment_us,
            agent_us,
            agent_index,
            comments_by_post,
            requests: AtomicU64::new(0),
            throttled: AtomicU64::new(0),
        }
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn throttle_count(&self) -> u64 {
        self.throttled.load(Ordering::Relaxed)
    }

    /// Counts one request against the per-minute budget.
    fn admit(&self) -> SourceResult<i64> {
        let now = self.clock.now().micros();
        self.requests.fetch_add(1, Ordering::Relaxed);
        if self.rate_limit == 0 {
            return Ok(now);
        }
        let minute = now.div_euclid(MINUTE_US);
        let mut w = self.window.lock().unwrap();
        if w.0 != minute {
            *w = (minute, 0);
        }
        if w.1 >= self.rate_limit {
            self.throttled.fetch_add(1, Ordering::Relaxed);
            let wait_us = (minute + 1) * MINUTE_US - now;
            let secs = (wait_us as u64).div_ceil(1_000_000).max(1);
            return Err(SourceError::Throttled { retry_after: Some(Duration::from_secs(secs)) });
        }
        w.1 += 1;
        Ok(now)
    }

    /// A post as visible at `now`: score grows over its first day and the
    /// comment count includes only comments created so far.
    fn post_at(&self, idx: usize, now: i64) -> RemotePost {
        let mut p = self.corpus.posts[idx].clone();
        let age = (now - self.post_us[idx]).clamp(0, DAY_US);
        p.score = ((p.score as i128 * age as i128) / DAY_US as i128) as i64;
        p.comment_count = self.comments_by_post.get(&p.id).map_or(0, |ts| ts.partition_point(|&t| t <= now)) as u64;
        p
    }

    pub fn posts_page(&self, before: Option<Timestamp>, limit: usize, now: i64) -> Vec<RemotePost> {
        let range = page_bounds(&self.post_us, before.map(|b| b.micros()), limit, now);
        range.rev().map(|i| self.post_at(i, now)).collect()
    }

    pub fn comments_page(&self, before: Option<Timestamp>, limit: usize, now: i64) -> Vec<RemoteComment> {
        let range = page_bounds(&self.comment_us, before.map(|b| b.micros()), limit, now);
        self.corpus.comments[range].iter().rev().cloned().collect()
    }

    pub fn stats_at(&self, now: i64) -> RemoteStats {
        let visible_posts = self.post_us.partition_point(|&t| t <= now);
        let day_ago = self.post_us.partition_point(|&t| t <= now - DAY_US);
        let recent = &self.corpus.posts[day_ago..visible_posts];
        let active: HashSet<&str> = recent.iter().map(|p| p.agent_id.as_str()).collect();
        let hour_ago = self.post_us.partition_point(|&t| t <= now - DAY_US / 24);
        let mut freq: HashMap<String, u64> = HashMap::new();
        for p in &self.corpus.posts[hour_ago..visible_posts] {
            for w in p.content.split_whitespace() {
                *freq.entry(w.to_lowercase()).or_default() += 1;
            }
        }
        let mut top: Vec<(String, u64)> = freq.into_iter().collect();
        top.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let top: Vec<String> = top.into_iter().take(10).map(|(w, _)| w).collect();
        RemoteStats {
            total_agents: self.agent_us.iter().filter(|&&t| t <= now).count() as u64,
            total_posts: visible_posts as u64,
            total_comments: self.comment_us.partition_point(|&t| t <= now) as u64,
            active_agents_24h: active.len() as u64,
            avg_sentiment: Some(0.12 + 0.01 * ((now / (DAY_US / 24)) % 7) as f64),
            top_words: serde_json::to_string(&top).expect("strings serialize"),
        }
    }
}

impl PlatformSource for SimPlatform {
    fn list_posts(&self, before: Option<Timestamp>, limit: usize) -> SourceResult<Vec<RemotePost>> {
        let now = self.admit()?;
        Ok(self.posts_page(before, limit, now))
    }

    fn list_comments(&self, before: Option<Timestamp>, limit: usize) -> SourceResult<Vec<RemoteComment>> {
        let now = self.admit()?;
        Ok(self.comments_page(before, limit, now))
    }

    fn get_agent(&self, id: &str) -> SourceResult<RemoteAgent> {
        let now = self.admit()?;
        match self.agent_index.get(id) {
            Some(&i) if self.agent_us[i] <= now => Ok(self.corpus.agents[i].clone()),
            _ => Err(SourceError::NotFound),
        }
    }

    fn list_submolts(&self) -> SourceResult<Vec<RemoteSubmolt>> {
        let now = self.admit()?;
        Ok(self
            .corpus
            .submolts
            .iter()
            .filter(|s| s.created_at.as_deref().is_none_or(|c| created_micros(c) <= now))
            .cloned()
            .collect())
    }

    fn get_snapshot(&self) -> SourceResult<RemoteStats> {
        let now = self.admit()?;
        Ok(self.stats_at(now))
    }
}
