//! Deterministic mock platform with ground-truth labels.

pub mod http;
pub mod platform;
pub mod text;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{NaiveDate, SecondsFormat, TimeZone, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::api::{RemoteAgent, RemoteComment, RemotePost, RemoteSubmolt};
use crate::model::{parse_date, parse_timestamp, Timestamp};
pub use platform::SimPlatform;

/// Upper end of the per-agent activity weight support.
pub const MAX_ACTIVITY: f64 = 20_000.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{file}:{line}: {source}")]
    Decode { file: String, line: usize, source: serde_json::Error },
    #[error("encoding: {0}")]
    Encode(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeDay {
    pub date: String,
    pub posts: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    pub agent_count: usize,
    pub day_count: usize,
    /// First simulated UTC day, `YYYY-MM-DD`.
    pub start_date: String,
    pub base_daily_posts: u64,
    pub spike_days: Vec<SpikeDay>,
    /// Exponent of the truncated power law behind per-agent activity.
    pub activity_tail_exponent: f64,
    pub injection_rate: f64,
    pub crypto_rate: f64,
    pub pump_rate: f64,
    pub duplicate_rate: f64,
    pub manipulation_rate: f64,
    pub bot_comment_rate: f64,
    pub self_comment_rate: f64,
    pub near_duplicate_rate: f64,
    pub comment_to_post_ratio: f64,
    /// Comments whose `post_id` matches no post.
    pub dangling_comments: usize,
    pub submolt_count: usize,
    /// Requests per minute; 0 disables throttling.
    pub rate_limit: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 7,
            agent_count: 1_000,
            day_count: 14,
            start_date: "2026-01-27".into(),
            base_daily_posts: 3_000,
            spike_days: vec![SpikeDay { date: "2026-02-03".into(), posts: 8_000 }],
            activity_tail_exponent: 2.0,
            injection_rate: 0.004,
            crypto_rate: 0.25,
            pump_rate: 0.02,
            duplicate_rate: 0.05,
            manipulation_rate: 0.02,
            bot_comment_rate: 0.15,
            self_comment_rate: 0.12,
            near_duplicate_rate: 0.004,
            comment_to_post_ratio: 0.4,
            dangling_comments: 5,
            submolt_count: 40,
            rate_limit: 120,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Config(m));
        for (name, v) in [
            ("injection_rate", self.injection_rate),
            ("crypto_rate", self.crypto_rate),
            ("pump_rate", self.pump_rate),
            ("duplicate_rate", self.duplicate_rate),
            ("manipulation_rate", self.manipulation_rate),
            ("bot_comment_rate", self.bot_comment_rate),
            ("self_comment_rate", self.self_comment_rate),
            ("near_duplicate_rate", self.near_duplicate_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.comment_to_post_ratio >= 0.0 && self.comment_to_post_ratio.is_finite()) {
            return err(format!("comment_to_post_ratio must be >= 0, got {}", self.comment_to_post_ratio));
        }
        if !(self.activity_tail_exponent > 1.0 && self.activity_tail_exponent.is_finite()) {
            return err(format!("activity_tail_exponent must exceed 1, got {}", self.activity_tail_exponent));
        }
        let start = self.start()?;
        for s in &self.spike_days {
            let d = parse_date(&s.date).ok_or_else(|| SimError::Config(format!("bad spike date {:?}", s.date)))?;
            if d < start || (d - start).num_days() >= self.day_count as i64 {
                return err(format!("spike day {} outside the simulated window", s.date));
            }
        }
        let total: u64 = self.daily_targets()?.iter().map(|(_, n)| n).sum();
        if self.agent_count == 0 && (total > 0 || self.dangling_comments > 0) {
            return err("agent_count = 0 requires an empty corpus".into());
        }
        if total > 0 && self.submolt_count == 0 {
            return err("posts need at least one submolt".into());
        }
        Ok(())
    }

    fn start(&self) -> Result<NaiveDate, SimError> {
        parse_date(&self.start_date).ok_or_else(|| SimError::Config(format!("bad start_date {:?}", self.start_date)))
    }

    /// Post target per simulated day.
    pub fn daily_targets(&self) -> Result<Vec<(NaiveDate, u64)>, SimError> {
        let start = self.start()?;
        Ok((0..self.day_count)
            .map(|d| {
                let date = start + chrono::Duration::days(d as i64);
                let spike = self.spike_days.iter().find(|s| parse_date(&s.date) == Some(date));
                (date, spike.map_or(self.base_daily_posts, |s| s.posts))
            })
            .collect())
    }

    pub fn window_start(&self) -> Result<Timestamp, SimError> {
        Ok(day_start(self.start()?))
    }

    pub fn window_end(&self) -> Result<Timestamp, SimError> {
        Ok(day_start(self.start()? + chrono::Duration::days(self.day_count as i64)))
    }
}

fn day_start(d: NaiveDate) -> Timestamp {
    Timestamp::from_utc(Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).expect("midnight")))
}

fn stamp(micros: i64) -> String {
    Timestamp::from_micros(micros).expect("in range").utc().to_rfc3339_opts(SecondsFormat::AutoSi, false)
}

pub const FLAG_INJECTION: &str = "injection";
pub const FLAG_CRYPTO: &str = "crypto";
pub const FLAG_PUMP_DUMP: &str = "pump_dump";
pub const FLAG_DUPLICATE: &str = "duplicate_spam";
pub const FLAG_NEAR_DUPLICATE: &str = "near_duplicate";
pub const FLAG_BOT_COMMENT: &str = "bot_comment";
pub const FLAG_MANIPULATION: &str = "manipulation";
pub const FLAG_SELF_COMMENT: &str = "self_comment";
pub const FLAG_DANGLING: &str = "dangling_comment";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub counts: BTreeMap<String, u64>,
    pub agent_post_counts: BTreeMap<String, u64>,
    /// `(earlier, later)` post ids sharing agent and title.
    pub duplicate_pairs: Vec<(String, String)>,
    /// Sorted record ids per flag.
    pub flagged: BTreeMap<String, Vec<String>>,
}

impl GroundTruth {
    pub fn count(&self, flag: &str) -> u64 {
        self.counts.get(flag).copied().unwrap_or(0)
    }

    pub fn ids(&self, flag: &str) -> &[String] {
        self.flagged.get(flag).map_or(&[], Vec::as_slice)
    }

    fn set(&mut self, flag: &str, mut ids: Vec<String>) {
        ids.sort();
        self.counts.insert(flag.to_string(), ids.len() as u64);
        self.flagged.insert(flag.to_string(), ids);
    }
}

/// Final platform state; records are ordered by creation time.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub config: SimConfig,
    pub agents: Vec<RemoteAgent>,
    pub posts: Vec<RemotePost>,
    pub comments: Vec<RemoteComment>,
    pub submolts: Vec<RemoteSubmolt>,
}

/// Truncated continuous power law on `[1, MAX_ACTIVITY]` via inverse CDF.
fn power_law<R: Rng>(rng: &mut R, alpha: f64) -> f64 {
    let a = 1.0 - alpha;
    let (lo, hi) = (1f64.powf(a), MAX_ACTIVITY.powf(a));
    let u: f64 = rng.random();
    (lo + u * (hi - lo)).powf(1.0 / a).floor().clamp(1.0, MAX_ACTIVITY)
}

fn keys_seen_twice<'a>(keys: impl Iterator<Item = (&'a str, &'a str)> + Clone, ids: &[&'a str]) -> Vec<String> {
    let mut counts: HashMap<(&str, &str), u32> = HashMap::new();
    for k in keys.clone() {
        *counts.entry(k).or_default() += 1;
    }
    keys.zip(ids).filter(|(k, _)| counts[k] >= 2).map(|(_, id)| id.to_string()).collect()
}

/// Builds a corpus and its labels from the config alone.
pub fn generate_corpus(config: &SimConfig) -> Result<(Corpus, GroundTruth), SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let targets = config.daily_targets()?;
    let n_agents = config.agent_count;

    // Agents: activity weight and join day (influx grows with squared volume).
    let weights: Vec<f64> = (0..n_agents).map(|_| power_law(&mut rng, config.activity_tail_exponent)).collect();
    let join_weights: Vec<f64> = targets.iter().map(|(_, n)| (*n as f64).powi(2)).collect();
    let mut join_day: Vec<usize> = if join_weights.iter().any(|w| *w > 0.0) {
        let dist = WeightedIndex::new(&join_weights).expect("positive weights");
        (0..n_agents).map(|_| dist.sample(&mut rng)).collect()
    } else {
        (0..n_agents).map(|_| rng.random_range(0..config.day_count.max(1))).collect()
    };
    if let Some(first_active) = targets.iter().position(|(_, n)| *n > 0) {
        if let Some(j) = join_day.first_mut() {
            *j = first_active;
        }
    }
    let mut names = Vec::with_capacity(n_agents);
    for i in 0..n_agents {
        names.push(text::handle(&mut rng, i));
    }
    let agent_ids: Vec<String> = (0..n_agents).map(|i| format!("agent-{i:05}")).collect();

    // Submolts with Zipf-like popularity.
    let submolt_names: Vec<String> = (0..config.submolt_count)
        .map(|i| {
            let base = text::SUBMOLT_NAMES[i % text::SUBMOLT_NAMES.len()];
            if i < text::SUBMOLT_NAMES.len() {
                base.to_string()
            } else {
                format!("{base}{}", i / text::SUBMOLT_NAMES.len())
            }
        })
        .collect();
    let submolt_dist = (!submolt_names.is_empty())
        .then(|| WeightedIndex::new((1..=submolt_names.len()).map(|r| 1.0 / r as f64)).expect("positive"));

    // Post slots per day: joiners take their first post on their join day,
    // the rest go to already-joined agents by activity weight.
    let mut slots: Vec<(i64, usize)> = Vec::new();
    let mut joined: Vec<usize> = Vec::new();
    for (d, (date, target)) in targets.iter().enumerate() {
        let day0 = day_start(*date).micros();
        let mut joiners: Vec<usize> = (0..n_agents).filter(|&a| join_day[a] == d).collect();
        joined.extend(&joiners);
        joiners.truncate(*target as usize);
        let mut day_authors = joiners;
        let rest = *target as usize - day_authors.len();
        if rest > 0 && !joined.is_empty() {
            let dist = WeightedIndex::new(joined.iter().map(|&a| weights[a])).expect("positive");
            day_authors.extend((0..rest).map(|_| joined[dist.sample(&mut rng)]));
        }
        for a in day_authors {
            slots.push((day0 + rng.random_range(0..86_400_000_000i64), a));
        }
    }
    slots.sort();
    let mut last = i64::MIN;
    for s in &mut slots {
        if s.0 <= last {
            s.0 = last + 1;
        }
        last = s.0;
    }

    // Post content.
    let mut posts: Vec<RemotePost> = Vec::with_capacity(slots.len());
    let mut post_micros: Vec<i64> = Vec::with_capacity(slots.len());
    let mut titles_by_agent: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut used_titles: HashSet<(usize, String)> = HashSet::new();
    let mut clean_long: Vec<usize> = Vec::new();
    let mut post_agent: Vec<usize> = Vec::with_capacity(slots.len());
    let (mut inj, mut cry, mut pump, mut near, mut dup_pairs) = (vec![], vec![], vec![], vec![], vec![]);
    for (i, &(micros, a)) in slots.iter().enumerate() {
        let id = format!("post-{i:07}");
        let earlier = titles_by_agent.get(&a);
        let title;
        let mut content;
        let mut clean = true;
        if let Some(earlier) = earlier.filter(|_| rng.random_bool(config.duplicate_rate)) {
            let src = *earlier.choose(&mut rng).expect("non-empty");
            title = posts[src].title.clone();
            dup_pairs.push((posts[src].id.clone(), id.clone()));
            content = text::body(&mut rng);
        } else {
            let mut t = text::title(&mut rng);
            while used_titles.contains(&(a, t.clone())) {
                t = text::title(&mut rng);
            }
            title = t;
            if !clean_long.is_empty() && rng.random_bool(config.near_duplicate_rate) {
                let src = *clean_long.choose(&mut rng).expect("non-empty");
                let inserts = rng.random_range(1..=2);
                content = text::perturb(&mut rng, &posts[src].content, inserts);
                near.push(id.clone());
                clean = false;
            } else {
                content = text::body(&mut rng);
            }
        }
        if rng.random_bool(config.injection_rate) {
            content = format!("{content} {}", text::INJECTION_STAMPS.choose(&mut rng).expect("non-empty"));
            inj.push(id.clone());
            clean = false;
        }
        if rng.random_bool(config.pump_rate) {
            content = format!("{content} {}", text::PUMP_STAMPS.choose(&mut rng).expect("non-empty"));
            pump.push(id.clone());
            cry.push(id.clone());
            clean = false;
        } else if rng.random_bool(config.crypto_rate) {
            content = format!("{content} {}", text::CRYPTO_STAMPS.choose(&mut rng).expect("non-empty"));
            cry.push(id.clone());
            clean = false;
        }
        if clean && content.len() >= 400 {
            clean_long.push(i);
        }
        used_titles.insert((a, title.clone()));
        titles_by_agent.entry(a).or_default().push(i);
        let submolt = submolt_dist.as_ref().map_or(String::new(), |d| submolt_names[d.sample(&mut rng)].clone());
        let score = if rng.random_bool(0.02) { rng.random_range(100..2_000) } else { rng.random_range(-3..60) };
        posts.push(RemotePost {
            id,
            agent_id: agent_ids[a].clone(),
            agent_name: names[a].clone(),
            submolt,
            title,
            content,
            url: rng.random_bool(0.05).then(|| format!("https://example.org/r/{i}")),
            score,
            comment_count: 0,
            created_at: stamp(micros),
            is_pinned: rng.random_bool(0.001),
        });
        post_micros.push(micros);
        post_agent.push(a);
    }

    // Comments: delay after the post on a log scale, capped at the window end.
    let window_end = config.window_end()?.micros() - 1;
    let n_comments = (posts.len() as f64 * config.comment_to_post_ratio).round() as usize;
    let mut raw: Vec<(i64, usize, usize)> = Vec::with_capacity(n_comments);
    let commenter_dist = if n_comments > 0 {
        Some(WeightedIndex::new(weights.iter().map(|w| w.sqrt())).expect("positive"))
    } else {
        None
    };
    for _ in 0..n_comments {
        let commenter_dist = commenter_dist.as_ref().expect("agents exist");
        let p = rng.random_range(0..posts.len());
        let delay = (10f64.powf(rng.random_range(1.8..5.2)) * 1e6) as i64;
        let t = (post_micros[p] + delay).min(window_end).max(post_micros[p] + 1);
        let author = post_agent[p];
        let commenter = if rng.random_bool(config.self_comment_rate) {
            author
        } else {
            let mut pick = commenter_dist.sample(&mut rng);
            for _ in 0..8 {
                if pick != author {
                    break;
                }
                pick = commenter_dist.sample(&mut rng);
            }
            pick
        };
        raw.push((t, p, commenter));
    }
    let start_us = config.window_start()?.micros();
    let mut dangling: Vec<(i64, usize)> = (0..config.dangling_comments)
        .map(|_| (rng.random_range(start_us..window_end), rng.random_range(0..n_agents)))
        .collect();
    dangling.sort();

    enum Target {
        Post(usize),
        Missing(usize),
    }
    let mut events: Vec<(i64, Target, usize)> = raw.into_iter().map(|(t, p, c)| (t, Target::Post(p), c)).collect();
    events.extend(dangling.into_iter().enumerate().map(|(k, (t, c))| (t, Target::Missing(k), c)));
    events.sort_by_key(|e| e.0);
    let mut last = i64::MIN;
    for e in &mut events {
        if e.0 <= last {
            e.0 = last + 1;
        }
        last = e.0;
    }

    let mut comments: Vec<RemoteComment> = Vec::with_capacity(events.len());
    let mut by_post: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut by_commenter: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut used_content: HashSet<(usize, String)> = HashSet::new();
    let (mut manip, mut selfc, mut dang) = (vec![], vec![], vec![]);
    let mut is_manip: Vec<bool> = Vec::new();
    for (i, (t, target, c)) in events.into_iter().enumerate() {
        let manip_before = manip.len();
        let id = format!("comment-{i:07}");
        let mine = by_commenter.get(&c);
        let content = if let Some(mine) = mine.filter(|_| rng.random_bool(config.bot_comment_rate)) {
            let src = *mine.choose(&mut rng).expect("non-empty");
            if is_manip[src] {
                manip.push(id.clone());
            }
            comments[src].content.clone()
        } else {
            let mut s = String::new();
            while s.is_empty() || used_content.contains(&(c, s.clone())) {
                let n = rng.random_range(6..40);
                s = text::words(&mut rng, n);
            }
            if rng.random_bool(config.manipulation_rate) {
                s = format!("{s} {}", text::MANIPULATION_STAMPS.choose(&mut rng).expect("non-empty"));
                manip.push(id.clone());
            }
            s
        };
        let (post_id, parent_id) = match target {
            Target::Post(p) => {
                posts[p].comment_count += 1;
                if post_agent[p] == c {
                    selfc.push(id.clone());
                }
                let siblings = by_post.entry(p).or_default();
                let parent = (!siblings.is_empty() && rng.random_bool(0.3))
                    .then(|| comments[*siblings.choose(&mut rng).expect("non-empty")].id.clone());
                siblings.push(i);
                (posts[p].id.clone(), parent)
            }
            Target::Missing(k) => {
                dang.push(id.clone());
                (format!("post-missing-{k:04}"), None)
            }
        };
        is_manip.push(manip.len() > manip_before);
        used_content.insert((c, content.clone()));
        by_commenter.entry(c).or_default().push(i);
        comments.push(RemoteComment {
            id,
            post_id,
            agent_id: agent_ids[c].clone(),
            agent_name: names[c].clone(),
            parent_id,
            content,
            score: rng.random_range(-2..25),
            created_at: stamp(t),
        });
    }

    // Agent profiles, created shortly before their first post (or on their join day).
    let mut first_post: HashMap<usize, i64> = HashMap::new();
    for (i, &a) in post_agent.iter().enumerate() {
        first_post.entry(a).or_insert(post_micros[i]);
    }
    let mut agents: Vec<(i64, RemoteAgent)> = (0..n_agents)
        .map(|a| {
            let anchor = first_post
                .get(&a)
                .copied()
                .unwrap_or_else(|| day_start(targets[join_day[a]].0).micros() + rng.random_range(0..86_400_000_000i64));
            let created = anchor - rng.random_range(1..3_600_000_000i64);
            let agent = RemoteAgent {
                id: agent_ids[a].clone(),
                name: names[a].clone(),
                description: rng.random_bool(0.6).then(|| text::words(&mut rng, 8)),
                karma: rng.random_range(0..(weights[a] as i64 * 10 + 10)),
                follower_count: rng.random_range(0..200),
                following_count: rng.random_range(0..100),
                is_claimed: rng.random_bool(0.7),
                owner_x_handle: rng.random_bool(0.4).then(|| format!("@{}", names[a])),
                created_at: Some(stamp(created)),
                avatar_url: None,
            };
            (created, agent)
        })
        .collect();
    agents.sort_by(|x, y| x.0.cmp(&y.0).then_with(|| x.1.id.cmp(&y.1.id)));
    let agents: Vec<RemoteAgent> = agents.into_iter().map(|(_, a)| a).collect();

    let mut per_submolt: HashMap<&str, u64> = HashMap::new();
    for p in &posts {
        *per_submolt.entry(p.submolt.as_str()).or_default() += 1;
    }
    let sub_created = stamp(start_us - 30 * 86_400_000_000);
    let submolts: Vec<RemoteSubmolt> = submolt_names
        .iter()
        .map(|name| RemoteSubmolt {
            name: name.clone(),
            display_name: name[..1].to_uppercase() + &name[1..],
            description: Some(format!("Discussion about {name}")),
            subscriber_count: per_submolt.get(name.as_str()).copied().unwrap_or(0) * 3,
            post_count: per_submolt.get(name.as_str()).copied().unwrap_or(0),
            created_at: Some(sub_created.clone()),
            avatar_url: None,
            banner_url: None,
        })
        .collect();

    // Labels computed from the data actually produced.
    let mut truth = GroundTruth::default();
    let post_ids: Vec<&str> = posts.iter().map(|p| p.id.as_str()).collect();
    truth.set(
        FLAG_DUPLICATE,
        keys_seen_twice(posts.iter().map(|p| (p.agent_name.as_str(), p.title.as_str())), &post_ids),
    );
    let comment_ids: Vec<&str> = comments.iter().map(|c| c.id.as_str()).collect();
    truth.set(
        FLAG_BOT_COMMENT,
        keys_seen_twice(comments.iter().map(|c| (c.agent_name.as_str(), c.content.as_str())), &comment_ids),
    );
    truth.set(FLAG_INJECTION, inj);
    truth.set(FLAG_CRYPTO, cry);
    truth.set(FLAG_PUMP_DUMP, pump);
    truth.set(FLAG_NEAR_DUPLICATE, near);
    truth.set(FLAG_MANIPULATION, manip);
    truth.set(FLAG_SELF_COMMENT, selfc);
    truth.set(FLAG_DANGLING, dang);
    truth.duplicate_pairs = dup_pairs;
    for p in &posts {
        *truth.agent_post_counts.entry(p.agent_id.clone()).or_default() += 1;
    }

    let corpus = Corpus { config: config.clone(), agents, posts, comments, submolts };
    Ok((corpus, truth))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), SimError> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, SimError> {
    let file = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| SimError::Decode {
            file: file.clone(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

pub const TRUTH_FILE: &str = "truth.json";
pub const CONFIG_FILE: &str = "config.json";

impl Corpus {
    /// Writes line-delimited records, the config and the truth summary.
    pub fn write_dir(&self, dir: &Path, truth: &GroundTruth) -> Result<(), SimError> {
        std::fs::create_dir_all(dir)?;
        write_jsonl(&dir.join("agents.jsonl"), &self.agents)?;
        write_jsonl(&dir.join("posts.jsonl"), &self.posts)?;
        write_jsonl(&dir.join("comments.jsonl"), &self.comments)?;
        write_jsonl(&dir.join("submolts.jsonl"), &self.submolts)?;
        std::fs::write(dir.join(CONFIG_FILE), serde_json::to_string_pretty(&self.config)?)?;
        std::fs::write(dir.join(TRUTH_FILE), serde_json::to_string_pretty(truth)?)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<(Corpus, GroundTruth), SimError> {
        let config: SimConfig = serde_json::from_str(&std::fs::read_to_string(dir.join(CONFIG_FILE))?)?;
        let truth: GroundTruth = serde_json::from_str(&std::fs::read_to_string(dir.join(TRUTH_FILE))?)?;
        let corpus = Corpus {
            config,
            agents: read_jsonl(&dir.join("agents.jsonl"))?,
            posts: read_jsonl(&dir.join("posts.jsonl"))?,
            comments: read_jsonl(&dir.join("comments.jsonl"))?,
            submolts: read_jsonl(&dir.join("submolts.jsonl"))?,
        };
        Ok((corpus, truth))
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty() && self.posts.is_empty() && self.comments.is_empty()
    }
}

/// Creation instant in microseconds; simulator timestamps always parse.
pub(crate) fn created_micros(created_at: &str) -> i64 {
    parse_timestamp(created_at).map(|t| t.micros()).unwrap_or(i64::MIN)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig {
            agent_count: 200,
            day_count: 5,
            base_daily_posts: 400,
            spike_days: vec![SpikeDay { date: "2026-01-29".into(), posts: 1_200 }],
            injection_rate: 0.01,
            ..SimConfig::default()
        }
    }

    #[test]
    fn empty_config_gives_empty_corpus() {
        let cfg = SimConfig {
            agent_count: 0,
            base_daily_posts: 0,
            spike_days: vec![],
            dangling_comments: 0,
            ..SimConfig::default()
        };
        let (c, t) = generate_corpus(&cfg).unwrap();
        assert!(c.is_empty());
        assert!(t.counts.values().all(|v| *v == 0));
    }

    #[test]
    fn zero_agents_with_posts_is_rejected() {
        let cfg = SimConfig { agent_count: 0, ..SimConfig::default() };
        assert!(matches!(generate_corpus(&cfg), Err(SimError::Config(_))));
    }

    #[test]
    fn rates_outside_unit_interval_are_rejected() {
        let cfg = SimConfig { crypto_rate: 1.5, ..small() };
        assert!(generate_corpus(&cfg).is_err());
        let cfg = SimConfig { activity_tail_exponent: 1.0, ..small() };
        assert!(generate_corpus(&cfg).is_err());
    }

    #[test]
    fn same_seed_same_bytes() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let (a, ta) = generate_corpus(&small()).unwrap();
        let (b, tb) = generate_corpus(&small()).unwrap();
        a.write_dir(dir_a.path(), &ta).unwrap();
        b.write_dir(dir_b.path(), &tb).unwrap();
        for f in ["agents.jsonl", "posts.jsonl", "comments.jsonl", "submolts.jsonl", "truth.json"] {
            assert_eq!(std::fs::read(dir_a.path().join(f)).unwrap(), std::fs::read(dir_b.path().join(f)).unwrap());
        }
        let (c, tc) = Corpus::read_dir(dir_a.path()).unwrap();
        assert_eq!(c, a);
        assert_eq!(tc, ta);
        let (other, _) = generate_corpus(&SimConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(other.posts, a.posts);
    }

    #[test]
    fn volumes_follow_daily_targets() {
        let cfg = small();
        let (c, t) = generate_corpus(&cfg).unwrap();
        assert_eq!(c.posts.len(), 4 * 400 + 1_200);
        assert_eq!(c.comments.len(), (2_800.0f64 * 0.4).round() as usize + cfg.dangling_comments);
        let mut times: Vec<i64> = c.posts.iter().map(|p| created_micros(&p.created_at)).collect();
        let n = times.len();
        times.dedup();
        assert_eq!(times.len(), n, "creation instants are unique");
        assert!(times.windows(2).all(|w| w[0] < w[1]));
        for (flag, ids) in &t.flagged {
            assert_eq!(t.counts[flag], ids.len() as u64);
        }
        assert_eq!(t.agent_post_counts.values().sum::<u64>(), c.posts.len() as u64);
    }

    #[test]
    fn truth_matches_reference_scan() {
        let cfg = SimConfig {
            seed: 7,
            agent_count: 1_000,
            day_count: 4,
            base_daily_posts: 2_500,
            spike_days: vec![],
            ..SimConfig::default()
        };
        let (c, t) = generate_corpus(&cfg).unwrap();
        assert_eq!(c.posts.len(), 10_000);
        let scan = |stamps: &[&str]| -> Vec<String> {
            c.posts.iter().filter(|p| stamps.iter().any(|s| p.content.contains(s))).map(|p| p.id.clone()).collect()
        };
        assert_eq!(scan(text::INJECTION_STAMPS), t.ids(FLAG_INJECTION));
        assert_eq!(scan(text::PUMP_STAMPS), t.ids(FLAG_PUMP_DUMP));
        let crypto: Vec<&str> = text::CRYPTO_STAMPS.iter().chain(text::PUMP_STAMPS).copied().collect();
        assert_eq!(scan(&crypto), t.ids(FLAG_CRYPTO));
        assert!(t.count(FLAG_INJECTION) > 0);
        let manip: Vec<String> = c
            .comments
            .iter()
            .filter(|x| text::MANIPULATION_STAMPS.iter().any(|s| x.content.contains(s)))
            .map(|x| x.id.clone())
            .collect();
        assert_eq!(manip, t.ids(FLAG_MANIPULATION));
    }

    #[test]
    fn activity_is_heavy_tailed() {
        let (_, t) = generate_corpus(&SimConfig::default()).unwrap();
        let mut counts: Vec<u64> = t.agent_post_counts.values().copied().collect();
        counts.sort();
        let median = counts[counts.len() / 2];
        let max = *counts.last().unwrap();
        assert!(max > 20 * median, "max {max} median {median}");
    }
}
