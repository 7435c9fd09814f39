//! Consistency checks, descriptive statistics and static report output.
//!
//! Every reported number lives in a [`ReportTable`]. The CSV files and the
//! HTML document are both rendered from the same tables, so the CSV stays
//! the single source of truth.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotator::AnnotationSummary;
use crate::model::{
    content_length, format_date, parse_timestamp, AgentRecord, CommentRecord, PostRecord, SubmoltRecord,
};
use crate::replygraph::GraphMetrics;
use crate::riskscore::{RiskCaps, Tier, TierCensus};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub comment_total: u64,
    pub linked_comments: u64,
    pub orphan_comments: u64,
    /// Posts whose platform-reported comment count is positive.
    pub posts_claiming_comments: u64,
    /// Claiming posts with at least one archived comment.
    pub posts_with_archived_comments: u64,
    pub reverse_coverage: f64,
}

pub fn check_consistency(posts: &[PostRecord], comments: &[CommentRecord]) -> ConsistencyReport {
    let ids: HashSet<&str> = posts.iter().map(|p| p.id.as_str()).collect();
    let mut with_comments: HashSet<&str> = HashSet::new();
    let mut linked = 0u64;
    for c in comments {
        if ids.contains(c.post_id.as_str()) {
            linked += 1;
            with_comments.insert(c.post_id.as_str());
        }
    }
    let claiming: Vec<&PostRecord> = posts.iter().filter(|p| p.comment_count > 0).collect();
    let covered = claiming.iter().filter(|p| with_comments.contains(p.id.as_str())).count() as u64;
    ConsistencyReport {
        comment_total: comments.len() as u64,
        linked_comments: linked,
        orphan_comments: comments.len() as u64 - linked,
        posts_claiming_comments: claiming.len() as u64,
        posts_with_archived_comments: covered,
        reverse_coverage: ratio(covered as f64, claiming.len() as f64),
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Nearest-rank percentile of ascending `sorted`; 0 when empty.
pub fn nearest_rank(sorted: &[u64], pct: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    /// Rows with `dump_date <= acquisition_date` are pre-acquisition.
    pub acquisition_date: NaiveDate,
    /// Partition fallback for rows whose creation time does not parse.
    pub export_date: NaiveDate,
    /// Spike days exceed mean + `spike_sigma` standard deviations of new agents per day.
    pub spike_sigma: f64,
    pub engagement_threshold: i64,
}

pub const ACQUISITION_DATE: &str = "2026-03-10";

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            acquisition_date: NaiveDate::from_ymd_opt(2026, 3, 10).expect("valid date"),
            export_date: chrono::Utc::now().date_naive(),
            spike_sigma: 3.0,
            engagement_threshold: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LengthSummary {
    pub count: u64,
    pub median: u64,
    pub mean: f64,
    pub max: u64,
    pub count_at_max: u64,
}

impl LengthSummary {
    pub fn from_lengths(mut v: Vec<u64>) -> Self {
        v.sort_unstable();
        let max = v.last().copied().unwrap_or(0);
        LengthSummary {
            count: v.len() as u64,
            median: nearest_rank(&v, 50.0),
            mean: ratio(v.iter().sum::<u64>() as f64, v.len() as f64),
            max,
            count_at_max: if v.is_empty() { 0 } else { v.iter().rev().take_while(|&&x| x == max).count() as u64 },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PostCountSummary {
    pub posting_agents: u64,
    pub share_posting_once: f64,
    pub median: u64,
    pub mean: f64,
    pub max: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DailyRow {
    pub date: String,
    pub posts: u64,
    pub comments: u64,
    /// Agents whose first post falls on this date.
    pub new_agents: u64,
    pub spike: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub pre: u64,
    pub post: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsBundle {
    pub totals: BTreeMap<String, u64>,
    pub post_counts: PostCountSummary,
    /// `(x, fraction of posting agents with at least x posts)` at each distinct x.
    pub ccdf: Vec<(u64, f64)>,
    pub hourly_posts: [u64; 24],
    pub hourly_share: [f64; 24],
    /// Descending by posts, then by name.
    pub submolt_ranking: Vec<(String, u64)>,
    pub post_lengths: LengthSummary,
    pub comment_lengths: LengthSummary,
    pub daily: Vec<DailyRow>,
    pub spike_threshold: f64,
    pub spike_days: Vec<String>,
    pub new_agents_per_day_mean: f64,
    pub mean_hourly_posting_rate: f64,
    pub max_score: i64,
    pub engagement_threshold: i64,
    pub posts_above_threshold: u64,
    pub acquisition_date: String,
    pub acquisition_split: BTreeMap<String, SplitCounts>,
}

fn dump_date(created: Option<&str>, fallback: NaiveDate) -> NaiveDate {
    created.and_then(|c| parse_timestamp(c).ok()).map_or(fallback, |t| t.utc_date())
}

fn split(dates: impl Iterator<Item = NaiveDate>, cut: NaiveDate) -> SplitCounts {
    let mut s = SplitCounts::default();
    for d in dates {
        if d <= cut {
            s.pre += 1;
        } else {
            s.post += 1;
        }
    }
    s
}

fn post_stats(posts: &[PostRecord], cfg: &StatsConfig) -> StatsBundle {
    let mut b = StatsBundle::default();
    let mut per_agent: HashMap<&str, u64> = HashMap::new();
    let mut first_post: HashMap<&str, NaiveDate> = HashMap::new();
    let mut per_submolt: HashMap<&str, u64> = HashMap::new();
    let mut per_day: BTreeMap<NaiveDate, u64> = BTreeMap::new();
    let (mut min_t, mut max_t) = (None, None);
    for p in posts {
        *per_agent.entry(&p.agent_id).or_default() += 1;
        *per_submolt.entry(&p.submolt).or_default() += 1;
        if let Some(t) = p.created() {
            b.hourly_posts[t.utc_hour() as usize] += 1;
            let d = t.utc_date();
            *per_day.entry(d).or_default() += 1;
            first_post.entry(&p.agent_id).and_modify(|f| *f = (*f).min(d)).or_insert(d);
            min_t = Some(min_t.map_or(t, |m: crate::model::Timestamp| m.min(t)));
            max_t = Some(max_t.map_or(t, |m: crate::model::Timestamp| m.max(t)));
        }
    }
    let dated: u64 = b.hourly_posts.iter().sum();
    for h in 0..24 {
        b.hourly_share[h] = ratio(b.hourly_posts[h] as f64, dated as f64);
    }

    let mut counts: Vec<u64> = per_agent.values().copied().collect();
    counts.sort_unstable();
    let n = counts.len();
    b.post_counts = PostCountSummary {
        posting_agents: n as u64,
        share_posting_once: ratio(counts.iter().filter(|&&c| c == 1).count() as f64, n as f64),
        median: nearest_rank(&counts, 50.0),
        mean: ratio(posts.len() as f64, n as f64),
        max: counts.last().copied().unwrap_or(0),
    };
    let mut i = 0;
    while i < n {
        b.ccdf.push((counts[i], (n - i) as f64 / n as f64));
        while i < n && counts[i] == b.ccdf.last().expect("just pushed").0 {
            i += 1;
        }
    }

    let mut ranking: Vec<(String, u64)> = per_submolt.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    ranking.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    b.submolt_ranking = ranking;
    b.post_lengths = LengthSummary::from_lengths(posts.iter().map(|p| content_length(&p.content)).collect());

    let mut new_agents: BTreeMap<NaiveDate, u64> = BTreeMap::new();
    for d in first_post.values() {
        *new_agents.entry(*d).or_default() += 1;
    }
    if let (Some(first), Some(last)) = (per_day.keys().next().copied(), per_day.keys().last().copied()) {
        let mut d = first;
        while d <= last {
            b.daily.push(DailyRow {
                date: format_date(d),
                posts: per_day.get(&d).copied().unwrap_or(0),
                comments: 0,
                new_agents: new_agents.get(&d).copied().unwrap_or(0),
                spike: false,
            });
            d = d.succ_opt().expect("date in range");
        }
    }
    if let (Some(a), Some(z)) = (min_t, max_t) {
        let hours = z.duration_since(&a).num_microseconds().unwrap_or(i64::MAX) as f64 / 3.6e9;
        b.mean_hourly_posting_rate = ratio(dated as f64, hours);
    }
    b.max_score = posts.iter().map(|p| p.score).max().unwrap_or(0);
    b.engagement_threshold = cfg.engagement_threshold;
    b.posts_above_threshold = posts.iter().filter(|p| p.score > cfg.engagement_threshold).count() as u64;
    b
}

/// Descriptive statistics over a corpus. An empty corpus yields a bundle of
/// zeros.
pub fn descriptive_stats(
    posts: &[PostRecord],
    comments: &[CommentRecord],
    agents: &[AgentRecord],
    submolts: &[SubmoltRecord],
    cfg: &StatsConfig,
) -> StatsBundle {
    if posts.is_empty() && comments.is_empty() && agents.is_empty() && submolts.is_empty() {
        tracing::warn!("empty corpus; statistics are all zero");
    }
    let (mut b, (comment_lengths, comment_days)) = rayon::join(
        || post_stats(posts, cfg),
        || {
            let lengths = LengthSummary::from_lengths(comments.iter().map(|c| content_length(&c.content)).collect());
            let mut days: BTreeMap<String, u64> = BTreeMap::new();
            for d in comments.iter().filter_map(|c| c.created()).map(|t| format_date(t.utc_date())) {
                *days.entry(d).or_default() += 1;
            }
            (lengths, days)
        },
    );
    b.comment_lengths = comment_lengths;
    for row in &mut b.daily {
        row.comments = comment_days.get(&row.date).copied().unwrap_or(0);
    }

    let days = b.daily.len() as f64;
    if days > 0.0 {
        let mean = b.daily.iter().map(|r| r.new_agents as f64).sum::<f64>() / days;
        let var = b.daily.iter().map(|r| (r.new_agents as f64 - mean).powi(2)).sum::<f64>() / days;
        b.new_agents_per_day_mean = mean;
        b.spike_threshold = mean + cfg.spike_sigma * var.sqrt();
        for row in &mut b.daily {
            row.spike = row.new_agents as f64 > b.spike_threshold;
        }
        b.spike_days = b.daily.iter().filter(|r| r.spike).map(|r| r.date.clone()).collect();
    }

    b.totals =
        [("agents", agents.len()), ("posts", posts.len()), ("comments", comments.len()), ("submolts", submolts.len())]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v as u64))
            .collect();

    let cut = cfg.acquisition_date;
    let fb = cfg.export_date;
    b.acquisition_date = format_date(cut);
    b.acquisition_split = [
        ("agents", split(agents.iter().map(|a| a.first_seen_at.utc_date()), cut)),
        ("posts", split(posts.iter().map(|p| dump_date(Some(&p.created_at), fb)), cut)),
        ("comments", split(comments.iter().map(|c| dump_date(Some(&c.created_at), fb)), cut)),
        ("submolts", split(submolts.iter().map(|s| s.first_seen_at.utc_date()), cut)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    b
}

/// One statistic family: a CSV file and an HTML table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportTable {
    pub name: &'static str,
    pub title: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ReportTable {
    fn new(name: &'static str, title: &'static str, header: &[&str]) -> Self {
        ReportTable { name, title, header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn metric(&mut self, name: &str, value: impl ToString) {
        self.rows.push(vec![name.to_string(), value.to_string()]);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn to_csv(&self) -> Result<String, ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv of utf-8 input is utf-8"))
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReportInputs<'a> {
    pub stats: Option<&'a StatsBundle>,
    pub consistency: Option<&'a ConsistencyReport>,
    pub annotations: Option<&'a AnnotationSummary>,
    pub risk: Option<(&'a TierCensus, &'a RiskCaps)>,
    pub graph: Option<&'a GraphMetrics>,
}

pub fn build_tables(inp: &ReportInputs<'_>) -> Vec<ReportTable> {
    let empty_stats = StatsBundle::default();
    let s = inp.stats.unwrap_or(&empty_stats);
    let empty_consistency = ConsistencyReport::default();
    let c = inp.consistency.unwrap_or(&empty_consistency);
    let mut out = Vec::new();

    let mut t = ReportTable::new("totals", "Rows per table", &["table", "rows"]);
    for (k, v) in &s.totals {
        t.metric(k, v);
    }
    out.push(t);

    let mut t = ReportTable::new("consistency", "Referential consistency", &["metric", "value"]);
    t.metric("comment_total", c.comment_total);
    t.metric("linked_comments", c.linked_comments);
    t.metric("orphan_comments", c.orphan_comments);
    t.metric("posts_claiming_comments", c.posts_claiming_comments);
    t.metric("posts_with_archived_comments", c.posts_with_archived_comments);
    t.metric("reverse_coverage", c.reverse_coverage);
    out.push(t);

    let mut t = ReportTable::new("agent_posts", "Posts per agent", &["metric", "value"]);
    let pc = &s.post_counts;
    t.metric("posting_agents", pc.posting_agents);
    t.metric("share_posting_once", pc.share_posting_once);
    t.metric("median", pc.median);
    t.metric("mean", pc.mean);
    t.metric("max", pc.max);
    out.push(t);

    let mut t = ReportTable::new("ccdf", "Posts-per-agent CCDF", &["posts", "fraction_at_least"]);
    for (x, f) in &s.ccdf {
        t.push(vec![x.to_string(), f.to_string()]);
    }
    out.push(t);

    let mut t = ReportTable::new("hourly", "Posts by UTC hour", &["hour", "posts", "share"]);
    for h in 0..24 {
        t.push(vec![h.to_string(), s.hourly_posts[h].to_string(), s.hourly_share[h].to_string()]);
    }
    out.push(t);

    let mut t = ReportTable::new("submolts", "Submolts by posts", &["rank", "submolt", "posts"]);
    for (i, (name, n)) in s.submolt_ranking.iter().enumerate() {
        t.push(vec![(i + 1).to_string(), name.clone(), n.to_string()]);
    }
    out.push(t);

    let mut t = ReportTable::new(
        "content_length",
        "Content length (characters)",
        &["kind", "count", "median", "mean", "max", "count_at_max"],
    );
    for (kind, l) in [("posts", &s.post_lengths), ("comments", &s.comment_lengths)] {
        t.push(vec![
            kind.into(),
            l.count.to_string(),
            l.median.to_string(),
            l.mean.to_string(),
            l.max.to_string(),
            l.count_at_max.to_string(),
        ]);
    }
    out.push(t);

    let mut t = ReportTable::new("daily", "Daily timeline", &["date", "posts", "comments", "new_agents", "spike"]);
    for r in &s.daily {
        t.push(vec![
            r.date.clone(),
            r.posts.to_string(),
            r.comments.to_string(),
            r.new_agents.to_string(),
            r.spike.to_string(),
        ]);
    }
    out.push(t);

    let mut t = ReportTable::new("activity", "Activity and engagement", &["metric", "value"]);
    t.metric("new_agents_per_day_mean", s.new_agents_per_day_mean);
    t.metric("spike_threshold", s.spike_threshold);
    t.metric("spike_days", s.spike_days.len());
    t.metric("mean_hourly_posting_rate", s.mean_hourly_posting_rate);
    t.metric("max_score", s.max_score);
    t.metric("engagement_threshold", s.engagement_threshold);
    t.metric("posts_above_threshold", s.posts_above_threshold);
    out.push(t);

    let mut t = ReportTable::new("acquisition", "Acquisition split by dump_date", &["table", "pre", "post"]);
    for (k, v) in &s.acquisition_split {
        t.push(vec![k.clone(), v.pre.to_string(), v.post.to_string()]);
    }
    out.push(t);

    let mut t = ReportTable::new("annotations", "Content annotations", &["metric", "value"]);
    if let Some(a) = inp.annotations {
        for (k, v) in [
            ("posts", a.posts),
            ("comments", a.comments),
            ("injection_posts", a.injection),
            ("injection_agents", a.injection_agents),
            ("crypto_posts", a.crypto),
            ("pump_dump_posts", a.pump_dump),
            ("duplicate_spam_posts", a.duplicate_spam),
            ("ideological_posts", a.ideological),
            ("bot_comments", a.bot_comments),
            ("manipulation_comments", a.manipulation),
            ("api_injection_comments", a.api_injection),
            ("near_dup_clusters", a.near_dup_clusters),
            ("near_dup_posts", a.near_dup_posts),
            ("sentiment_positive", a.sentiment.positive),
            ("sentiment_neutral", a.sentiment.neutral),
            ("sentiment_negative", a.sentiment.negative),
            ("sentiment_failures", a.sentiment.failures),
        ] {
            t.metric(k, v);
        }
        t.metric("sentiment_mean", a.sentiment.mean);
    }
    out.push(t);

    let mut t = ReportTable::new("risk_tiers", "Risk tier census", &["tier", "agents"]);
    if let Some((census, caps)) = inp.risk {
        for tier in Tier::ALL {
            t.metric(tier.as_str(), census.get(tier));
        }
        t.metric("eligible_total", census.total());
        t.metric("cap_manipulation_comments", caps.manipulation_comments);
        t.metric("cap_posts_per_day", caps.posts_per_day);
    }
    out.push(t);

    let mut t = ReportTable::new("graph", "Reply graph", &["metric", "value"]);
    if let Some(g) = inp.graph {
        t.metric("node_count", g.node_count);
        t.metric("edge_count", g.edge_count);
        t.metric("density", g.density);
        t.metric("reciprocal_pairs", g.reciprocal_pairs);
        t.metric("adjacent_pairs", g.adjacent_pairs);
        t.metric("reciprocity_rate", g.reciprocity_rate);
        t.metric("community_count", g.community_count);
        for (i, size) in g.community_sizes.iter().take(10).enumerate() {
            t.metric(&format!("community_{}_size", i + 1), size);
        }
        t.metric("modularity", g.modularity);
        t.metric("organic_ratio", g.organic_ratio);
        t.metric("self_rate", g.self_rate);
        t.metric("bot_rate", g.bot_rate);
    }
    out.push(t);
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Inline SVG bar chart of one numeric column.
fn bar_chart(t: &ReportTable, label_col: usize, value_col: usize) -> String {
    let values: Vec<f64> = t.rows.iter().map(|r| r[value_col].parse().unwrap_or(0.0)).collect();
    let max = values.iter().copied().fold(0.0, f64::max);
    let (w, h) = (720.0, 160.0);
    let bw = if values.is_empty() { 0.0 } else { w / values.len() as f64 };
    let mut svg = format!(r#"<svg class="chart" viewBox="0 0 {w} {h}" width="{w}" height="{h}" role="img">"#);
    for (i, v) in values.iter().enumerate() {
        let bh = if max > 0.0 { v / max * (h - 10.0) } else { 0.0 };
        let _ = write!(
            svg,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}"><title>{}</title></rect>"#,
            i as f64 * bw + 1.0,
            h - bh,
            (bw - 2.0).max(1.0),
            bh,
            escape(&format!("{}: {}", t.rows[i][label_col], t.rows[i][value_col]))
        );
    }
    svg.push_str("</svg>");
    svg
}

pub fn render_html(tables: &[ReportTable]) -> String {
    let mut html = String::from(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>Archive report</title>\n<style>\n\
         body{font-family:sans-serif;margin:2em;max-width:64em}table{border-collapse:collapse;margin-bottom:1.5em}\n\
         td,th{border:1px solid #bbb;padding:2px 8px;text-align:right}th{background:#eee}\n\
         .chart rect{fill:#4a78a8}\n</style>\n</head>\n<body>\n<h1>Archive report</h1>\n",
    );
    for t in tables {
        let _ = writeln!(html, "<section id=\"{}\">\n<h2>{}</h2>", t.name, escape(t.title));
        match t.name {
            "hourly" => html.push_str(&bar_chart(t, 0, 1)),
            "daily" => html.push_str(&bar_chart(t, 0, 1)),
            _ => {}
        }
        let _ = writeln!(html, "<table data-source=\"{}\">", t.file_name());
        html.push_str("<tr>");
        for h in &t.header {
            let _ = write!(html, "<th>{}</th>", escape(h));
        }
        html.push_str("</tr>\n");
        for (i, r) in t.rows.iter().enumerate() {
            html.push_str("<tr>");
            for (j, v) in r.iter().enumerate() {
                let _ = write!(html, "<td data-row=\"{i}\" data-col=\"{j}\">{}</td>", escape(v));
            }
            html.push_str("</tr>\n");
        }
        html.push_str("</table>\n</section>\n");
    }
    html.push_str("</body>\n</html>\n");
    html
}

pub const HTML_FILE: &str = "report.html";

/// Writes one CSV per table plus `report.html` into `out`. On failure no
/// new files are left behind.
pub fn emit_report(inp: &ReportInputs<'_>, out: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ReportError::Io { path, source }
    };
    let tables = build_tables(inp);
    let mut files: Vec<(String, String)> = Vec::new();
    for t in &tables {
        files.push((t.file_name(), t.to_csv()?));
    }
    files.push((HTML_FILE.to_string(), render_html(&tables)));

    fs::create_dir_all(out).map_err(io(out))?;
    let staging = out.join(format!(".report-staging-{}", std::process::id()));
    let result = (|| {
        fs::create_dir_all(&staging).map_err(io(&staging))?;
        for (name, body) in &files {
            let p = staging.join(name);
            fs::write(&p, body).map_err(io(&p))?;
        }
        let mut written = Vec::new();
        for (name, _) in &files {
            let dest = out.join(name);
            if let Err(e) = fs::rename(staging.join(name), &dest) {
                for w in &written {
                    let _ = fs::remove_file(w);
                }
                return Err(io(&dest)(e));
            }
            written.push(dest);
        }
        Ok(written)
    })();
    let _ = fs::remove_dir_all(&staging);
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Timestamp;

    fn post(id: &str, agent: &str, created: &str, comments: u64) -> PostRecord {
        PostRecord {
            id: id.into(),
            agent_id: agent.into(),
            agent_name: agent.into(),
            submolt: "general".into(),
            title: "t".into(),
            content: "hello".into(),
            url: None,
            score: 0,
            comment_count: comments,
            created_at: created.into(),
            fetched_at: Timestamp::epoch(),
            is_pinned: false,
        }
    }

    fn comment(id: &str, post: &str) -> CommentRecord {
        CommentRecord {
            id: id.into(),
            post_id: post.into(),
            agent_id: "c".into(),
            agent_name: "c".into(),
            parent_id: None,
            content: "hey".into(),
            score: 0,
            created_at: "2026-02-01T00:00:00+00:00".into(),
            fetched_at: Timestamp::epoch(),
        }
    }

    #[test]
    fn nearest_rank_percentiles() {
        assert_eq!(nearest_rank(&[], 50.0), 0);
        assert_eq!(nearest_rank(&[7], 50.0), 7);
        assert_eq!(nearest_rank(&[1, 2, 3, 4], 50.0), 2);
        assert_eq!(nearest_rank(&[1, 2, 3, 4, 5], 50.0), 3);
        assert_eq!(nearest_rank(&[1, 2, 3, 4, 5], 100.0), 5);
    }

    #[test]
    fn consistency_counts() {
        let posts = [
            post("p1", "a", "2026-02-01T00:00:00Z", 2),
            post("p2", "a", "2026-02-01T00:00:00Z", 1),
            post("p3", "a", "2026-02-01T00:00:00Z", 0),
        ];
        let comments = [comment("c1", "p1"), comment("c2", "p3"), comment("c3", "gone")];
        let r = check_consistency(&posts, &comments);
        assert_eq!((r.linked_comments, r.orphan_comments), (2, 1));
        assert_eq!((r.posts_claiming_comments, r.posts_with_archived_comments), (2, 1));
        assert_eq!(r.reverse_coverage, 0.5);
    }

    #[test]
    fn single_post_hour() {
        let b = descriptive_stats(
            &[post("p", "a", "2026-02-01T13:05:00+00:00", 0)],
            &[],
            &[],
            &[],
            &StatsConfig::default(),
        );
        assert_eq!(b.hourly_share[13], 1.0);
        assert_eq!(b.hourly_share.iter().sum::<f64>(), 1.0);
        assert_eq!(b.mean_hourly_posting_rate, 0.0);
    }

    #[test]
    fn empty_corpus_is_zero() {
        let b = descriptive_stats(&[], &[], &[], &[], &StatsConfig::default());
        assert_eq!(b.post_counts, PostCountSummary::default());
        assert!(b.daily.is_empty() && b.ccdf.is_empty());
        assert_eq!(b.hourly_share, [0.0; 24]);
    }

    #[test]
    fn acquisition_boundary_is_inclusive() {
        let cfg = StatsConfig { export_date: NaiveDate::from_ymd_opt(2026, 4, 1).unwrap(), ..Default::default() };
        let posts = [
            post("a", "x", "2026-03-10T23:59:59+00:00", 0),
            post("b", "x", "2026-03-11T00:00:00+00:00", 0),
            post("c", "x", "garbage", 0),
        ];
        let b = descriptive_stats(&posts, &[], &[], &[], &cfg);
        assert_eq!(b.acquisition_split["posts"], SplitCounts { pre: 1, post: 2 });
    }

    #[test]
    fn ccdf_and_post_counts() {
        let posts = [
            post("1", "a", "2026-02-01T00:00:00Z", 0),
            post("2", "b", "2026-02-01T00:00:00Z", 0),
            post("3", "b", "2026-02-02T00:00:00Z", 0),
            post("4", "c", "2026-02-03T00:00:00Z", 0),
            post("5", "c", "2026-02-03T00:00:00Z", 0),
            post("6", "c", "2026-02-03T00:00:00Z", 0),
        ];
        let b = descriptive_stats(&posts, &[], &[], &[], &StatsConfig::default());
        assert_eq!(b.ccdf, vec![(1, 1.0), (2, 2.0 / 3.0), (3, 1.0 / 3.0)]);
        assert_eq!(b.post_counts.median, 2);
        assert_eq!(b.post_counts.mean, 2.0);
        assert_eq!(b.post_counts.share_posting_once, 1.0 / 3.0);
        assert_eq!(b.daily.iter().map(|d| d.new_agents).collect::<Vec<_>>(), vec![2, 0, 1]);
        assert_eq!(b.mean_hourly_posting_rate, 6.0 / 48.0);
    }

    #[test]
    fn empty_report_has_zero_tables() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&ReportInputs::default(), dir.path()).unwrap();
        assert!(files.iter().any(|f| f.ends_with(HTML_FILE)));
        let consistency = fs::read_to_string(dir.path().join("consistency.csv")).unwrap();
        assert!(consistency.contains("orphan_comments,0"));
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), files.len());
    }

    #[test]
    fn failed_emit_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        fs::create_dir_all(&out).unwrap();
        // A directory where a CSV must go makes the final rename fail.
        fs::create_dir_all(out.join("hourly.csv/x")).unwrap();
        assert!(emit_report(&ReportInputs::default(), &out).is_err());
        let left: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(left, vec![std::ffi::OsString::from("hourly.csv")]);
    }
}
