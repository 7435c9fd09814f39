//! `observatory`: simulate, collect, export, annotate, score, graph, report.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use observatory_core::annotator::{
    AnnotationSet, AnnotationSummary, Annotator, CommentAnnotation, NearDupClusters, PatternSet, PostAnnotation,
};
use observatory_core::collector::{Clock, Collector, Feed, HttpSource, ManualClock, PollSchedule, SystemClock};
use observatory_core::exporter::{self, list_partitions, read_partition, run_export, spec_for, ExportOptions};
use observatory_core::model::{
    format_date, parse_date, AgentRecord, CommentRecord, PostRecord, SubmoltRecord, Timestamp,
};
use observatory_core::replygraph::{
    build_graph, detect_communities, filtered_subgraph, graph_metrics, GraphMetrics, DEFAULT_MIN_WEIGHT, DEFAULT_TOP_K,
};
use observatory_core::reports::{check_consistency, descriptive_stats, emit_report, ReportInputs, StatsConfig};
use observatory_core::riskscore::{score_population, RiskCaps, TierCensus, INDICATOR_NAMES};
use observatory_core::simulator::{generate_corpus, Corpus, SimConfig, SimPlatform, SpikeDay};
use observatory_core::store::{OpenMode, Store};
use observatory_core::table::{Record, TableName};

#[derive(Parser)]
#[command(name = "observatory", version, about = "Passive archive pipeline for an agent-only social platform")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with ground truth.
    Simulate(SimulateArgs),
    /// Poll a platform source into the store.
    Collect(CollectArgs),
    /// Export store tables to date-partitioned files.
    Export(ExportArgs),
    /// Flag exported posts and comments.
    Annotate(AnnotateArgs),
    /// Per-agent risk scores.
    Score(ScoreArgs),
    /// Reply-graph metrics, edge list and communities.
    Graph(GraphArgs),
    /// Statistics, consistency checks and the static report.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    /// JSON file with any subset of the configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    agent_count: Option<usize>,
    #[arg(long)]
    day_count: Option<usize>,
    #[arg(long)]
    start_date: Option<String>,
    #[arg(long)]
    base_daily_posts: Option<u64>,
    /// `DATE:POSTS`, repeatable. Replaces the configured spike days.
    #[arg(long = "spike-day", value_parser = parse_spike)]
    spike_days: Vec<SpikeDay>,
    /// Drop all spike days.
    #[arg(long, conflicts_with = "spike_days")]
    no_spike: bool,
    #[arg(long)]
    activity_tail_exponent: Option<f64>,
    #[arg(long)]
    injection_rate: Option<f64>,
    #[arg(long)]
    crypto_rate: Option<f64>,
    #[arg(long)]
    pump_rate: Option<f64>,
    #[arg(long)]
    duplicate_rate: Option<f64>,
    #[arg(long)]
    manipulation_rate: Option<f64>,
    #[arg(long)]
    bot_comment_rate: Option<f64>,
    #[arg(long)]
    self_comment_rate: Option<f64>,
    #[arg(long)]
    near_duplicate_rate: Option<f64>,
    #[arg(long)]
    comment_to_post_ratio: Option<f64>,
    #[arg(long)]
    dangling_comments: Option<usize>,
    #[arg(long)]
    submolt_count: Option<usize>,
    #[arg(long)]
    rate_limit: Option<u32>,
}

fn parse_spike(s: &str) -> Result<SpikeDay, String> {
    let (date, posts) = s.split_once(':').ok_or("expected DATE:POSTS")?;
    parse_date(date).ok_or_else(|| format!("bad date {date:?}"))?;
    let posts = posts.parse().map_err(|e| format!("bad post count: {e}"))?;
    Ok(SpikeDay { date: date.to_string(), posts })
}

#[derive(Args)]
struct CollectArgs {
    /// `sim:<corpus dir>` or `http:<base url>`.
    #[arg(long)]
    source: String,
    #[arg(long)]
    store: PathBuf,
    /// TOML poll schedule; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seconds to run. For a simulated source this is virtual time from the
    /// corpus start and defaults to the corpus window plus one day.
    #[arg(long)]
    duration: Option<u64>,
    /// Keep paging a simulated source after the window until caught up.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    drain: bool,
    /// HTTP request timeout in seconds.
    #[arg(long, default_value_t = 30)]
    timeout: u64,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to `<out>/state.json`.
    #[arg(long)]
    state: Option<PathBuf>,
    /// `YYYY-MM-DD`; defaults to today (UTC).
    #[arg(long)]
    export_date: Option<String>,
    #[arg(long, value_delimiter = ',')]
    tables: Vec<String>,
    /// Report merge collision counts per table.
    #[arg(long)]
    counters: bool,
}

#[derive(Args)]
struct AnnotateArgs {
    /// Export directory.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Pattern file; the bundled set is used when absent.
    #[arg(long)]
    patterns: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Export directory.
    #[arg(long = "in")]
    input: PathBuf,
    /// Annotation directory; defaults to `<in>/annotations`.
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// TOML file with `manipulation_comments` and/or `posts_per_day`.
    #[arg(long)]
    caps: Option<PathBuf>,
    #[arg(long)]
    manipulation_cap: Option<f64>,
    #[arg(long)]
    frequency_cap: Option<f64>,
}

#[derive(Args)]
struct GraphArgs {
    /// Export directory.
    #[arg(long = "in")]
    input: PathBuf,
    /// Annotation directory; defaults to `<in>/annotations`.
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    top_k: usize,
    #[arg(long, default_value_t = DEFAULT_MIN_WEIGHT)]
    min_weight: u64,
}

#[derive(Args)]
struct ReportArgs {
    /// Export directory.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Output directory of `score`.
    #[arg(long)]
    risk: Option<PathBuf>,
    /// Output directory of `graph`.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "2026-03-10")]
    acquisition_date: String,
    /// Fallback partition date for unparseable timestamps; defaults to today (UTC).
    #[arg(long)]
    export_date: Option<String>,
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Simulate(a) => simulate(a),
        Command::Collect(a) => collect(a),
        Command::Export(a) => export(a),
        Command::Annotate(a) => annotate(a),
        Command::Score(a) => score(a),
        Command::Graph(a) => graph(a),
        Command::Report(a) => report(a),
    }
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg: SimConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SimConfig::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = a.$f.clone() { cfg.$f = v; } )* };
    }
    set!(
        seed,
        agent_count,
        day_count,
        start_date,
        base_daily_posts,
        activity_tail_exponent,
        injection_rate,
        crypto_rate,
        pump_rate,
        duplicate_rate,
        manipulation_rate,
        bot_comment_rate,
        self_comment_rate,
        near_duplicate_rate,
        comment_to_post_ratio,
        dangling_comments,
        submolt_count,
        rate_limit
    );
    if a.no_spike {
        cfg.spike_days.clear();
    } else if !a.spike_days.is_empty() {
        cfg.spike_days = a.spike_days.clone();
    }
    let (corpus, truth) = generate_corpus(&cfg)?;
    corpus.write_dir(&a.out, &truth)?;
    print_json(&serde_json::json!({
        "out": a.out,
        "agents": corpus.agents.len(),
        "posts": corpus.posts.len(),
        "comments": corpus.comments.len(),
        "submolts": corpus.submolts.len(),
        "truth": truth.counts,
    }))
}

fn store_counts(store: &Store) -> Result<BTreeMap<TableName, u64>> {
    TableName::ALL.iter().map(|&t| Ok((t, store.count(t)?))).collect()
}

fn collect(a: CollectArgs) -> Result<()> {
    let schedule = match &a.config {
        Some(p) => PollSchedule::from_path(p)?,
        None => PollSchedule::default(),
    };
    let mut store = Store::open(&a.store, OpenMode::ReadWrite)?;
    let mut collector = Collector::new(schedule.clone(), &store)?;
    let mut cycles = 0u64;
    if let Some(dir) = a.source.strip_prefix("sim:") {
        let (corpus, _) = Corpus::read_dir(Path::new(dir))?;
        let start = corpus.config.window_start()?;
        let end = match a.duration {
            Some(d) => start.add_secs(d as i64),
            None => corpus.config.window_end()?.add_secs(86_400),
        };
        let clock = Arc::new(ManualClock::new(start));
        let sim = SimPlatform::new(Arc::new(corpus), clock.clone());
        let step = Feed::ALL.iter().map(|&f| schedule.interval(f).as_secs()).min().unwrap_or(1).max(1) as i64;
        cycles += collector.run_until(&sim, &mut store, &clock, end, step)?.len() as u64;
        if a.drain {
            while !collector.caught_up() {
                collector.run_poll_cycle(&sim, &mut store, clock.now())?;
                clock.advance_secs(step);
                cycles += 1;
            }
        }
        tracing::info!(requests = sim.request_count(), throttled = sim.throttle_count(), "simulated source");
    } else if let Some(url) = a.source.strip_prefix("http:") {
        let url = if url.starts_with("//") { format!("http:{url}") } else { url.to_string() };
        let source = HttpSource::new(&url, Duration::from_secs(a.timeout));
        let clock = SystemClock;
        let end = a.duration.map(|d| Timestamp::now().add_secs(d as i64));
        loop {
            let now = clock.now();
            if end.is_some_and(|e| now >= e) {
                break;
            }
            let report = collector.run_poll_cycle(&source, &mut store, now)?;
            cycles += 1;
            for (feed, outcome) in &report.feeds {
                tracing::info!(feed = feed.as_str(), ?outcome, "poll");
            }
            let next = Feed::ALL.iter().filter_map(|&f| collector.next_due(f)).min().unwrap_or(now.add_secs(1));
            let next = end.map_or(next, |e| next.min(e));
            let wait = next.duration_since(&clock.now()).to_std().unwrap_or(Duration::ZERO);
            std::thread::sleep(wait.max(Duration::from_millis(200)));
        }
    } else {
        bail!("--source must be sim:<dir> or http:<base-url>, got {:?}", a.source);
    }
    print_json(&serde_json::json!({ "cycles": cycles, "rows": store_counts(&store)? }))
}

fn today() -> String {
    format_date(chrono::Utc::now().date_naive())
}

fn export(a: ExportArgs) -> Result<()> {
    let store = Store::open(&a.store, OpenMode::ReadOnly)?;
    let mut opts = ExportOptions::new(&a.out, a.export_date.unwrap_or_else(today));
    if let Some(s) = a.state {
        opts.state_path = s;
    }
    if !a.tables.is_empty() {
        let tables: BTreeSet<TableName> = a.tables.iter().map(|t| t.parse()).collect::<Result<_, _>>()?;
        opts.tables = Some(tables);
    }
    opts.collect_counters = a.counters;
    let report = run_export(&store, &opts)?;
    print_json(&serde_json::json!({ "tables": report.tables, "state": report.state }))?;
    let failed = report.failed();
    if !failed.is_empty() {
        bail!("export failed for {:?}", failed.iter().map(|t| t.as_str()).collect::<Vec<_>>());
    }
    Ok(())
}

/// Records of one exported table with the dump date of their partition.
fn load_dated<R: Record>(dir: &Path) -> Result<Vec<(String, R)>> {
    let spec = spec_for(R::TABLE);
    let columns = spec.columns();
    let mut out = Vec::new();
    for date in list_partitions(dir, R::TABLE)? {
        for row in read_partition(dir, spec, &date)? {
            out.push((date.clone(), R::from_row(&columns, &row)?));
        }
    }
    Ok(out)
}

const SUMMARY_FILE: &str = "summary.json";
const NEAR_DUP_FILE: &str = "near_duplicates.json";

#[derive(Serialize, Deserialize)]
struct AnnotationHeader {
    pattern_version: String,
    pattern_sha256: String,
    summary: AnnotationSummary,
}

fn write_jsonl_partitions<T: Serialize>(dir: &Path, rows: impl Iterator<Item = (String, T)>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut groups: BTreeMap<String, Vec<T>> = BTreeMap::new();
    for (d, r) in rows {
        groups.entry(d).or_default().push(r);
    }
    for (d, rows) in groups {
        let path = dir.join(format!("{d}.jsonl"));
        let mut w = BufWriter::new(File::create(&path)?);
        for r in rows {
            serde_json::to_writer(&mut w, &r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    Ok(())
}

fn read_jsonl_dir<T: DeserializeOwned>(dir: &Path) -> Result<Vec<T>> {
    let mut files: Vec<PathBuf> = match fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e).with_context(|| format!("reading {}", dir.display())),
    };
    files.sort();
    let mut out = Vec::new();
    for f in files {
        for line in BufReader::new(File::open(&f)?).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                out.push(serde_json::from_str(&line).with_context(|| format!("parsing {}", f.display()))?);
            }
        }
    }
    Ok(out)
}

fn annotate(a: AnnotateArgs) -> Result<()> {
    let posts: Vec<(String, PostRecord)> = load_dated(&a.input)?;
    let comments: Vec<(String, CommentRecord)> = load_dated(&a.input)?;
    let annotator = match &a.patterns {
        Some(p) => Annotator::with_patterns(PatternSet::from_path(p)?),
        None => Annotator::default(),
    };
    let post_recs: Vec<PostRecord> = posts.iter().map(|(_, p)| p.clone()).collect();
    let comment_recs: Vec<CommentRecord> = comments.iter().map(|(_, c)| c.clone()).collect();
    let set = annotator.annotate(&post_recs, &comment_recs)?;
    write_jsonl_partitions(&a.out.join("posts"), posts.iter().map(|(d, _)| d.clone()).zip(set.posts.iter()))?;
    write_jsonl_partitions(&a.out.join("comments"), comments.iter().map(|(d, _)| d.clone()).zip(set.comments.iter()))?;
    write_json(&a.out.join(NEAR_DUP_FILE), &set.near_duplicates)?;
    let header = AnnotationHeader {
        pattern_version: set.pattern_version.clone(),
        pattern_sha256: set.pattern_sha256.clone(),
        summary: set.summary.clone(),
    };
    write_json(&a.out.join(SUMMARY_FILE), &header)?;
    print_json(&header)
}

struct Loaded {
    posts: Vec<PostRecord>,
    comments: Vec<CommentRecord>,
}

fn load_records(dir: &Path) -> Result<Loaded> {
    Ok(Loaded { posts: exporter::read_table(dir)?, comments: exporter::read_table(dir)? })
}

/// Annotations aligned with `posts` and `comments` by id.
fn load_annotations(dir: &Path, data: &Loaded) -> Result<AnnotationSet> {
    let header: AnnotationHeader = read_json(&dir.join(SUMMARY_FILE))?;
    let mut pa: HashMap<String, PostAnnotation> =
        read_jsonl_dir::<PostAnnotation>(&dir.join("posts"))?.into_iter().map(|x| (x.id.clone(), x)).collect();
    let mut ca: HashMap<String, CommentAnnotation> =
        read_jsonl_dir::<CommentAnnotation>(&dir.join("comments"))?.into_iter().map(|x| (x.id.clone(), x)).collect();
    let posts = data
        .posts
        .iter()
        .map(|p| pa.remove(&p.id).with_context(|| format!("no annotation for post {}", p.id)))
        .collect::<Result<Vec<_>>>()?;
    let comments = data
        .comments
        .iter()
        .map(|c| ca.remove(&c.id).with_context(|| format!("no annotation for comment {}", c.id)))
        .collect::<Result<Vec<_>>>()?;
    let near_duplicates: NearDupClusters = read_json(&dir.join(NEAR_DUP_FILE))?;
    Ok(AnnotationSet {
        pattern_version: header.pattern_version,
        pattern_sha256: header.pattern_sha256,
        posts,
        comments,
        near_duplicates,
        summary: header.summary,
    })
}

#[derive(Serialize, Deserialize)]
struct RiskSummary {
    caps: RiskCaps,
    note: String,
    eligible: u64,
    census: TierCensus,
}

fn score(a: ScoreArgs) -> Result<()> {
    let mut caps = match &a.caps {
        Some(p) => toml::from_str::<RiskCaps>(&fs::read_to_string(p)?)?,
        None => RiskCaps::default(),
    };
    if let Some(v) = a.manipulation_cap {
        caps.manipulation_comments = v;
    }
    if let Some(v) = a.frequency_cap {
        caps.posts_per_day = v;
    }
    let data = load_records(&a.input)?;
    let ann = load_annotations(&a.annotations.unwrap_or_else(|| a.input.join("annotations")), &data)?;
    let report = score_population(&data.posts, &data.comments, &ann, &caps)?;
    fs::create_dir_all(&a.out)?;

    let path = a.out.join("profiles.csv");
    let mut f = BufWriter::new(File::create(&path)?);
    writeln!(f, "# {}", caps.header())?;
    let mut w = csv::Writer::from_writer(f);
    let mut header = vec!["agent_id", "post_count", "comment_count", "eligible", "score", "tier"];
    header.extend(INDICATOR_NAMES);
    w.write_record(&header)?;
    for p in &report.profiles {
        let mut row = vec![
            p.agent_id.clone(),
            p.post_count.to_string(),
            p.comment_count.to_string(),
            p.eligible.to_string(),
            p.score.map(|s| s.to_string()).unwrap_or_default(),
            p.tier.map(|t| t.as_str().to_string()).unwrap_or_default(),
        ];
        match &p.indicators {
            Some(i) => row.extend(i.to_array().iter().map(f64::to_string)),
            None => row.extend(std::iter::repeat_n(String::new(), 8)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let summary = RiskSummary { caps, note: caps.header(), eligible: report.eligible, census: report.census };
    write_json(&a.out.join("risk.json"), &summary)?;
    print_json(&summary)
}

fn bot_agents(data: &Loaded, ann: &AnnotationSet) -> HashSet<String> {
    data.comments.iter().zip(&ann.comments).filter(|(_, a)| a.bot_comment).map(|(c, _)| c.agent_id.clone()).collect()
}

fn graph(a: GraphArgs) -> Result<()> {
    let data = load_records(&a.input)?;
    let ann = load_annotations(&a.annotations.unwrap_or_else(|| a.input.join("annotations")), &data)?;
    let g = build_graph(&data.posts, &data.comments);
    let metrics = graph_metrics(&g, &bot_agents(&data, &ann));
    fs::create_dir_all(&a.out)?;
    g.write_edge_list(File::create(a.out.join("edges.csv"))?)?;
    detect_communities(&g).write_labels(File::create(a.out.join("communities.csv"))?)?;
    filtered_subgraph(&g, a.top_k, a.min_weight).write_edge_list(File::create(a.out.join("subgraph_edges.csv"))?)?;
    write_json(&a.out.join("graph_metrics.json"), &metrics)?;
    print_json(&metrics)
}

fn report(a: ReportArgs) -> Result<()> {
    let acquisition_date = parse_date(&a.acquisition_date).context("--acquisition-date must be YYYY-MM-DD")?;
    let export_date: NaiveDate = match &a.export_date {
        Some(d) => parse_date(d).context("--export-date must be YYYY-MM-DD")?,
        None => chrono::Utc::now().date_naive(),
    };
    let data = load_records(&a.input)?;
    let agents: Vec<AgentRecord> = exporter::read_table(&a.input)?;
    let submolts: Vec<SubmoltRecord> = exporter::read_table(&a.input)?;
    let cfg = StatsConfig { acquisition_date, export_date, ..StatsConfig::default() };
    let stats = descriptive_stats(&data.posts, &data.comments, &agents, &submolts, &cfg);
    let consistency = check_consistency(&data.posts, &data.comments);
    let annotations: Option<AnnotationHeader> = match &a.annotations {
        Some(d) => Some(read_json(&d.join(SUMMARY_FILE))?),
        None => None,
    };
    let risk: Option<RiskSummary> = match &a.risk {
        Some(d) => Some(read_json(&d.join("risk.json"))?),
        None => None,
    };
    let graph: Option<GraphMetrics> = match &a.graph {
        Some(d) => Some(read_json(&d.join("graph_metrics.json"))?),
        None => None,
    };
    let inputs = ReportInputs {
        stats: Some(&stats),
        consistency: Some(&consistency),
        annotations: annotations.as_ref().map(|h| &h.summary),
        risk: risk.as_ref().map(|r| (&r.census, &r.caps)),
        graph: graph.as_ref(),
    };
    let files = emit_report(&inputs, &a.out)?;
    print_json(&serde_json::json!({ "files": files, "consistency": consistency }))
}
