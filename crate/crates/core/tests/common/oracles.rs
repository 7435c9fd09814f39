//! Brute-force recomputations shared by the analysis and acceptance targets.

use std::collections::{BTreeMap, HashMap, HashSet};

use observatory_core::annotator::AnnotationSet;
use observatory_core::model::{parse_timestamp, CommentRecord, PostRecord, Timestamp};
use observatory_core::replygraph::{build_graph, detect_communities, graph_metrics};
use observatory_core::riskscore::{assign_tier, RiskCaps, RiskReport};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn post(id: &str, agent: &str, created: &str, content: &str, submolt: &str) -> PostRecord {
    PostRecord {
        id: id.into(),
        agent_id: agent.into(),
        agent_name: agent.into(),
        submolt: submolt.into(),
        title: String::new(),
        content: content.into(),
        url: None,
        score: 0,
        comment_count: 0,
        created_at: created.into(),
        fetched_at: Timestamp::epoch(),
        is_pinned: false,
    }
}

pub fn comment(id: &str, post: &str, agent: &str) -> CommentRecord {
    CommentRecord {
        id: id.into(),
        post_id: post.into(),
        agent_id: agent.into(),
        agent_name: agent.into(),
        parent_id: None,
        content: format!("reply {id}"),
        score: 0,
        created_at: "2026-02-01T00:00:00+00:00".into(),
        fetched_at: Timestamp::epoch(),
    }
}

/// Independent recomputation of one agent's score from raw records.
pub fn oracle_score(
    agent: &str,
    posts: &[PostRecord],
    comments: &[CommentRecord],
    flags: &HashMap<&str, (bool, bool, bool)>,
    manip: &HashSet<&str>,
    caps: &RiskCaps,
) -> f64 {
    let mine: Vec<&PostRecord> = posts.iter().filter(|p| p.agent_id == agent).collect();
    let n = mine.len() as f64;
    let inj = mine.iter().filter(|p| flags[p.id.as_str()].0).count() as f64 / n;
    let dup = mine.iter().filter(|p| flags[p.id.as_str()].1).count() as f64 / n;
    let cry = mine.iter().filter(|p| flags[p.id.as_str()].2).count() as f64 / n;
    let my_comments: Vec<&CommentRecord> = comments.iter().filter(|c| c.agent_id == agent).collect();
    let m = my_comments.iter().filter(|c| manip.contains(c.id.as_str())).count() as f64;
    let manip_norm = if m / caps.manipulation_comments > 1.0 { 1.0 } else { m / caps.manipulation_comments };
    let mut days: BTreeMap<String, f64> = BTreeMap::new();
    for p in &mine {
        if let Ok(t) = parse_timestamp(&p.created_at) {
            *days.entry(t.utc().format("%F").to_string()).or_default() += 1.0;
        }
    }
    let busiest = days.values().fold(0.0f64, |a, &b| a.max(b));
    let freq = (busiest / caps.posts_per_day).min(1.0);
    let mut tokens: BTreeMap<String, f64> = BTreeMap::new();
    let mut total = 0.0;
    for p in &mine {
        let text = format!("{}\n{}", p.title, p.content).to_lowercase();
        for t in text.split_whitespace() {
            *tokens.entry(t.to_string()).or_default() += 1.0;
            total += 1.0;
        }
    }
    let rep = if total < 2.0 {
        0.0
    } else {
        let h: f64 = tokens.values().map(|c| -(c / total) * (c / total).log2()).sum();
        1.0 - h / total.log2()
    };
    let mut subs: BTreeMap<&str, f64> = BTreeMap::new();
    for p in &mine {
        *subs.entry(&p.submolt).or_default() += 1.0;
    }
    let conc = subs.values().fold(0.0f64, |a, &b| a.max(b)) / n;
    let authors: HashMap<&str, &str> = posts.iter().map(|p| (p.id.as_str(), p.agent_id.as_str())).collect();
    let own = my_comments.iter().filter(|c| authors.get(c.post_id.as_str()) == Some(&agent)).count() as f64;
    let selfr = if my_comments.is_empty() { 0.0 } else { own / my_comments.len() as f64 };
    25.0 * inj
        + 15.0 * dup
        + 12.0 * cry
        + 10.0 * manip_norm
        + 10.0 * freq
        + 10.0 * rep.clamp(0.0, 1.0)
        + 10.0 * conc
        + 8.0 * selfr
}

/// Checks every profile in `report` against [`oracle_score`] within `tol`.
/// Returns the number of scored agents.
pub fn check_risk_report(
    report: &RiskReport,
    posts: &[PostRecord],
    comments: &[CommentRecord],
    ann: &AnnotationSet,
    tol: f64,
) -> Result<usize, String> {
    let flags: HashMap<&str, (bool, bool, bool)> =
        ann.posts.iter().map(|a| (a.id.as_str(), (a.injection, a.duplicate_spam, a.crypto))).collect();
    let manip: HashSet<&str> = ann.comments.iter().filter(|a| a.manipulation).map(|a| a.id.as_str()).collect();
    let mut checked = 0;
    for p in &report.profiles {
        let n = posts.iter().filter(|x| x.agent_id == p.agent_id).count();
        if p.eligible != (n >= 2) {
            return Err(format!("{}: eligible={} with {n} posts", p.agent_id, p.eligible));
        }
        match p.score {
            Some(score) => {
                let o = oracle_score(&p.agent_id, posts, comments, &flags, &manip, &report.caps);
                if (score - o).abs() >= tol {
                    return Err(format!("{}: {score} vs oracle {o}", p.agent_id));
                }
                if p.tier != Some(assign_tier(score)) {
                    return Err(format!("{}: tier {:?} for {score}", p.agent_id, p.tier));
                }
                checked += 1;
            }
            None if p.tier.is_some() || p.indicators.is_some() => {
                return Err(format!("{}: ineligible profile carries a tier", p.agent_id));
            }
            None => {}
        }
    }
    if report.census.total() != report.eligible {
        return Err(format!("census {} != eligible {}", report.census.total(), report.eligible));
    }
    Ok(checked)
}

/// Raw comment list on a graph of `n` agents, each owning post `p<i>`.
pub fn random_graph(rng: &mut ChaCha8Rng) -> (Vec<PostRecord>, Vec<CommentRecord>, usize) {
    let n = rng.random_range(1..=50);
    let posts: Vec<PostRecord> =
        (0..n).map(|i| post(&format!("p{i}"), &format!("a{i:02}"), "2026-02-01T00:00:00Z", "x", "s")).collect();
    let m = rng.random_range(0..(n * 4 + 1));
    let mut comments = Vec::new();
    for k in 0..m {
        let from = rng.random_range(0..n);
        let target = if rng.random_bool(0.05) { "nowhere".to_string() } else { format!("p{}", rng.random_range(0..n)) };
        comments.push(comment(&format!("c{k}"), &target, &format!("a{from:02}")));
    }
    (posts, comments, n)
}

macro_rules! ensure_eq {
    ($a:expr, $b:expr, $($ctx:tt)*) => {
        if $a != $b {
            return Err(format!("{}: {:?} != {:?}", format!($($ctx)*), $a, $b));
        }
    };
}

/// Generates one random graph and compares its metrics with an adjacency
/// matrix recomputation.
#[allow(clippy::needless_range_loop)]
pub fn check_random_graph(rng: &mut ChaCha8Rng, case: usize) -> Result<(), String> {
    let (posts, comments, n) = random_graph(rng);
    let bots: HashSet<String> = (0..n).filter(|_| rng.random_bool(0.2)).map(|i| format!("a{i:02}")).collect();
    let g = build_graph(&posts, &comments);
    let m = graph_metrics(&g, &bots);

    let mut adj = vec![vec![0u64; n]; n];
    let (mut selfc, mut unresolved, mut bot, mut self_or_bot) = (0u64, 0u64, 0u64, 0u64);
    for c in &comments {
        let from: usize = c.agent_id[1..].parse().unwrap();
        let is_bot = bots.contains(&c.agent_id);
        bot += is_bot as u64;
        match c.post_id.strip_prefix('p').map(|s| s.parse::<usize>().unwrap()) {
            None => {
                unresolved += 1;
                self_or_bot += is_bot as u64;
            }
            Some(to) if to == from => {
                selfc += 1;
                self_or_bot += 1;
            }
            Some(to) => {
                adj[from][to] += 1;
                self_or_bot += is_bot as u64;
            }
        }
    }
    let nodes: Vec<usize> = (0..n).filter(|&i| (0..n).any(|j| adj[i][j] > 0 || adj[j][i] > 0)).collect();
    let nn = nodes.len() as u64;
    let edges = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| adj[i][j] > 0).count() as u64;
    let mut recip = 0;
    let mut adjacent = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            if adj[i][j] > 0 && adj[j][i] > 0 {
                recip += 1;
            }
            if adj[i][j] > 0 || adj[j][i] > 0 {
                adjacent += 1;
            }
        }
    }
    let total_w: u64 = adj.iter().flatten().sum();
    ensure_eq!(m.node_count, nn, "case {case} nodes");
    ensure_eq!(m.edge_count, edges, "case {case} edges");
    let expected_density = if nn < 2 { 0.0 } else { edges as f64 / (nn * (nn - 1)) as f64 };
    ensure_eq!(m.density, expected_density, "case {case} density");
    ensure_eq!(m.reciprocal_pairs, recip, "case {case} reciprocal pairs");
    ensure_eq!(m.adjacent_pairs, adjacent, "case {case} adjacent pairs");
    ensure_eq!(total_w + selfc + unresolved, comments.len() as u64, "case {case} conservation");
    ensure_eq!(
        (m.self_comments, m.unresolved_comments, m.bot_comments),
        (selfc, unresolved, bot),
        "case {case} tallies"
    );
    ensure_eq!(m.organic_comments, comments.len() as u64 - self_or_bot, "case {case} organic");
    let tot = comments.len() as f64;
    let r = |x: u64| if comments.is_empty() { 0.0 } else { x as f64 / tot };
    ensure_eq!(
        (m.organic_ratio, m.self_rate, m.bot_rate),
        (r(comments.len() as u64 - self_or_bot), r(selfc), r(bot)),
        "case {case} ratios"
    );
    let deg = g.weighted_degrees();
    for &i in &nodes {
        let d: u64 = (0..n).map(|j| adj[i][j] + adj[j][i]).sum();
        ensure_eq!(deg[&format!("a{i:02}")], d, "case {case} degree of a{i:02}");
    }
    let comm = detect_communities(&g);
    ensure_eq!(comm.labels.len() as u64, nn, "case {case} labelled nodes");
    ensure_eq!(comm.sizes().iter().sum::<u64>(), nn, "case {case} community sizes");
    if !comm.sizes().windows(2).all(|w| w[0] >= w[1]) {
        return Err(format!("case {case}: community sizes not descending"));
    }
    Ok(())
}
