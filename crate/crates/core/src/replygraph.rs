//! Directed, weighted agent interaction graph built from comments: an edge
//! A→B counts comments by A on posts authored by B.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{CommentRecord, PostRecord};

/// Comment accounting that does not appear as edges.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentTally {
    pub total: u64,
    /// Comments on the commenter's own post.
    pub self_comments: u64,
    /// Comments whose post is not in the corpus.
    pub unresolved: u64,
    /// All comments per author, including self and unresolved ones.
    pub by_author: BTreeMap<String, u64>,
    pub self_by_author: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplyGraph {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeMap<(String, String), u64>,
    pub tally: CommentTally,
}

impl ReplyGraph {
    /// Adds `weight` to the edge; self-loops and zero weights are ignored.
    pub fn add_edge(&mut self, from: &str, to: &str, weight: u64) {
        if from == to || weight == 0 {
            return;
        }
        self.nodes.insert(from.to_string());
        self.nodes.insert(to.to_string());
        *self.edges.entry((from.to_string(), to.to_string())).or_default() += weight;
    }

    pub fn add_node(&mut self, id: &str) {
        self.nodes.insert(id.to_string());
    }

    pub fn weight(&self, from: &str, to: &str) -> u64 {
        self.edges.get(&(from.to_string(), to.to_string())).copied().unwrap_or(0)
    }

    pub fn total_weight(&self) -> u64 {
        self.edges.values().sum()
    }

    /// In- plus out-weight per node.
    pub fn weighted_degrees(&self) -> BTreeMap<String, u64> {
        let mut d: BTreeMap<String, u64> = self.nodes.iter().map(|n| (n.clone(), 0)).collect();
        for ((a, b), w) in &self.edges {
            *d.get_mut(a).expect("edge endpoint is a node") += w;
            *d.get_mut(b).expect("edge endpoint is a node") += w;
        }
        d
    }

    /// Undirected projection with summed weights, keyed by ordered pair.
    pub fn undirected(&self) -> BTreeMap<(String, String), u64> {
        let mut u = BTreeMap::new();
        for ((a, b), w) in &self.edges {
            let key = if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
            *u.entry(key).or_default() += w;
        }
        u
    }

    pub fn write_edge_list<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["source", "target", "weight"])?;
        for ((a, b), wt) in &self.edges {
            w.write_record([a.as_str(), b.as_str(), &wt.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Default)]
struct Partial {
    edges: HashMap<(String, String), u64>,
    tally: CommentTally,
}

impl Partial {
    fn merge(mut self, other: Partial) -> Partial {
        for (k, w) in other.edges {
            *self.edges.entry(k).or_default() += w;
        }
        let t = &mut self.tally;
        t.total += other.tally.total;
        t.self_comments += other.tally.self_comments;
        t.unresolved += other.tally.unresolved;
        for (k, v) in other.tally.by_author {
            *t.by_author.entry(k).or_default() += v;
        }
        for (k, v) in other.tally.self_by_author {
            *t.self_by_author.entry(k).or_default() += v;
        }
        self
    }
}

pub fn build_graph(posts: &[PostRecord], comments: &[CommentRecord]) -> ReplyGraph {
    let author: HashMap<&str, &str> = posts.iter().map(|p| (p.id.as_str(), p.agent_id.as_str())).collect();
    let merged = comments
        .par_iter()
        .fold(Partial::default, |mut acc, c| {
            acc.tally.total += 1;
            *acc.tally.by_author.entry(c.agent_id.clone()).or_default() += 1;
            match author.get(c.post_id.as_str()) {
                None => acc.tally.unresolved += 1,
                Some(&a) if a == c.agent_id => {
                    acc.tally.self_comments += 1;
                    *acc.tally.self_by_author.entry(c.agent_id.clone()).or_default() += 1;
                }
                Some(&a) => *acc.edges.entry((c.agent_id.clone(), a.to_string())).or_default() += 1,
            }
            acc
        })
        .reduce(Partial::default, Partial::merge);
    let mut g = ReplyGraph { tally: merged.tally, ..Default::default() };
    for ((a, b), w) in merged.edges {
        g.add_edge(&a, &b, w);
    }
    g
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphMetrics {
    pub node_count: u64,
    pub edge_count: u64,
    pub total_weight: u64,
    pub density: f64,
    pub reciprocal_pairs: u64,
    /// Unordered node pairs joined by at least one directed edge.
    pub adjacent_pairs: u64,
    pub reciprocity_rate: f64,
    pub community_count: u64,
    /// Descending.
    pub community_sizes: Vec<u64>,
    pub modularity: f64,
    pub total_comments: u64,
    pub self_comments: u64,
    pub unresolved_comments: u64,
    pub bot_comments: u64,
    pub organic_comments: u64,
    pub organic_ratio: f64,
    pub self_rate: f64,
    pub bot_rate: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `E / (N (N - 1))`, or 0 below two nodes.
pub fn density(nodes: u64, edges: u64) -> f64 {
    if nodes < 2 {
        return 0.0;
    }
    edges as f64 / (nodes as f64 * (nodes as f64 - 1.0))
}

/// `bot_agents` are authors with at least one bot-flagged comment.
pub fn graph_metrics(g: &ReplyGraph, bot_agents: &HashSet<String>) -> GraphMetrics {
    let n = g.nodes.len() as u64;
    if n < 2 {
        tracing::warn!(nodes = n, "graph has fewer than two nodes; density is 0");
    }
    let e = g.edges.len() as u64;
    let reciprocal =
        g.edges.keys().filter(|(a, b)| a < b && g.edges.contains_key(&(b.clone(), a.clone()))).count() as u64;
    let adjacent = e - reciprocal;

    let t = &g.tally;
    let bot: u64 = bot_agents.iter().filter_map(|a| t.by_author.get(a)).sum();
    let self_and_bot: u64 = bot_agents.iter().filter_map(|a| t.self_by_author.get(a)).sum();
    let flagged = t.self_comments + bot - self_and_bot;
    let organic = t.total - flagged;

    let communities = detect_communities(g);
    GraphMetrics {
        node_count: n,
        edge_count: e,
        total_weight: g.total_weight(),
        density: density(n, e),
        reciprocal_pairs: reciprocal,
        adjacent_pairs: adjacent,
        reciprocity_rate: ratio(reciprocal, adjacent),
        community_count: communities.members.len() as u64,
        community_sizes: communities.sizes(),
        modularity: modularity(g, &communities.labels),
        total_comments: t.total,
        self_comments: t.self_comments,
        unresolved_comments: t.unresolved,
        bot_comments: bot,
        organic_comments: organic,
        organic_ratio: ratio(organic, t.total),
        self_rate: ratio(t.self_comments, t.total),
        bot_rate: ratio(bot, t.total),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Communities {
    /// Node → community index.
    pub labels: BTreeMap<String, usize>,
    /// Members per community, sorted; communities by size descending, then
    /// by smallest member.
    pub members: Vec<Vec<String>>,
}

impl Communities {
    pub fn sizes(&self) -> Vec<u64> {
        self.members.iter().map(|m| m.len() as u64).collect()
    }

    pub fn write_labels<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["agent_id", "community"])?;
        for (node, c) in &self.labels {
            w.write_record([node.as_str(), &c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Newman modularity of `labels` on the undirected projection.
pub fn modularity(g: &ReplyGraph, labels: &BTreeMap<String, usize>) -> f64 {
    let und = g.undirected();
    let w: u64 = und.values().sum();
    if w == 0 {
        return 0.0;
    }
    let two_w = 2.0 * w as f64;
    let mut internal: HashMap<usize, u64> = HashMap::new();
    let mut degree: HashMap<usize, u64> = HashMap::new();
    for ((a, b), &wt) in &und {
        let (ca, cb) = (labels[a], labels[b]);
        if ca == cb {
            *internal.entry(ca).or_default() += wt;
        }
        *degree.entry(ca).or_default() += wt;
        *degree.entry(cb).or_default() += wt;
    }
    degree
        .iter()
        .map(|(c, &d)| {
            let l = internal.get(c).copied().unwrap_or(0) as f64;
            l / w as f64 - (d as f64 / two_w).powi(2)
        })
        .sum()
}

/// Greedy agglomerative modularity maximization on the undirected
/// projection. At each step the adjacent community pair with the largest
/// gain merges; equal gains go to the pair with the lexicographically
/// smallest (smaller id, larger id) of their smallest member ids. Stops when
/// no merge has positive gain.
pub fn detect_communities(g: &ReplyGraph) -> Communities {
    let ids: Vec<&String> = g.nodes.iter().collect();
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let n = ids.len();
    let mut adj: Vec<HashMap<usize, i128>> = vec![HashMap::new(); n];
    let mut deg = vec![0i128; n];
    let mut w_total: i128 = 0;
    for ((a, b), &wt) in &g.undirected() {
        let (i, j) = (index[a.as_str()], index[b.as_str()]);
        let wt = wt as i128;
        *adj[i].entry(j).or_default() += wt;
        *adj[j].entry(i).or_default() += wt;
        deg[i] += wt;
        deg[j] += wt;
        w_total += wt;
    }
    // Community c is identified by its smallest node index, which is also its
    // smallest id since nodes are sorted.
    let mut alive = vec![true; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    // Gain scaled by 2W^2: 2W * w_ij - d_i * d_j.
    let gain = |adj: &[HashMap<usize, i128>], deg: &[i128], i: usize, j: usize| -> i128 {
        2 * w_total * adj[i].get(&j).copied().unwrap_or(0) - deg[i] * deg[j]
    };
    let mut heap: BinaryHeap<(i128, Reverse<(usize, usize)>)> = BinaryHeap::new();
    for i in 0..n {
        for &j in adj[i].keys() {
            if i < j {
                heap.push((gain(&adj, &deg, i, j), Reverse((i, j))));
            }
        }
    }
    while let Some((dq, Reverse((i, j)))) = heap.pop() {
        if dq <= 0 {
            break;
        }
        if !alive[i] || !alive[j] || !adj[i].contains_key(&j) || gain(&adj, &deg, i, j) != dq {
            continue;
        }
        // Merge j into i (i < j keeps the smaller label).
        alive[j] = false;
        let moved = std::mem::take(&mut members[j]);
        members[i].extend(moved);
        let nj = std::mem::take(&mut adj[j]);
        for (k, w) in nj {
            adj[k].remove(&j);
            if k == i {
                continue;
            }
            *adj[i].entry(k).or_default() += w;
            *adj[k].entry(i).or_default() += w;
        }
        deg[i] += deg[j];
        deg[j] = 0;
        let neighbors: Vec<usize> = adj[i].keys().copied().collect();
        for k in neighbors {
            let (a, b) = if i < k { (i, k) } else { (k, i) };
            heap.push((gain(&adj, &deg, a, b), Reverse((a, b))));
        }
    }

    let mut groups: Vec<Vec<String>> = (0..n)
        .filter(|&c| alive[c])
        .map(|c| {
            let mut m: Vec<String> = members[c].iter().map(|&x| ids[x].clone()).collect();
            m.sort();
            m
        })
        .collect();
    groups.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a[0].cmp(&b[0])));
    let mut labels = BTreeMap::new();
    for (c, m) in groups.iter().enumerate() {
        for node in m {
            labels.insert(node.clone(), c);
        }
    }
    Communities { labels, members: groups }
}

/// Top `top_k` nodes by weighted degree (ties by ascending id), edges among
/// them with weight at least `min_weight`, isolated nodes dropped. The
/// comment tally is not carried over.
pub fn filtered_subgraph(g: &ReplyGraph, top_k: usize, min_weight: u64) -> ReplyGraph {
    let mut ranked: Vec<(String, u64)> = g.weighted_degrees().into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let keep: HashSet<&str> = ranked.iter().take(top_k).map(|(n, _)| n.as_str()).collect();
    let mut sub = ReplyGraph::default();
    for ((a, b), &w) in &g.edges {
        if w >= min_weight && keep.contains(a.as_str()) && keep.contains(b.as_str()) {
            sub.add_edge(a, b, w);
        }
    }
    sub
}

pub const DEFAULT_TOP_K: usize = 300;
pub const DEFAULT_MIN_WEIGHT: u64 = 2;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_timestamp;

    fn post(id: &str, agent: &str) -> PostRecord {
        PostRecord {
            id: id.into(),
            agent_id: agent.into(),
            agent_name: agent.into(),
            submolt: "s".into(),
            title: "t".into(),
            content: "c".into(),
            url: None,
            score: 0,
            comment_count: 0,
            created_at: "2026-02-01T00:00:00+00:00".into(),
            fetched_at: parse_timestamp("2026-02-01T00:00:00+00:00").unwrap(),
            is_pinned: false,
        }
    }

    fn comment(id: &str, post: &str, agent: &str) -> CommentRecord {
        CommentRecord {
            id: id.into(),
            post_id: post.into(),
            agent_id: agent.into(),
            agent_name: agent.into(),
            parent_id: None,
            content: "x".into(),
            score: 0,
            created_at: "2026-02-01T01:00:00+00:00".into(),
            fetched_at: parse_timestamp("2026-02-01T01:00:00+00:00").unwrap(),
        }
    }

    #[test]
    fn edges_and_tallies() {
        let posts = [post("p1", "B"), post("p2", "A")];
        let comments = [
            comment("c1", "p1", "A"),
            comment("c2", "p1", "A"),
            comment("c3", "p2", "A"),
            comment("c4", "missing", "C"),
        ];
        let g = build_graph(&posts, &comments);
        assert_eq!(g.weight("A", "B"), 2);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.tally.self_comments, 1);
        assert_eq!(g.tally.unresolved, 1);
        assert_eq!(g.total_weight() + g.tally.self_comments + g.tally.unresolved, 4);
        assert_eq!(build_graph(&posts, &[]), ReplyGraph::default());
    }

    #[test]
    fn density_and_reciprocity() {
        let mut g = ReplyGraph::default();
        g.add_edge("A", "B", 1);
        g.add_edge("B", "A", 1);
        g.add_node("C");
        let m = graph_metrics(&g, &HashSet::new());
        assert_eq!(m.density, 2.0 / 6.0);
        assert_eq!(m.reciprocal_pairs, 1);
        assert_eq!(m.reciprocity_rate, 1.0);
        assert_eq!(density(1, 0), 0.0);
        assert_eq!(density(18_881, 127_238), 127_238.0 / 356_473_280.0);
    }

    #[test]
    fn engagement_union() {
        let posts = [post("p1", "B"), post("p2", "A")];
        let comments =
            [comment("c1", "p1", "A"), comment("c2", "p2", "A"), comment("c3", "p2", "B"), comment("c4", "p1", "C")];
        let g = build_graph(&posts, &comments);
        let bots: HashSet<String> = ["A".to_string()].into();
        let m = graph_metrics(&g, &bots);
        // c1, c2 by bot A (c2 also self); c3, c4 organic.
        assert_eq!((m.bot_comments, m.self_comments, m.organic_comments), (2, 1, 2));
        assert_eq!(m.organic_ratio, 0.5);
    }

    #[test]
    fn single_edge_is_one_community() {
        let mut g = ReplyGraph::default();
        g.add_edge("A", "B", 3);
        let c = detect_communities(&g);
        assert_eq!(c.members, vec![vec!["A".to_string(), "B".to_string()]]);
    }

    #[test]
    fn edgeless_nodes_are_singletons() {
        let mut g = ReplyGraph::default();
        for n in ["x", "y", "z"] {
            g.add_node(n);
        }
        let c = detect_communities(&g);
        assert_eq!(c.sizes(), vec![1, 1, 1]);
        assert_eq!(c.labels["x"], 0);
        assert!(detect_communities(&ReplyGraph::default()).members.is_empty());
    }

    fn two_cliques() -> ReplyGraph {
        let mut g = ReplyGraph::default();
        for side in [["a", "b", "c", "d"], ["e", "f", "g", "h"]] {
            for i in 0..4 {
                for j in (i + 1)..4 {
                    g.add_edge(side[i], side[j], 1);
                }
            }
        }
        g.add_edge("d", "e", 1);
        g
    }

    #[test]
    fn two_cliques_split_and_beat_every_bipartition() {
        let g = two_cliques();
        let c = detect_communities(&g);
        assert_eq!(c.sizes(), vec![4, 4]);
        assert_eq!(c.members[0], vec!["a", "b", "c", "d"]);
        let q = modularity(&g, &c.labels);
        let nodes: Vec<&String> = g.nodes.iter().collect();
        let mut best = f64::MIN;
        for mask in 0u32..(1 << 8) {
            let labels = nodes.iter().enumerate().map(|(i, n)| ((*n).clone(), ((mask >> i) & 1) as usize)).collect();
            best = best.max(modularity(&g, &labels));
        }
        assert!((q - best).abs() < 1e-12, "{q} vs {best}");
    }

    #[test]
    fn subgraph_selection() {
        let mut g = ReplyGraph::default();
        g.add_edge("a", "b", 5);
        g.add_edge("b", "c", 1);
        g.add_edge("c", "d", 1);
        g.add_edge("d", "e", 1);
        g.add_edge("e", "a", 1);
        let s = filtered_subgraph(&g, 2, 1);
        assert_eq!(s.nodes.iter().collect::<Vec<_>>(), vec!["a", "b"]);
        let ones = filtered_subgraph(&g, 5, 2);
        assert_eq!(ones.edges.len(), 1);
        let mut tie = ReplyGraph::default();
        tie.add_edge("q", "p", 1);
        tie.add_edge("r", "s", 1);
        let t = filtered_subgraph(&tie, 2, 1);
        assert_eq!(t.nodes.iter().collect::<Vec<_>>(), vec!["p", "q"]);
        assert!(filtered_subgraph(&tie, 3, 2).edges.is_empty());
    }

    #[test]
    fn edge_list_csv() {
        let mut g = ReplyGraph::default();
        g.add_edge("A", "B", 2);
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "source,target,weight\nA,B,2\n");
    }
}
