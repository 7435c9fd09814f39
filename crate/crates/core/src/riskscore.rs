//! Per-agent composite risk scores from eight normalized indicators.

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotator::AnnotationSet;
use crate::model::{CommentRecord, PostRecord};

/// Weights in indicator order; they sum to 100.
pub const WEIGHTS: [f64; 8] = [25.0, 15.0, 12.0, 10.0, 10.0, 10.0, 10.0, 8.0];

pub const INDICATOR_NAMES: [&str; 8] = [
    "injection_rate",
    "duplicate_rate",
    "crypto_rate",
    "manipulation_count_norm",
    "abnormal_frequency",
    "repetitiveness",
    "submolt_concentration",
    "self_interaction_rate",
];

pub const MIN_POSTS: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum RiskError {
    #[error("agent has no posts")]
    NoPosts,
    #[error("{kind} annotations do not line up with the records at index {index}")]
    Misaligned { kind: &'static str, index: usize },
    #[error("cap {name} must be positive and finite, got {value}")]
    BadCap { name: &'static str, value: f64 },
}

/// Normalization caps for the two count-valued indicators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskCaps {
    /// Manipulation-flagged comments that saturate the indicator.
    pub manipulation_comments: f64,
    /// Posts on one UTC day that saturate the frequency indicator.
    pub posts_per_day: f64,
}

impl Default for RiskCaps {
    fn default() -> Self {
        RiskCaps { manipulation_comments: 10.0, posts_per_day: 200.0 }
    }
}

impl RiskCaps {
    pub fn validate(&self) -> Result<(), RiskError> {
        for (name, value) in
            [("manipulation_comments", self.manipulation_comments), ("posts_per_day", self.posts_per_day)]
        {
            if !(value.is_finite() && value > 0.0) {
                return Err(RiskError::BadCap { name, value });
            }
        }
        Ok(())
    }

    /// One-line description for output headers.
    pub fn header(&self) -> String {
        format!(
            "normalization caps (not given upstream): manipulation={} comments, frequency={} posts/day",
            self.manipulation_comments, self.posts_per_day
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RiskIndicators {
    pub injection_rate: f64,
    pub duplicate_rate: f64,
    pub crypto_rate: f64,
    pub manipulation_count_norm: f64,
    pub abnormal_frequency: f64,
    pub repetitiveness: f64,
    pub submolt_concentration: f64,
    pub self_interaction_rate: f64,
}

impl RiskIndicators {
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.injection_rate,
            self.duplicate_rate,
            self.crypto_rate,
            self.manipulation_count_norm,
            self.abnormal_frequency,
            self.repetitiveness,
            self.submolt_concentration,
            self.self_interaction_rate,
        ]
    }

    pub fn from_array(v: [f64; 8]) -> Self {
        RiskIndicators {
            injection_rate: v[0],
            duplicate_rate: v[1],
            crypto_rate: v[2],
            manipulation_count_norm: v[3],
            abnormal_frequency: v[4],
            repetitiveness: v[5],
            submolt_concentration: v[6],
            self_interaction_rate: v[7],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|x| (0.0..=1.0).contains(x))
    }
}

pub fn composite_score(ind: &RiskIndicators) -> f64 {
    ind.to_array().iter().zip(WEIGHTS).map(|(x, w)| x * w).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Low,
    Moderate,
    High,
    Critical,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::Low, Tier::Moderate, Tier::High, Tier::Critical];

    pub fn as_str(&self) -> &'static str {
        match self {
            Tier::Low => "low",
            Tier::Moderate => "moderate",
            Tier::High => "high",
            Tier::Critical => "critical",
        }
    }
}

/// Lower bounds are inclusive: 15 is moderate, 35 high, 60 critical.
pub fn assign_tier(score: f64) -> Tier {
    if score >= 60.0 {
        Tier::Critical
    } else if score >= 35.0 {
        Tier::High
    } else if score >= 15.0 {
        Tier::Moderate
    } else {
        Tier::Low
    }
}

/// `1 - H / ln(n)` over the token multiset, where `n` is the token count.
/// Zero for fewer than two tokens.
pub fn repetitiveness<'a>(tokens: impl IntoIterator<Item = &'a str>) -> f64 {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut n = 0u64;
    for t in tokens {
        *counts.entry(t).or_default() += 1;
        n += 1;
    }
    if n < 2 {
        return 0.0;
    }
    let total = n as f64;
    let h: f64 = counts
        .values()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum();
    (1.0 - h / total.ln()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostActivity<'a> {
    pub text: String,
    pub submolt: &'a str,
    pub day: Option<NaiveDate>,
    pub injection: bool,
    pub duplicate: bool,
    pub crypto: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommentActivity {
    pub manipulation: bool,
    pub on_own_post: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgentActivity<'a> {
    pub posts: Vec<PostActivity<'a>>,
    pub comments: Vec<CommentActivity>,
}

fn frac(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_indicators(a: &AgentActivity<'_>, caps: &RiskCaps) -> Result<RiskIndicators, RiskError> {
    let n = a.posts.len();
    if n == 0 {
        return Err(RiskError::NoPosts);
    }
    let count = |f: fn(&PostActivity<'_>) -> bool| a.posts.iter().filter(|p| f(p)).count();
    let manip = a.comments.iter().filter(|c| c.manipulation).count();
    let own = a.comments.iter().filter(|c| c.on_own_post).count();

    let mut per_day: HashMap<NaiveDate, usize> = HashMap::new();
    for d in a.posts.iter().filter_map(|p| p.day) {
        *per_day.entry(d).or_default() += 1;
    }
    let busiest = per_day.values().copied().max().unwrap_or(0);

    let mut per_submolt: HashMap<&str, usize> = HashMap::new();
    for p in &a.posts {
        *per_submolt.entry(p.submolt).or_default() += 1;
    }
    let top_submolt = per_submolt.values().copied().max().unwrap_or(0);

    let lowered: Vec<String> = a.posts.iter().map(|p| p.text.to_lowercase()).collect();
    let rep = repetitiveness(lowered.iter().flat_map(|t| t.split_whitespace()));

    Ok(RiskIndicators {
        injection_rate: frac(count(|p| p.injection), n),
        duplicate_rate: frac(count(|p| p.duplicate), n),
        crypto_rate: frac(count(|p| p.crypto), n),
        manipulation_count_norm: (manip as f64 / caps.manipulation_comments).min(1.0),
        abnormal_frequency: (busiest as f64 / caps.posts_per_day).min(1.0),
        repetitiveness: rep,
        submolt_concentration: frac(top_submolt, n),
        self_interaction_rate: frac(own, a.comments.len()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    pub agent_id: String,
    pub post_count: usize,
    pub comment_count: usize,
    pub eligible: bool,
    pub indicators: Option<RiskIndicators>,
    pub score: Option<f64>,
    pub tier: Option<Tier>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierCensus {
    pub low: u64,
    pub moderate: u64,
    pub high: u64,
    pub critical: u64,
}

impl TierCensus {
    pub fn add(&mut self, tier: Tier) {
        match tier {
            Tier::Low => self.low += 1,
            Tier::Moderate => self.moderate += 1,
            Tier::High => self.high += 1,
            Tier::Critical => self.critical += 1,
        }
    }

    pub fn get(&self, tier: Tier) -> u64 {
        match tier {
            Tier::Low => self.low,
            Tier::Moderate => self.moderate,
            Tier::High => self.high,
            Tier::Critical => self.critical,
        }
    }

    pub fn total(&self) -> u64 {
        self.low + self.moderate + self.high + self.critical
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub caps: RiskCaps,
    /// Sorted by agent id; ineligible agents are included with no score.
    pub profiles: Vec<RiskProfile>,
    pub census: TierCensus,
    pub eligible: u64,
}

/// Scores every agent that authored a post or a comment. `annotations`
/// must be aligned with `posts` and `comments`.
pub fn score_population(
    posts: &[PostRecord],
    comments: &[CommentRecord],
    annotations: &AnnotationSet,
    caps: &RiskCaps,
) -> Result<RiskReport, RiskError> {
    caps.validate()?;
    if annotations.posts.len() != posts.len() {
        return Err(RiskError::Misaligned { kind: "post", index: posts.len().min(annotations.posts.len()) });
    }
    if annotations.comments.len() != comments.len() {
        return Err(RiskError::Misaligned { kind: "comment", index: comments.len().min(annotations.comments.len()) });
    }
    if let Some(i) = posts.iter().zip(&annotations.posts).position(|(p, a)| p.id != a.id) {
        return Err(RiskError::Misaligned { kind: "post", index: i });
    }
    if let Some(i) = comments.iter().zip(&annotations.comments).position(|(c, a)| c.id != a.id) {
        return Err(RiskError::Misaligned { kind: "comment", index: i });
    }

    let author: HashMap<&str, &str> = posts.iter().map(|p| (p.id.as_str(), p.agent_id.as_str())).collect();
    let mut agents: BTreeMap<&str, AgentActivity<'_>> = BTreeMap::new();
    for (p, a) in posts.iter().zip(&annotations.posts) {
        agents.entry(p.agent_id.as_str()).or_default().posts.push(PostActivity {
            text: p.full_text(),
            submolt: &p.submolt,
            day: p.created().map(|t| t.utc_date()),
            injection: a.injection,
            duplicate: a.duplicate_spam,
            crypto: a.crypto,
        });
    }
    for (c, a) in comments.iter().zip(&annotations.comments) {
        agents.entry(c.agent_id.as_str()).or_default().comments.push(CommentActivity {
            manipulation: a.manipulation,
            on_own_post: author.get(c.post_id.as_str()) == Some(&c.agent_id.as_str()),
        });
    }

    let entries: Vec<(&str, AgentActivity<'_>)> = agents.into_iter().collect();
    let profiles: Vec<RiskProfile> = entries
        .par_iter()
        .map(|(id, act)| {
            let eligible = act.posts.len() >= MIN_POSTS;
            let indicators = if eligible { Some(compute_indicators(act, caps)?) } else { None };
            let score = indicators.as_ref().map(composite_score);
            Ok(RiskProfile {
                agent_id: id.to_string(),
                post_count: act.posts.len(),
                comment_count: act.comments.len(),
                eligible,
                indicators,
                score,
                tier: score.map(assign_tier),
            })
        })
        .collect::<Result<_, RiskError>>()?;

    let mut census = TierCensus::default();
    for t in profiles.iter().filter_map(|p| p.tier) {
        census.add(t);
    }
    let eligible = profiles.iter().filter(|p| p.eligible).count() as u64;
    Ok(RiskReport { caps: *caps, profiles, census, eligible })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn post(text: &str, submolt: &'static str) -> PostActivity<'static> {
        PostActivity {
            text: text.into(),
            submolt,
            day: NaiveDate::from_ymd_opt(2026, 2, 1),
            injection: false,
            duplicate: false,
            crypto: false,
        }
    }

    #[test]
    fn weight_arithmetic() {
        assert_eq!(WEIGHTS.iter().sum::<f64>(), 100.0);
        assert_eq!(composite_score(&RiskIndicators::default()), 0.0);
        assert_eq!(composite_score(&RiskIndicators::from_array([1.0; 8])), 100.0);
        let ind = RiskIndicators { injection_rate: 1.0, duplicate_rate: 1.0, ..Default::default() };
        assert_eq!(composite_score(&ind), 40.0);
    }

    #[test]
    fn tier_boundaries() {
        assert_eq!(assign_tier(0.0), Tier::Low);
        assert_eq!(assign_tier(14.999), Tier::Low);
        assert_eq!(assign_tier(15.0), Tier::Moderate);
        assert_eq!(assign_tier(34.999_999), Tier::Moderate);
        assert_eq!(assign_tier(35.0), Tier::High);
        assert_eq!(assign_tier(59.999), Tier::High);
        assert_eq!(assign_tier(60.0), Tier::Critical);
        assert_eq!(assign_tier(100.0), Tier::Critical);
    }

    #[test]
    fn all_injection_posts() {
        let mut a = AgentActivity { posts: vec![post("a b", "x"), post("c d", "x")], comments: vec![] };
        for p in &mut a.posts {
            p.injection = true;
        }
        let ind = compute_indicators(&a, &RiskCaps::default()).unwrap();
        assert_eq!(ind.injection_rate, 1.0);
        assert_eq!(ind.self_interaction_rate, 0.0);
    }

    #[test]
    fn uniform_submolt_split() {
        let a =
            AgentActivity { posts: ["a", "b", "c", "d"].iter().map(|s| post("hello", s)).collect(), comments: vec![] };
        assert_eq!(compute_indicators(&a, &RiskCaps::default()).unwrap().submolt_concentration, 0.25);
    }

    #[test]
    fn zero_posts_is_an_error() {
        assert_eq!(compute_indicators(&AgentActivity::default(), &RiskCaps::default()), Err(RiskError::NoPosts));
    }

    #[test]
    fn caps_saturate() {
        let mut a = AgentActivity { posts: vec![post("x", "s"); 300], comments: vec![] };
        a.comments = vec![CommentActivity { manipulation: true, on_own_post: true }; 25];
        let ind = compute_indicators(&a, &RiskCaps::default()).unwrap();
        assert_eq!(ind.abnormal_frequency, 1.0);
        assert_eq!(ind.manipulation_count_norm, 1.0);
        assert_eq!(ind.self_interaction_rate, 1.0);
        a.posts.truncate(50);
        a.comments.truncate(4);
        let ind = compute_indicators(&a, &RiskCaps::default()).unwrap();
        assert_eq!(ind.abnormal_frequency, 0.25);
        assert_eq!(ind.manipulation_count_norm, 0.4);
        assert!(RiskCaps { posts_per_day: 0.0, ..Default::default() }.validate().is_err());
    }

    fn oracle_entropy_ratio(tokens: &[&str]) -> f64 {
        let n = tokens.len();
        let mut sorted = tokens.to_vec();
        sorted.sort();
        let mut h = 0.0;
        let mut i = 0;
        while i < n {
            let j = (i..n).find(|&j| sorted[j] != sorted[i]).unwrap_or(n);
            let p = (j - i) as f64 / n as f64;
            h -= p * p.log2();
            i = j;
        }
        1.0 - h / (n as f64).log2()
    }

    #[test]
    fn repetition_drives_repetitiveness_to_one() {
        let text = "the quick brown fox jumps over the lazy dog";
        let mut last = -1.0;
        for reps in [1, 2, 8, 64, 1024] {
            let tokens: Vec<&str> = std::iter::repeat_n(text, reps).flat_map(str::split_whitespace).collect();
            let r = repetitiveness(tokens.iter().copied());
            assert!((r - oracle_entropy_ratio(&tokens)).abs() < 1e-12);
            assert!(r > last);
            last = r;
        }
        assert!(last > 0.6);
        assert_eq!(repetitiveness(["solo"]), 0.0);
        assert_eq!(repetitiveness(["spam", "spam", "spam"]), 1.0);
        assert!(repetitiveness(["a", "b", "c", "d"]).abs() < 1e-12);
    }

    fn indicators() -> impl Strategy<Value = RiskIndicators> {
        proptest::array::uniform8(0.0f64..=1.0).prop_map(RiskIndicators::from_array)
    }

    proptest! {
        #[test]
        fn score_bounded_and_monotone(ind in indicators(), k in 0usize..8, bump in 0.0f64..=1.0) {
            let s = composite_score(&ind);
            prop_assert!((0.0..=100.0).contains(&s));
            let mut v = ind.to_array();
            v[k] = (v[k] + bump).min(1.0);
            prop_assert!(composite_score(&RiskIndicators::from_array(v)) >= s);
        }

        #[test]
        fn common_scaling_preserves_order(a in indicators(), b in indicators(), c in 0.001f64..=1.0) {
            let scale = |x: &RiskIndicators| RiskIndicators::from_array(x.to_array().map(|v| v * c));
            let (sa, sb) = (composite_score(&a), composite_score(&b));
            let (ta, tb) = (composite_score(&scale(&a)), composite_score(&scale(&b)));
            if (sa - sb).abs() > 1e-9 {
                prop_assert_eq!(sa < sb, ta < tb);
            }
        }

        #[test]
        fn repetitiveness_in_unit_interval(tokens in proptest::collection::vec("[a-e]{1,2}", 0..60)) {
            let r = repetitiveness(tokens.iter().map(String::as_str));
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }
}
