//! Heuristic content annotations over posts and comments.

pub mod minhash;
pub mod patterns;
pub mod sentiment;

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{CommentRecord, PostRecord};
pub use minhash::{near_duplicate_clusters, NearDupClusters, NearDupError, NearDupParams};
pub use patterns::{PatternError, PatternSet};
pub use sentiment::{
    classify, sentiment, ConservativeLexicon, PolarityEstimator, Sentiment, SentimentClass, SentimentSummary,
    SocialLexicon,
};

fn joined(title: &str, content: &str) -> String {
    let mut s = String::with_capacity(title.len() + content.len() + 1);
    s.push_str(title);
    s.push(' ');
    s.push_str(content);
    s
}

pub fn flag_injection(p: &PatternSet, title: &str, content: &str) -> bool {
    p.injection.is_match(&joined(title, content))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CryptoFlags {
    pub crypto: bool,
    pub pump_dump: bool,
}

pub fn flag_crypto(p: &PatternSet, title: &str, content: &str) -> CryptoFlags {
    let hits = p.crypto.matching(&joined(title, content));
    CryptoFlags { crypto: !hits.is_empty(), pump_dump: hits.iter().any(|i| p.pump_dump_indices().contains(i)) }
}

pub fn flag_manipulation(p: &PatternSet, content: &str) -> bool {
    p.manipulation.matching(content).len() >= 2
}

pub fn flag_ideological(p: &PatternSet, title: &str, content: &str) -> bool {
    p.ideological.matching(&joined(title, content)).len() >= 2
}

/// Comment-level flag for API-command injection; less thoroughly validated
/// than the post-level injection flag.
pub fn flag_api_injection(p: &PatternSet, content: &str) -> bool {
    let hits = p.injection.matching(content);
    hits.iter().any(|i| p.api_injection_indices().contains(i))
}

/// Flags every record whose key occurs at least twice.
pub fn find_exact_duplicates<K: Hash + Eq>(keys: &[K]) -> Vec<bool> {
    let mut counts: HashMap<&K, u32> = HashMap::with_capacity(keys.len());
    for k in keys {
        *counts.entry(k).or_default() += 1;
    }
    keys.iter().map(|k| counts[k] >= 2).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostAnnotation {
    pub id: String,
    pub injection: bool,
    pub crypto: bool,
    pub pump_dump: bool,
    pub duplicate_spam: bool,
    pub ideological: bool,
    pub near_dup_cluster: Option<u32>,
    pub sentiment: f64,
    pub sentiment_class: SentimentClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentAnnotation {
    pub id: String,
    pub bot_comment: bool,
    pub manipulation: bool,
    pub api_injection: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSummary {
    pub posts: u64,
    pub comments: u64,
    pub injection: u64,
    pub injection_agents: u64,
    pub crypto: u64,
    pub pump_dump: u64,
    pub duplicate_spam: u64,
    pub ideological: u64,
    pub bot_comments: u64,
    pub manipulation: u64,
    pub api_injection: u64,
    pub near_dup_clusters: u64,
    pub near_dup_posts: u64,
    pub sentiment: SentimentSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub pattern_version: String,
    pub pattern_sha256: String,
    pub posts: Vec<PostAnnotation>,
    pub comments: Vec<CommentAnnotation>,
    pub near_duplicates: NearDupClusters,
    pub summary: AnnotationSummary,
}

/// Bundles the pattern set, the two sentiment estimators and the
/// near-duplicate parameters.
pub struct Annotator {
    pub patterns: PatternSet,
    pub estimators: (Box<dyn PolarityEstimator>, Box<dyn PolarityEstimator>),
    pub near_dup: NearDupParams,
}

impl Default for Annotator {
    fn default() -> Self {
        Annotator {
            patterns: PatternSet::default(),
            estimators: (Box::new(SocialLexicon), Box::new(ConservativeLexicon)),
            near_dup: NearDupParams::default(),
        }
    }
}

impl Annotator {
    pub fn with_patterns(patterns: PatternSet) -> Self {
        Annotator { patterns, ..Default::default() }
    }

    pub fn sentiment(&self, text: &str) -> Sentiment {
        sentiment(text, self.estimators.0.as_ref(), self.estimators.1.as_ref())
    }

    pub fn annotate(&self, posts: &[PostRecord], comments: &[CommentRecord]) -> Result<AnnotationSet, NearDupError> {
        let p = &self.patterns;
        let post_keys: Vec<(&str, &str)> = posts.iter().map(|r| (r.agent_name.as_str(), r.title.as_str())).collect();
        let dup_posts = find_exact_duplicates(&post_keys);
        let comment_keys: Vec<(&str, &str)> =
            comments.iter().map(|r| (r.agent_name.as_str(), r.content.as_str())).collect();
        let dup_comments = find_exact_duplicates(&comment_keys);

        // Near-duplicate clustering runs over first occurrences of each exact key.
        let mut seen = HashSet::new();
        let texts: Vec<String> = posts.iter().map(PostRecord::full_text).collect();
        let docs: Vec<(&str, &str)> = posts
            .iter()
            .zip(&texts)
            .zip(&post_keys)
            .filter(|(_, key)| seen.insert(*key))
            .map(|((r, t), _)| (r.id.as_str(), t.as_str()))
            .collect();
        let near = near_duplicate_clusters(&docs, &self.near_dup)?;
        let membership = near.membership();

        let post_anns: Vec<PostAnnotation> = posts
            .par_iter()
            .zip(texts.par_iter())
            .zip(dup_posts.par_iter())
            .map(|((r, text), &dup)| {
                let c = flag_crypto(p, &r.title, &r.content);
                let s = self.sentiment(text);
                PostAnnotation {
                    id: r.id.clone(),
                    injection: flag_injection(p, &r.title, &r.content),
                    crypto: c.crypto,
                    pump_dump: c.pump_dump,
                    duplicate_spam: dup,
                    ideological: flag_ideological(p, &r.title, &r.content),
                    near_dup_cluster: membership.get(r.id.as_str()).map(|&i| i as u32),
                    sentiment: s.score,
                    sentiment_class: s.class,
                }
            })
            .collect();
        let sentiments: Vec<Sentiment> = post_anns
            .iter()
            .map(|a| Sentiment { score: a.sentiment, class: a.sentiment_class, failed: false })
            .collect();
        let failures = texts.par_iter().filter(|t| self.sentiment(t).failed).count() as u64;

        let comment_anns: Vec<CommentAnnotation> = comments
            .par_iter()
            .zip(dup_comments.par_iter())
            .map(|(r, &dup)| CommentAnnotation {
                id: r.id.clone(),
                bot_comment: dup,
                manipulation: flag_manipulation(p, &r.content),
                api_injection: flag_api_injection(p, &r.content),
            })
            .collect();

        let count = |f: &dyn Fn(&PostAnnotation) -> bool| post_anns.iter().filter(|a| f(a)).count() as u64;
        let ccount = |f: &dyn Fn(&CommentAnnotation) -> bool| comment_anns.iter().filter(|a| f(a)).count() as u64;
        let injection_agents = posts
            .iter()
            .zip(&post_anns)
            .filter(|(_, a)| a.injection)
            .map(|(r, _)| r.agent_id.as_str())
            .collect::<HashSet<_>>()
            .len() as u64;
        let mut sentiment_summary = SentimentSummary::from_scores(&sentiments);
        sentiment_summary.failures = failures;
        let summary = AnnotationSummary {
            posts: posts.len() as u64,
            comments: comments.len() as u64,
            injection: count(&|a| a.injection),
            injection_agents,
            crypto: count(&|a| a.crypto),
            pump_dump: count(&|a| a.pump_dump),
            duplicate_spam: count(&|a| a.duplicate_spam),
            ideological: count(&|a| a.ideological),
            bot_comments: ccount(&|a| a.bot_comment),
            manipulation: ccount(&|a| a.manipulation),
            api_injection: ccount(&|a| a.api_injection),
            near_dup_clusters: near.clusters.len() as u64,
            near_dup_posts: near.member_count() as u64,
            sentiment: sentiment_summary,
        };
        Ok(AnnotationSet {
            pattern_version: p.version.clone(),
            pattern_sha256: p.sha256.clone(),
            posts: post_anns,
            comments: comment_anns,
            near_duplicates: near,
            summary,
        })
    }
}
