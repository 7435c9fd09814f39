//! Composite lexicon sentiment. Scores are approximate.

use std::collections::HashMap;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{estimator}: {reason}")]
pub struct EstimatorError {
    pub estimator: String,
    pub reason: String,
}

pub trait PolarityEstimator: Send + Sync {
    fn name(&self) -> &str;
    /// Polarity in [-1, 1].
    fn polarity(&self, text: &str) -> Result<f64, EstimatorError>;
}

pub const POSITIVE_THRESHOLD: f64 = 0.05;
pub const NEGATIVE_THRESHOLD: f64 = -0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentClass {
    Positive,
    Neutral,
    Negative,
}

impl SentimentClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            SentimentClass::Positive => "positive",
            SentimentClass::Neutral => "neutral",
            SentimentClass::Negative => "negative",
        }
    }
}

pub fn classify(score: f64) -> SentimentClass {
    if score > POSITIVE_THRESHOLD {
        SentimentClass::Positive
    } else if score < NEGATIVE_THRESHOLD {
        SentimentClass::Negative
    } else {
        SentimentClass::Neutral
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sentiment {
    pub score: f64,
    pub class: SentimentClass,
    /// Set when either estimator failed or returned an out-of-range value.
    pub failed: bool,
}

impl Sentiment {
    pub const FAILED: Sentiment = Sentiment { score: 0.0, class: SentimentClass::Neutral, failed: true };
}

fn checked(est: &dyn PolarityEstimator, text: &str) -> Option<f64> {
    match est.polarity(text) {
        Ok(v) if (-1.0..=1.0).contains(&v) => Some(v),
        Ok(v) => {
            tracing::debug!(estimator = est.name(), value = v, "polarity out of range");
            None
        }
        Err(e) => {
            tracing::debug!(error = %e, "polarity estimator failed");
            None
        }
    }
}

/// Mean of the two estimates with the fixed class thresholds.
pub fn sentiment(text: &str, a: &dyn PolarityEstimator, b: &dyn PolarityEstimator) -> Sentiment {
    match (checked(a, text), checked(b, text)) {
        (Some(x), Some(y)) => {
            let score = (x + y) / 2.0;
            Sentiment { score, class: classify(score), failed: false }
        }
        _ => Sentiment::FAILED,
    }
}

/// Class counts and mean score over a corpus.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SentimentSummary {
    pub positive: u64,
    pub neutral: u64,
    pub negative: u64,
    pub failures: u64,
    pub mean: f64,
}

impl SentimentSummary {
    pub fn total(&self) -> u64 {
        self.positive + self.neutral + self.negative
    }

    pub fn from_scores<'a>(items: impl IntoIterator<Item = &'a Sentiment>) -> Self {
        let mut s = SentimentSummary::default();
        let mut sum = 0.0;
        for item in items {
            match item.class {
                SentimentClass::Positive => s.positive += 1,
                SentimentClass::Neutral => s.neutral += 1,
                SentimentClass::Negative => s.negative += 1,
            }
            s.failures += item.failed as u64;
            sum += item.score;
        }
        let n = s.total();
        s.mean = if n == 0 { 0.0 } else { sum / n as f64 };
        s
    }
}

fn tokens(text: &str) -> Vec<&str> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric() && !EMOTICONS.contains_key(t)))
        .filter(|t| !t.is_empty())
        .collect()
}

static EMOTICONS: LazyLock<HashMap<&'static str, f64>> = LazyLock::new(|| {
    HashMap::from([(":)", 2.0), (":-)", 2.0), (":D", 2.3), ("<3", 1.9), (":(", -1.9), (":-(", -1.9), (":/", -1.0)])
});

const NEGATIONS: &[&str] = &[
    "not",
    "no",
    "never",
    "none",
    "nobody",
    "nothing",
    "neither",
    "nor",
    "without",
    "cannot",
    "can't",
    "don't",
    "doesn't",
    "didn't",
    "isn't",
    "aren't",
    "wasn't",
    "won't",
    "wouldn't",
    "shouldn't",
];

fn is_negation(tok: &str) -> bool {
    let t = tok.to_lowercase();
    NEGATIONS.contains(&t.as_str()) || t.ends_with("n't")
}

/// Valences on a -4..4 scale, tuned for short informal posts.
static SOCIAL_LEXICON: LazyLock<HashMap<&'static str, f64>> = LazyLock::new(|| {
    HashMap::from([
        ("good", 1.9),
        ("great", 3.1),
        ("excellent", 2.7),
        ("amazing", 2.8),
        ("awesome", 3.1),
        ("love", 3.2),
        ("loved", 2.9),
        ("like", 1.5),
        ("liked", 1.8),
        ("nice", 1.8),
        ("happy", 2.7),
        ("glad", 2.0),
        ("thanks", 1.9),
        ("thank", 1.5),
        ("helpful", 1.8),
        ("useful", 1.9),
        ("fun", 2.3),
        ("cool", 1.3),
        ("beautiful", 2.9),
        ("wonderful", 2.7),
        ("best", 3.2),
        ("better", 1.9),
        ("win", 2.8),
        ("wins", 2.7),
        ("success", 2.7),
        ("excited", 2.2),
        ("interesting", 1.7),
        ("fascinating", 2.4),
        ("agree", 1.5),
        ("hope", 1.9),
        ("welcome", 2.0),
        ("lol", 1.8),
        ("yay", 2.4),
        ("wow", 2.0),
        ("curious", 1.3),
        ("kind", 2.4),
        ("proud", 2.1),
        ("bad", -2.5),
        ("terrible", -2.1),
        ("awful", -2.0),
        ("horrible", -2.5),
        ("hate", -2.7),
        ("hated", -3.2),
        ("sad", -2.1),
        ("angry", -2.3),
        ("worst", -3.1),
        ("worse", -2.1),
        ("boring", -1.3),
        ("broken", -1.8),
        ("fail", -2.5),
        ("failed", -2.3),
        ("failure", -2.3),
        ("wrong", -2.1),
        ("problem", -1.7),
        ("problems", -1.7),
        ("annoying", -1.8),
        ("stupid", -2.4),
        ("ugly", -2.3),
        ("afraid", -2.2),
        ("scared", -1.9),
        ("lonely", -1.9),
        ("confused", -1.3),
        ("disappointed", -1.9),
        ("useless", -1.8),
        ("scam", -2.9),
        ("spam", -1.5),
        ("danger", -2.4),
        ("dangerous", -2.1),
        ("lost", -1.3),
        ("lose", -1.7),
        ("kill", -3.7),
        ("dead", -3.3),
        ("crash", -1.7),
        ("sorry", -0.3),
        ("ugh", -1.8),
        ("meh", -0.3),
    ])
});

const SOCIAL_BOOSTERS: &[&str] =
    &["very", "really", "so", "extremely", "incredibly", "totally", "absolutely", "super", "highly", "truly"];

/// Informal-text estimator: summed valences with negation, boosters,
/// capitalized emphasis and exclamation marks, normalized to [-1, 1].
#[derive(Debug, Default, Clone, Copy)]
pub struct SocialLexicon;

impl PolarityEstimator for SocialLexicon {
    fn name(&self) -> &str {
        "social-lexicon"
    }

    fn polarity(&self, text: &str) -> Result<f64, EstimatorError> {
        let toks = tokens(text);
        let shouting_text = toks.iter().all(|t| t.chars().all(|c| !c.is_lowercase()));
        let mut sum = 0.0;
        for (i, tok) in toks.iter().enumerate() {
            let lower = tok.to_lowercase();
            let Some(&base) = SOCIAL_LEXICON.get(lower.as_str()).or_else(|| EMOTICONS.get(tok)) else {
                continue;
            };
            let mut v = base;
            if !shouting_text && tok.len() > 1 && tok.chars().all(|c| !c.is_lowercase()) {
                v += 0.733 * v.signum();
            }
            let window = &toks[i.saturating_sub(3)..i];
            if let Some(prev) = window.last() {
                if SOCIAL_BOOSTERS.contains(&prev.to_lowercase().as_str()) {
                    v += 0.293 * v.signum();
                }
            }
            if window.iter().any(|t| is_negation(t)) {
                v *= -0.74;
            }
            sum += v;
        }
        if sum != 0.0 {
            let bangs = text.matches('!').count().min(4) as f64;
            sum += bangs * 0.292 * sum.signum();
        }
        Ok((sum / (sum * sum + 15.0).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Polarities in [-1, 1] for a more restrained vocabulary.
static CONSERVATIVE_LEXICON: LazyLock<HashMap<&'static str, f64>> = LazyLock::new(|| {
    HashMap::from([
        ("good", 0.7),
        ("great", 0.8),
        ("excellent", 1.0),
        ("amazing", 0.6),
        ("awesome", 1.0),
        ("love", 0.5),
        ("nice", 0.6),
        ("happy", 0.8),
        ("glad", 0.5),
        ("helpful", 0.5),
        ("useful", 0.3),
        ("fun", 0.3),
        ("cool", 0.35),
        ("beautiful", 0.85),
        ("wonderful", 1.0),
        ("best", 1.0),
        ("better", 0.5),
        ("interesting", 0.5),
        ("fascinating", 0.5),
        ("kind", 0.6),
        ("proud", 0.8),
        ("welcome", 0.8),
        ("new", 0.14),
        ("right", 0.29),
        ("true", 0.35),
        ("clear", 0.1),
        ("important", 0.4),
        ("free", 0.4),
        ("easy", 0.43),
        ("strong", 0.43),
        ("bad", -0.7),
        ("terrible", -1.0),
        ("awful", -1.0),
        ("horrible", -1.0),
        ("sad", -0.5),
        ("angry", -0.5),
        ("worst", -1.0),
        ("worse", -0.4),
        ("boring", -1.0),
        ("broken", -0.4),
        ("wrong", -0.5),
        ("annoying", -0.8),
        ("stupid", -0.8),
        ("ugly", -0.7),
        ("afraid", -0.6),
        ("lonely", -0.5),
        ("confused", -0.4),
        ("disappointed", -0.75),
        ("useless", -0.5),
        ("difficult", -0.5),
        ("hard", -0.29),
        ("dangerous", -0.6),
        ("lost", -0.1),
        ("dead", -0.2),
        ("poor", -0.4),
        ("false", -0.35),
        ("old", 0.1),
        ("little", -0.19),
        ("late", -0.3),
    ])
});

const CONSERVATIVE_INTENSIFIERS: &[(&str, f64)] =
    &[("very", 1.3), ("really", 1.2), ("extremely", 1.5), ("so", 1.2), ("quite", 1.1), ("slightly", 0.7)];

/// Restrained estimator: mean polarity of matched words, with intensifier
/// scaling and negation damping.
#[derive(Debug, Default, Clone, Copy)]
pub struct ConservativeLexicon;

impl PolarityEstimator for ConservativeLexicon {
    fn name(&self) -> &str {
        "conservative-lexicon"
    }

    fn polarity(&self, text: &str) -> Result<f64, EstimatorError> {
        let toks: Vec<String> = tokens(text).into_iter().map(str::to_lowercase).collect();
        let mut total = 0.0;
        let mut n = 0usize;
        for (i, tok) in toks.iter().enumerate() {
            let Some(&base) = CONSERVATIVE_LEXICON.get(tok.as_str()) else {
                continue;
            };
            let mut v = base;
            if i > 0 {
                if let Some((_, f)) = CONSERVATIVE_INTENSIFIERS.iter().find(|(w, _)| *w == toks[i - 1]) {
                    v *= f;
                }
            }
            if toks[i.saturating_sub(2)..i].iter().any(|t| is_negation(t)) {
                v *= -0.5;
            }
            total += v.clamp(-1.0, 1.0);
            n += 1;
        }
        Ok(if n == 0 { 0.0 } else { total / n as f64 })
    }
}
