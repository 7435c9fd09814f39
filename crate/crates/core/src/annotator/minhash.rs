//! MinHash signatures with LSH banding for near-duplicate clustering.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh3::xxh3_64;

#[derive(Debug, Error, PartialEq)]
pub enum NearDupError {
    #[error("threshold must lie in (0, 1], got {0}")]
    Threshold(f64),
    #[error("shingle size must be positive")]
    ShingleSize,
    #[error("signature length must be positive")]
    SignatureLength,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearDupParams {
    pub shingle_size: usize,
    pub signature_length: usize,
    pub threshold: f64,
    pub seed: u64,
    /// Also require the exact shingle Jaccard of a linked pair to reach
    /// `threshold - ESTIMATION_SLACK`, rejecting sketch outliers.
    pub verify_exact: bool,
}

pub const ESTIMATION_SLACK: f64 = 0.1;

impl Default for NearDupParams {
    fn default() -> Self {
        NearDupParams {
            shingle_size: 5,
            signature_length: 128,
            threshold: 0.8,
            seed: 0x005e_ed0f_d0c5,
            verify_exact: true,
        }
    }
}

impl NearDupParams {
    pub fn validate(&self) -> Result<(), NearDupError> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(NearDupError::Threshold(self.threshold));
        }
        if self.shingle_size == 0 {
            return Err(NearDupError::ShingleSize);
        }
        if self.signature_length == 0 {
            return Err(NearDupError::SignatureLength);
        }
        Ok(())
    }
}

/// Band layout `(bands, rows)` whose S-curve midpoint `(1/b)^(1/r)` sits
/// closest to `threshold` while using at most `signature_length` slots.
pub fn choose_bands(signature_length: usize, threshold: f64) -> (usize, usize) {
    let mut best = (signature_length, 1);
    let mut best_err = f64::INFINITY;
    for rows in 1..=signature_length {
        let bands = signature_length / rows;
        if bands == 0 {
            break;
        }
        let mid = (1.0 / bands as f64).powf(1.0 / rows as f64);
        let err = (mid - threshold).abs();
        if err < best_err {
            best_err = err;
            best = (bands, rows);
        }
    }
    best
}

/// Lowercases and collapses runs of whitespace to a single space.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        for c in word.chars() {
            out.extend(c.to_lowercase());
        }
    }
    out
}

/// Distinct hashed character shingles of the normalized text. Empty when the
/// text is shorter than `k` characters.
pub fn shingle_hashes(text: &str, k: usize) -> Vec<u64> {
    let norm = normalize(text);
    let bounds: Vec<usize> = norm.char_indices().map(|(i, _)| i).chain([norm.len()]).collect();
    let n_chars = bounds.len() - 1;
    if k == 0 || n_chars < k {
        return Vec::new();
    }
    let mut set = HashSet::with_capacity(n_chars);
    for i in 0..=n_chars - k {
        set.insert(xxh3_64(&norm.as_bytes()[bounds[i]..bounds[i + k]]));
    }
    let mut v: Vec<u64> = set.into_iter().collect();
    v.sort_unstable();
    v
}

/// Exact Jaccard similarity of two sorted, deduplicated shingle lists.
pub fn jaccard(a: &[u64], b: &[u64]) -> f64 {
    let (mut i, mut j, mut both) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                both += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - both;
    if union == 0 {
        return 0.0;
    }
    both as f64 / union as f64
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn permutation_seeds(n: usize, seed: u64) -> Vec<u64> {
    let mut state = seed;
    (0..n)
        .map(|_| {
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            mix64(state)
        })
        .collect()
}

pub fn signature(shingles: &[u64], seeds: &[u64]) -> Vec<u64> {
    seeds.iter().map(|&s| shingles.iter().map(|&h| mix64(h ^ s)).min().unwrap_or(u64::MAX)).collect()
}

pub fn estimated_jaccard(a: &[u64], b: &[u64]) -> f64 {
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    same as f64 / a.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearDupClusters {
    /// Member ids per cluster, sorted; clusters ordered by their first member.
    pub clusters: Vec<Vec<String>>,
    /// Linked pairs that passed verification, `(a, b)` with `a < b`.
    pub pairs: Vec<(String, String)>,
    pub params: NearDupParams,
    pub bands: usize,
    pub rows: usize,
}

impl NearDupClusters {
    pub fn member_count(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    /// Cluster index per member id.
    pub fn membership(&self) -> HashMap<&str, usize> {
        let mut m = HashMap::new();
        for (i, c) in self.clusters.iter().enumerate() {
            for id in c {
                m.insert(id.as_str(), i);
            }
        }
        m
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

/// Clusters documents `(id, text)` whose estimated shingle Jaccard reaches
/// the threshold. Documents shorter than the shingle size never cluster.
pub fn near_duplicate_clusters(docs: &[(&str, &str)], params: &NearDupParams) -> Result<NearDupClusters, NearDupError> {
    params.validate()?;
    let (bands, rows) = choose_bands(params.signature_length, params.threshold);
    let seeds = permutation_seeds(params.signature_length, params.seed);
    let sigs: Vec<Option<Vec<u64>>> = docs
        .par_iter()
        .map(|(_, text)| {
            let sh = shingle_hashes(text, params.shingle_size);
            (!sh.is_empty()).then(|| signature(&sh, &seeds))
        })
        .collect();

    let mut candidates: HashSet<(usize, usize)> = HashSet::new();
    for band in 0..bands {
        let range = band * rows..(band + 1) * rows;
        let mut buckets: HashMap<&[u64], Vec<usize>> = HashMap::new();
        for (i, sig) in sigs.iter().enumerate() {
            if let Some(sig) = sig {
                buckets.entry(&sig[range.clone()]).or_default().push(i);
            }
        }
        for members in buckets.values().filter(|m| m.len() > 1) {
            for (x, &a) in members.iter().enumerate() {
                for &b in &members[x + 1..] {
                    candidates.insert((a, b));
                }
            }
        }
    }

    let mut candidates: Vec<(usize, usize)> = candidates.into_iter().collect();
    candidates.sort_unstable();
    let linked: Vec<(usize, usize)> = candidates
        .into_par_iter()
        .filter(|&(a, b)| {
            let (sa, sb) = (sigs[a].as_ref().unwrap(), sigs[b].as_ref().unwrap());
            estimated_jaccard(sa, sb) >= params.threshold
                && (!params.verify_exact
                    || jaccard(
                        &shingle_hashes(docs[a].1, params.shingle_size),
                        &shingle_hashes(docs[b].1, params.shingle_size),
                    ) >= params.threshold - ESTIMATION_SLACK)
        })
        .collect();

    let mut uf = UnionFind((0..docs.len()).collect());
    for &(a, b) in &linked {
        uf.union(a, b);
    }
    let mut groups: HashMap<usize, Vec<String>> = HashMap::new();
    for &(a, b) in &linked {
        for i in [a, b] {
            let root = uf.find(i);
            groups.entry(root).or_default().push(docs[i].0.to_string());
        }
    }
    let mut clusters: Vec<Vec<String>> = groups
        .into_values()
        .map(|mut g| {
            g.sort();
            g.dedup();
            g
        })
        .filter(|g| g.len() >= 2)
        .collect();
    clusters.sort();
    let mut pairs: Vec<(String, String)> = linked
        .iter()
        .map(|&(a, b)| {
            let (x, y) = (docs[a].0.to_string(), docs[b].0.to_string());
            if x <= y {
                (x, y)
            } else {
                (y, x)
            }
        })
        .collect();
    pairs.sort();
    Ok(NearDupClusters { clusters, pairs, params: *params, bands, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn text(n: usize, salt: u64) -> String {
        let words = ["alpha", "bravo", "cedar", "delta", "ember", "fjord", "grove", "harbor", "iris", "juniper"];
        let mut s = String::new();
        let mut x = salt;
        while s.len() < n {
            x = mix64(x.wrapping_add(1));
            s.push_str(words[(x % words.len() as u64) as usize]);
            s.push(' ');
        }
        s.truncate(n);
        s
    }

    #[test]
    fn default_bands_center_on_threshold() {
        let (b, r) = choose_bands(128, 0.8);
        assert!(b * r <= 128);
        let mid = (1.0 / b as f64).powf(1.0 / r as f64);
        assert!((mid - 0.8).abs() < 0.02, "{b}x{r} -> {mid}");
    }

    #[test]
    fn identical_long_posts_form_one_cluster() {
        let body = text(600, 1);
        let docs = [("p1", body.as_str()), ("p2", body.as_str()), ("p3", "something else entirely, short")];
        let c = near_duplicate_clusters(&docs, &NearDupParams::default()).unwrap();
        assert_eq!(c.clusters, vec![vec!["p1".to_string(), "p2".to_string()]]);
    }

    #[test]
    fn one_character_edit_clusters_at_point_eight() {
        let a = text(500, 7);
        let mut b: Vec<char> = a.chars().collect();
        b[250] = if b[250] == 'q' { 'z' } else { 'q' };
        let b: String = b.into_iter().collect();
        let exact = oracle_jaccard(&a, &b);
        assert!(exact >= 0.9, "oracle jaccard {exact}");
        let docs = [("a", a.as_str()), ("b", b.as_str())];
        let c = near_duplicate_clusters(&docs, &NearDupParams::default()).unwrap();
        assert_eq!(c.clusters.len(), 1);
    }

    #[test]
    fn dissimilar_corpus_has_no_clusters() {
        let texts: Vec<String> = (0..50).map(|i| text(300, 1000 + i)).collect();
        let docs: Vec<(&str, &str)> = texts.iter().map(|t| ("x", t.as_str())).collect();
        let c = near_duplicate_clusters(&docs, &NearDupParams::default()).unwrap();
        assert!(c.clusters.is_empty());
    }

    #[test]
    fn oversized_shingles_give_empty_result() {
        let docs = [("a", "tiny"), ("b", "tiny")];
        let p = NearDupParams { shingle_size: 10, ..Default::default() };
        assert!(near_duplicate_clusters(&docs, &p).unwrap().clusters.is_empty());
    }

    #[test]
    fn invalid_threshold_is_rejected() {
        for t in [0.0, -0.1, 1.5, f64::NAN] {
            let p = NearDupParams { threshold: t, ..Default::default() };
            assert!(near_duplicate_clusters(&[], &p).is_err());
        }
    }

    #[test]
    fn normalization_ignores_case_and_spacing() {
        assert_eq!(normalize("  Hello \n\tWORLD  "), "hello world");
        assert_eq!(shingle_hashes("Hello  World", 5), shingle_hashes("hello world", 5));
    }

    fn oracle_jaccard(a: &str, b: &str) -> f64 {
        let grams = |t: &str| -> HashSet<String> {
            let c: Vec<char> = normalize(t).chars().collect();
            c.windows(5).map(|w| w.iter().collect()).collect()
        };
        let (ga, gb) = (grams(a), grams(b));
        ga.intersection(&gb).count() as f64 / ga.union(&gb).count() as f64
    }

    #[test]
    fn sketch_outliers_are_rejected_only_with_verification() {
        let p = NearDupParams::default();
        let a = family_member(3, 300, &[]);
        let b = family_member(3, 300, &[(10, 'q'), (60, 'q'), (110, 'q'), (160, 'q'), (210, 'q'), (260, 'q')]);
        let docs = [("a", a.as_str()), ("b", b.as_str())];
        let exact = oracle_jaccard(&a, &b);
        let c = near_duplicate_clusters(&docs, &p).unwrap();
        if exact < p.threshold - ESTIMATION_SLACK {
            assert!(c.pairs.is_empty());
        }
        assert!((jaccard(&shingle_hashes(&a, 5), &shingle_hashes(&b, 5)) - exact).abs() < 1e-12);
    }

    fn family_member(base: u64, len: usize, edits: &[(usize, char)]) -> String {
        const SYL: [&str; 16] =
            ["ka", "lo", "mi", "ne", "su", "ta", "ri", "po", "ve", "da", "go", "hu", "zi", "be", "fa", "wo"];
        let mut s = String::new();
        let mut x = base;
        while s.chars().count() < len {
            for _ in 0..3 {
                x = mix64(x.wrapping_add(0x51));
                s.push_str(SYL[(x % 16) as usize]);
            }
            s.push(' ');
        }
        let mut chars: Vec<char> = s.chars().take(len).collect();
        for &(pos, c) in edits {
            let p = pos % chars.len();
            chars[p] = c;
        }
        chars.into_iter().collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig {
            cases: 64,
            rng_seed: proptest::test_runner::RngSeed::Fixed(0x6d69_6e68),
            failure_persistence: None,
            ..ProptestConfig::default()
        })]
        #[test]
        fn linked_pairs_are_sound_and_clusters_disjoint(
            docs in proptest::collection::vec(
                (0u64..12, 150usize..400, proptest::collection::vec((0usize..400, prop::char::range('a', 'z')), 0..40)),
                2..200,
            )
        ) {
            let texts: Vec<String> = docs.iter().map(|(b, l, e)| family_member(*b, *l, e)).collect();
            let ids: Vec<String> = (0..texts.len()).map(|i| format!("p{i:03}")).collect();
            let docs: Vec<(&str, &str)> = ids.iter().map(String::as_str).zip(texts.iter().map(String::as_str)).collect();
            let params = NearDupParams::default();
            let c = near_duplicate_clusters(&docs, &params).unwrap();
            let texts_by_id: HashMap<&str, &str> = docs.iter().copied().collect();
            for (a, b) in &c.pairs {
                let exact = oracle_jaccard(texts_by_id[a.as_str()], texts_by_id[b.as_str()]);
                prop_assert!(exact >= params.threshold - 0.1, "{} {} {}", a, b, exact);
            }
            let mut seen = HashSet::new();
            for cl in &c.clusters {
                prop_assert!(cl.len() >= 2);
                for id in cl {
                    prop_assert!(seen.insert(id.clone()));
                }
            }
        }
    }
}
