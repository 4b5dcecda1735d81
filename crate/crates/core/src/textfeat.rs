//! Tokenization, hashed n-gram features and heuristic entity extraction.
//!
//! Every model in the crate consumes [`SparseVector`]s produced here. Feature
//! strings have the form `prefix:gram` (bigrams joined with `_`) and are hashed
//! with 64-bit FNV-1a, reduced modulo the dimension.

use std::collections::{BTreeSet, HashSet};
use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::corpus::split_sentences;
use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 1 << 15;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "from", "has", "have", "he",
    "her", "his", "i", "in", "into", "is", "it", "its", "of", "on", "or", "s", "she", "that",
    "the", "their", "them", "there", "they", "this", "to", "was", "were", "with", "you", "your",
];

/// Lowercased tokens plus the original-case spelling of each.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tokens {
    pub lower: Vec<String>,
    pub original: Vec<String>,
}

/// Splits on whitespace and punctuation; punctuation is dropped.
pub fn tokenize_cased(text: &str) -> Tokens {
    let original: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect();
    let lower = original.iter().map(|t| t.to_lowercase()).collect();
    Tokens { lower, original }
}

/// Lowercased tokens for featurization paths.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_cased(text).lower
}

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Unique non-stopword lowercase tokens in order of first appearance.
pub fn content_tokens(text: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    tokenize(text)
        .into_iter()
        .filter(|t| !is_stopword(t) && seen.insert(t.clone()))
        .collect()
}

/// Full 64-bit FNV-1a hash of the feature string `prefix:gram`.
pub fn feature_hash(prefix: &str, gram: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(prefix.as_bytes());
    h.write(b":");
    h.write(gram.as_bytes());
    h.finish()
}

fn bigram_hash(prefix: &str, left: &str, right: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(prefix.as_bytes());
    h.write(b":");
    h.write(left.as_bytes());
    h.write(b"_");
    h.write(right.as_bytes());
    h.finish()
}

/// Hash of a conjunction of two features, given their full hashes
/// (SplitMix64 finalizer over an asymmetric combination).
pub fn cross_hash(left: u64, right: u64) -> u64 {
    let mut z = left ^ right.rotate_left(29).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Unigram hashes of `tokens` under `prefix`.
pub fn token_hashes(prefix: &str, tokens: &[String]) -> Vec<u64> {
    tokens.iter().map(|t| feature_hash(prefix, t)).collect()
}

/// Appends the bucket of every `(left, right)` conjunction.
pub fn push_cross_buckets(left: &[u64], right: &[u64], dim: usize, out: &mut Vec<u32>) {
    out.reserve(left.len() * right.len());
    for &l in left {
        for &r in right {
            out.push(bucket(cross_hash(l, r), dim));
        }
    }
}

pub fn bucket(hash: u64, dim: usize) -> u32 {
    (hash % dim as u64) as u32
}

/// Sparse feature vector with strictly increasing indices below `dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a vector from unsorted `(index, value)` pairs; duplicate indices sum.
    pub fn from_pairs(dim: usize, mut pairs: Vec<(u32, f64)>) -> Result<Self> {
        pairs.sort_unstable_by_key(|p| p.0);
        let mut indices = Vec::with_capacity(pairs.len());
        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            if i as usize >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: i as usize + 1,
                });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("feature {i} = {v}")));
            }
            if indices.last() == Some(&i) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(i);
                values.push(v);
            }
        }
        Ok(SparseVector {
            dim,
            indices,
            values,
        })
    }

    /// Counts each bucket occurrence once and L2-normalizes.
    pub fn from_buckets(dim: usize, mut buckets: Vec<u32>) -> Self {
        buckets.sort_unstable();
        let mut indices = Vec::with_capacity(buckets.len());
        let mut values: Vec<f64> = Vec::with_capacity(buckets.len());
        for b in buckets {
            if indices.last() == Some(&b) {
                *values.last_mut().unwrap() += 1.0;
            } else {
                indices.push(b);
                values.push(1.0);
            }
        }
        let mut v = SparseVector {
            dim,
            indices,
            values,
        };
        v.normalize();
        v
    }

    /// Sum of per-block L2-normalized bucket counts, so each block carries
    /// equal weight whatever its size.
    pub fn from_blocks(dim: usize, blocks: Vec<Vec<u32>>) -> Self {
        let mut pairs = Vec::new();
        for b in blocks {
            let v = SparseVector::from_buckets(dim, b);
            pairs.extend(v.indices.iter().copied().zip(v.values.iter().copied()));
        }
        SparseVector::from_pairs(dim, pairs).expect("normalized buckets are finite and in range")
    }

    /// Unnormalized 0/1 indicators of the distinct buckets.
    pub fn indicators(dim: usize, mut buckets: Vec<u32>) -> Self {
        buckets.sort_unstable();
        buckets.dedup();
        let values = vec![1.0; buckets.len()];
        SparseVector {
            dim,
            indices: buckets,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            for v in &mut self.values {
                *v /= n;
            }
        }
    }

    /// Dot product against a dense weight row of length `dim`.
    pub fn dot_dense(&self, weights: &[f64]) -> f64 {
        debug_assert_eq!(weights.len(), self.dim);
        self.iter().map(|(i, v)| weights[i] * v).sum()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut a, mut b, mut acc) = (0, 0, 0.0);
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }

    pub fn cosine(&self, other: &SparseVector) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            self.dot(other) / denom
        }
    }

    /// Checks the structural invariants; used when vectors come from outside.
    pub fn validate(&self) -> Result<()> {
        if self.indices.len() != self.values.len() {
            return Err(Error::Format("indices/values length differ".into()));
        }
        if self.indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("indices not strictly increasing".into()));
        }
        if self.indices.last().is_some_and(|&i| i as usize >= self.dim) {
            return Err(Error::Format("index out of range".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature value {v}")));
        }
        Ok(())
    }
}

/// Appends unigram and bigram bucket ids of `text` under `prefix`.
pub fn push_ngram_buckets(prefix: &str, text: &str, dim: usize, out: &mut Vec<u32>) {
    let toks = tokenize(text);
    for t in &toks {
        out.push(bucket(feature_hash(prefix, t), dim));
    }
    for w in toks.windows(2) {
        out.push(bucket(bigram_hash(prefix, &w[0], &w[1]), dim));
    }
}

/// Unigram + bigram counts of every `(prefix, text)` field, hashed into
/// `dim` buckets and L2-normalized.
pub fn featurize(fields: &[(&str, &str)], dim: usize) -> SparseVector {
    debug_assert!(dim.is_power_of_two(), "feature dimension must be a power of two");
    let mut buckets = Vec::new();
    for (prefix, text) in fields {
        push_ngram_buckets(prefix, text, dim, &mut buckets);
    }
    SparseVector::from_buckets(dim, buckets)
}

/// Known entity names harvested from a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Gazetteer {
    names: BTreeSet<String>,
    tokenized: Vec<Vec<String>>,
}

impl Gazetteer {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut g = Gazetteer::default();
        for n in names {
            g.insert(n.as_ref());
        }
        g
    }

    pub fn insert(&mut self, name: &str) {
        let name = name.trim();
        if name.is_empty() || self.names.contains(name) {
            return;
        }
        let toks = tokenize_cased(name).original;
        if toks.is_empty() {
            return;
        }
        self.names.insert(name.to_owned());
        self.tokenized.push(toks);
    }

    /// Collects non-sentence-initial capitalized runs from `texts` plus the
    /// given seed names (typically author names).
    pub fn harvest<'a, I, S>(texts: I, seeds: &[S]) -> Self
    where
        I: IntoIterator<Item = &'a str>,
        S: AsRef<str>,
    {
        let mut g = Gazetteer::new(seeds.iter().map(AsRef::as_ref));
        let empty = Gazetteer::default();
        for text in texts {
            for name in entity_mentions(text, &empty) {
                g.insert(&name);
            }
        }
        g
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.contains(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

fn is_capitalized(token: &str) -> bool {
    token.chars().next().is_some_and(char::is_uppercase) && token != "I"
}

/// Entity mentions in order of first appearance, without duplicates.
pub fn entity_mentions(text: &str, gaz: &Gazetteer) -> Vec<String> {
    let mut found: Vec<(usize, String)> = Vec::new();
    let mut offset = 0;
    for sentence in split_sentences(text) {
        let toks = tokenize_cased(&sentence).original;
        let mut i = 0;
        while i < toks.len() {
            if !is_capitalized(&toks[i]) {
                i += 1;
                continue;
            }
            let start = i;
            while i < toks.len() && is_capitalized(&toks[i]) {
                i += 1;
            }
            // A run touching the sentence start is ambiguous; the gazetteer
            // pass below recovers it when known.
            if start > 0 {
                found.push((offset + start, toks[start..i].join(" ")));
            }
        }
        for name_toks in &gaz.tokenized {
            if let Some(pos) = find_cased(&toks, name_toks) {
                found.push((offset + pos, name_toks.join(" ")));
            }
        }
        offset += toks.len();
    }
    found.sort_by_key(|(pos, _)| *pos);
    let mut seen = HashSet::new();
    found
        .into_iter()
        .filter(|(_, n)| seen.insert(n.clone()))
        .map(|(_, n)| n)
        .collect()
}

fn find_cased(haystack: &[String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    haystack.windows(needle.len()).position(|w| w == needle)
}

/// Maximal non-sentence-initial capitalized runs plus gazetteer hits.
pub fn extract_entities(text: &str, gaz: &Gazetteer) -> BTreeSet<String> {
    entity_mentions(text, gaz).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("You notice, now!"), ["you", "notice", "now"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Gundren's wagon"), ["gundren", "s", "wagon"]);
        let t = tokenize_cased("Gundren's wagon");
        assert_eq!(t.original, ["Gundren", "s", "wagon"]);
    }

    #[test]
    fn stopwords_sorted_for_binary_search() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn featurize_counts_unigrams_and_bigram() {
        let v = featurize(&[("dm", "the cat")], DEFAULT_DIM);
        assert_eq!(v.nnz(), 3);
        assert!((v.norm() - 1.0).abs() < 1e-9);
        assert_eq!(v, featurize(&[("dm", "the cat")], DEFAULT_DIM));
    }

    #[test]
    fn featurize_prefix_separates_fields() {
        let a = featurize(&[("dm", "goblin")], DEFAULT_DIM);
        let b = featurize(&[("ctx", "goblin")], DEFAULT_DIM);
        assert_ne!(a.indices(), b.indices());
    }

    #[test]
    fn featurize_empty_is_zero() {
        let v = featurize(&[("dm", "")], DEFAULT_DIM);
        assert!(v.is_zero());
        assert_eq!(v.norm(), 0.0);
    }

    #[test]
    fn hash_is_fnv1a() {
        // FNV-1a 64 of "a" is a published test vector.
        let mut h = FnvHasher::default();
        h.write(b"a");
        assert_eq!(h.finish(), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn colliding_buckets_sum() {
        let v = SparseVector::from_buckets(8, vec![3, 3, 5]);
        assert_eq!(v.indices(), &[3, 5]);
        assert!((v.values()[0] - 2.0 / 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn entities_from_table_text() {
        let text = "A dwarf named Gundren Rockseeker has hired you to transport a wagonload \
                    of provisions to the rough-and-tumble settlement of Phandalin...";
        let e = extract_entities(text, &Gazetteer::default());
        let want: BTreeSet<String> = ["Gundren Rockseeker", "Phandalin"]
            .into_iter()
            .map(String::from)
            .collect();
        assert_eq!(e, want);
    }

    #[test]
    fn sentence_initial_needs_gazetteer() {
        assert!(extract_entities("The goblins attack.", &Gazetteer::default()).is_empty());
        assert!(extract_entities("", &Gazetteer::default()).is_empty());
        let gaz = Gazetteer::new(["Sildar"]);
        let e = extract_entities("Sildar seems a bit shaken.", &gaz);
        assert!(e.contains("Sildar"));
    }

    #[test]
    fn gazetteer_trims_and_skips_empty() {
        let g = Gazetteer::new(["  Toblen ", "", "   "]);
        assert_eq!(g.len(), 1);
        assert!(g.contains("Toblen"));
    }

    #[test]
    fn mentions_keep_order() {
        let m = entity_mentions("You meet Toblen near Phandalin and then Toblen again.", &Gazetteer::default());
        assert_eq!(m, ["Toblen", "Phandalin"]);
    }
}
