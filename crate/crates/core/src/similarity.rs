//! Edit distance, cosine and Jaccard similarity over company names.
//!
//! Every matcher reports a similarity in `[0,1]`, 1 meaning identical.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::text_normalize::{normalize_name, tokens, NormalizationProfile};

pub const LEVENSHTEIN: &str = "levenshtein";
pub const COSINE: &str = "cosine";
pub const JACCARD: &str = "jaccard";

/// Minimum number of single-character insertions, deletions and
/// substitutions turning `a` into `b`, counted over Unicode scalar values.
pub fn levenshtein_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    // keep the row over the shorter string
    let (outer, inner) = if a.len() >= b.len() { (&a, &b) } else { (&b, &a) };
    if inner.is_empty() {
        return outer.len();
    }
    // row[j] holds D[i][j]; D[0][j] = j
    let mut row: Vec<usize> = (0..=inner.len()).collect();
    for (i, &oc) in outer.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, &ic) in inner.iter().enumerate() {
            let above = row[j + 1];
            let cost = usize::from(oc != ic);
            row[j + 1] = (above + 1).min(row[j] + 1).min(diag + cost);
            diag = above;
        }
    }
    row[inner.len()]
}

/// `1 - d / max(|a|, |b|)`, and 1 for two empty strings.
pub fn levenshtein_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein_distance(a, b) as f64 / longest as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorMode {
    CharNgram,
    Token,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    RawFrequency,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorizerConfig {
    pub mode: VectorMode,
    /// N-gram width; ignored in token mode.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub weighting: Weighting,
}

fn default_n() -> usize {
    2
}

impl VectorizerConfig {
    pub fn char_ngram(n: usize) -> Self {
        assert!(n >= 1, "n-gram width must be at least 1");
        Self {
            mode: VectorMode::CharNgram,
            n,
            weighting: Weighting::RawFrequency,
        }
    }

    pub fn token() -> Self {
        Self {
            mode: VectorMode::Token,
            n: 1,
            weighting: Weighting::RawFrequency,
        }
    }
}

impl Default for VectorizerConfig {
    fn default() -> Self {
        Self::char_ngram(2)
    }
}

/// Sparse term-frequency vector.
pub type FrequencyVector = HashMap<String, u64>;

/// Counts overlapping n-grams of the space-padded string, or whitespace
/// tokens in token mode. A padded string shorter than `n` yields a single
/// gram covering all of it.
pub fn vectorize(s: &str, cfg: &VectorizerConfig) -> FrequencyVector {
    let mut v = FrequencyVector::new();
    if s.is_empty() {
        return v;
    }
    match cfg.mode {
        VectorMode::Token => {
            for t in s.split_whitespace() {
                *v.entry(t.to_string()).or_default() += 1;
            }
        }
        VectorMode::CharNgram => {
            let n = cfg.n.max(1);
            let padded: Vec<char> = std::iter::once(' ')
                .chain(s.chars())
                .chain(std::iter::once(' '))
                .collect();
            if padded.len() < n {
                v.insert(padded.iter().collect(), 1);
            } else {
                for w in padded.windows(n) {
                    *v.entry(w.iter().collect()).or_default() += 1;
                }
            }
        }
    }
    v
}

/// `u·v / (‖u‖ ‖v‖)`, or 0 when either vector is zero.
pub fn cosine_similarity(u: &FrequencyVector, v: &FrequencyVector) -> f64 {
    let (small, large) = if u.len() <= v.len() { (u, v) } else { (v, u) };
    let dot: u64 = small
        .iter()
        .filter_map(|(k, a)| large.get(k).map(|b| a * b))
        .sum();
    let nu: u64 = u.values().map(|x| x * x).sum();
    let nv: u64 = v.values().map(|x| x * x).sum();
    if nu == 0 || nv == 0 {
        return 0.0;
    }
    // integer product keeps scalar multiples at exactly 1
    let denom = ((nu as f64) * (nv as f64)).sqrt();
    (dot as f64 / denom).clamp(0.0, 1.0)
}

/// `|A ∩ B| / |A ∪ B|`, and 1 for two empty sets.
pub fn jaccard_similarity<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

pub fn jaccard_distance<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    1.0 - jaccard_similarity(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreTriple {
    pub levenshtein: f64,
    pub cosine: f64,
    pub jaccard: f64,
}

impl ScoreTriple {
    pub fn get(&self, metric: &str) -> Option<f64> {
        match metric {
            LEVENSHTEIN => Some(self.levenshtein),
            COSINE => Some(self.cosine),
            JACCARD => Some(self.jaccard),
            _ => None,
        }
    }

    pub fn entries(&self) -> [(&'static str, f64); 3] {
        [
            (LEVENSHTEIN, self.levenshtein),
            (COSINE, self.cosine),
            (JACCARD, self.jaccard),
        ]
    }
}

/// Normalizes both names and computes all three similarities.
pub fn score_pair(
    declared: &str,
    official: &str,
    profile: &NormalizationProfile,
    cfg: &VectorizerConfig,
) -> ScoreTriple {
    let a = normalize_name(declared, profile);
    let b = normalize_name(official, profile);
    let set_a: BTreeSet<String> = tokens(&a).into_iter().collect();
    let set_b: BTreeSet<String> = tokens(&b).into_iter().collect();
    ScoreTriple {
        levenshtein: levenshtein_similarity(&a, &b),
        cosine: cosine_similarity(&vectorize(&a, cfg), &vectorize(&b, cfg)),
        jaccard: jaccard_similarity(&set_a, &set_b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn vec_of(pairs: &[(&str, u64)]) -> FrequencyVector {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein_distance("kitten", "sitting"), 3);
        assert_eq!(levenshtein_distance("", "abc"), 3);
        assert_eq!(levenshtein_distance("abc", ""), 3);
        assert_eq!(levenshtein_distance("DOÇARIA", "DOCARIA"), 1);
        assert_eq!(levenshtein_distance("same", "same"), 0);
    }

    #[test]
    fn levenshtein_similarity_examples() {
        assert!((levenshtein_similarity("kitten", "sitting") - (1.0 - 3.0 / 7.0)).abs() < 1e-12);
        assert_eq!(levenshtein_similarity("abc", "abc"), 1.0);
        assert_eq!(levenshtein_similarity("a", "b"), 0.0);
        assert_eq!(levenshtein_similarity("", ""), 1.0);
    }

    #[test]
    fn vectorize_examples() {
        let v = vectorize("AB", &VectorizerConfig::char_ngram(2));
        assert_eq!(v, vec_of(&[(" A", 1), ("AB", 1), ("B ", 1)]));
        assert_eq!(vectorize("CAT CAT", &VectorizerConfig::token()), vec_of(&[("CAT", 2)]));
        assert!(vectorize("", &VectorizerConfig::default()).is_empty());
        assert_eq!(vectorize("A", &VectorizerConfig::char_ngram(5)), vec_of(&[(" A ", 1)]));
    }

    #[test]
    fn cosine_examples() {
        let x = vec_of(&[("A", 2), ("B", 3)]);
        assert_eq!(cosine_similarity(&x, &x), 1.0);
        assert_eq!(cosine_similarity(&vec_of(&[("A", 1)]), &vec_of(&[("B", 1)])), 0.0);
        let c = cosine_similarity(&vec_of(&[("A", 1), ("B", 1)]), &vec_of(&[("A", 1)]));
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(cosine_similarity(&FrequencyVector::new(), &x), 0.0);
    }

    #[test]
    fn jaccard_examples() {
        let a = set(&["cat", "dog", "mouse"]);
        let b = set(&["cat", "bird"]);
        assert_eq!(jaccard_similarity(&a, &b), 0.25);
        assert_eq!(jaccard_distance(&a, &b), 0.75);
        assert_eq!(jaccard_similarity(&a, &a), 1.0);
        assert_eq!(jaccard_similarity(&set(&["x"]), &set(&["y"])), 0.0);
        assert_eq!(jaccard_similarity::<String>(&BTreeSet::new(), &BTreeSet::new()), 1.0);
    }

    #[test]
    fn score_pair_examples() {
        let p = NormalizationProfile::default();
        let cfg = VectorizerConfig::default();
        let s = score_pair("SOLARSHOP, UNIPESSOAL LDA", "SOLARSHOP, UNIPESSOAL, LDA", &p, &cfg);
        assert_eq!((s.levenshtein, s.cosine, s.jaccard), (1.0, 1.0, 1.0));
        let s = score_pair("A", "B", &p, &VectorizerConfig::token());
        assert_eq!((s.levenshtein, s.cosine, s.jaccard), (0.0, 0.0, 0.0));
    }

    fn freq_vec() -> impl Strategy<Value = FrequencyVector> {
        proptest::collection::hash_map("[a-e]", 0u64..6, 0..5)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn cosine_in_unit_range(u in freq_vec(), v in freq_vec()) {
            let c = cosine_similarity(&u, &v);
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert_eq!(c, cosine_similarity(&v, &u));
        }

        #[test]
        fn cosine_one_for_scalar_multiples(u in freq_vec(), k in 1u64..7) {
            prop_assume!(u.values().any(|&x| x > 0));
            let scaled: FrequencyVector = u.iter().map(|(t, x)| (t.clone(), x * k)).collect();
            prop_assert_eq!(cosine_similarity(&u, &scaled), 1.0);
        }

        #[test]
        fn cosine_below_one_off_the_ray(u in freq_vec(), v in freq_vec()) {
            let support = |w: &FrequencyVector| w.iter().filter(|(_, &x)| x > 0).map(|(k, &x)| (k.clone(), x)).collect::<std::collections::BTreeMap<_, _>>();
            let (su, sv) = (support(&u), support(&v));
            prop_assume!(!su.is_empty() && !sv.is_empty());
            // positive multiples iff counts are proportional over the same support
            let keys_match = su.keys().eq(sv.keys());
            let (a0, b0) = (su.values().next().copied().unwrap(), sv.values().next().copied().unwrap());
            let proportional = keys_match && su.values().zip(sv.values()).all(|(&a, &b)| a * b0 == b * a0);
            prop_assert_eq!(cosine_similarity(&u, &v) == 1.0, proportional);
        }

        #[test]
        fn jaccard_bounds_symmetry_monotone(
            a in proptest::collection::btree_set("[a-f]", 0..6),
            b in proptest::collection::btree_set("[a-f]", 0..6),
            shared in "[a-z]",
        ) {
            let j = jaccard_similarity(&a, &b);
            prop_assert!((0.0..=1.0).contains(&j));
            prop_assert_eq!(j, jaccard_similarity(&b, &a));
            let (mut a2, mut b2) = (a.clone(), b.clone());
            a2.insert(shared.clone());
            b2.insert(shared);
            prop_assert!(jaccard_similarity(&a2, &b2) >= j);
        }

        #[test]
        fn score_pair_symmetric(a in "\\PC{0,16}", b in "\\PC{0,16}", token_mode in any::<bool>()) {
            let p = NormalizationProfile::default();
            let cfg = if token_mode { VectorizerConfig::token() } else { VectorizerConfig::default() };
            prop_assert_eq!(score_pair(&a, &b, &p, &cfg), score_pair(&b, &a, &p, &cfg));
        }
    }
}
