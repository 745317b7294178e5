//! Tokenization and the hashed bag-of-tokens embedding.

use std::collections::BTreeSet;

/// Embedding dimension.
pub const EMBEDDING_DIM: usize = 256;

const HASH_SEED: u64 = 0x5e_ed0f_7a11;

/// Lower-cases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

/// Seeded FNV-1a, reduced to a bucket index.
pub fn token_bucket(token: &str) -> usize {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ HASH_SEED;
    for b in token.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    (h % EMBEDDING_DIM as u64) as usize
}

/// Counts of hashed tokens, L2-normalized. Token-free text maps to the zero vector.
pub fn embed(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; EMBEDDING_DIM];
    for token in tokenize(text) {
        v[token_bucket(&token)] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("dimension mismatch: {left} vs {right}")]
pub struct DimensionMismatch {
    pub left: usize,
    pub right: usize,
}

/// Cosine similarity clamped to [-1, 1]; 0 when either side is the zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, DimensionMismatch> {
    if a.len() != b.len() {
        return Err(DimensionMismatch { left: a.len(), right: b.len() });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Fraction of the needle's distinct tokens present in `haystack`. Zero for a token-free needle.
pub fn token_recall(needle: &str, haystack: &str) -> f64 {
    let needle = token_set(needle);
    if needle.is_empty() {
        return 0.0;
    }
    let hay = token_set(haystack);
    needle.iter().filter(|t| hay.contains(*t)).count() as f64 / needle.len() as f64
}

/// Token-set F1 between two texts. Zero when either side has no tokens.
pub fn token_f1(a: &str, b: &str) -> f64 {
    let (a, b) = (token_set(a), token_set(b));
    let common = a.intersection(&b).count() as f64;
    if common == 0.0 {
        return 0.0;
    }
    let p = common / b.len() as f64;
    let r = common / a.len() as f64;
    2.0 * p * r / (p + r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_fold_case_and_strip_punctuation() {
        assert_eq!(tokenize("Red, WOOL-hat!"), vec!["red", "wool", "hat"]);
        assert!(tokenize("  ,;  ").is_empty());
    }

    #[test]
    fn identical_strings_identical_unit_vectors() {
        let a = embed("abc");
        let b = embed("abc");
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn blank_input_is_zero_vector() {
        assert!(embed("   ").iter().all(|x| *x == 0.0));
        assert_eq!(embed("").len(), EMBEDDING_DIM);
    }

    #[test]
    fn order_free_bag_matches_hand_computed_multiset() {
        let v = embed("red hat");
        assert_eq!(v, embed("hat red"));
        // hand-built oracle: one count per token bucket, normalized
        let mut oracle = vec![0.0; EMBEDDING_DIM];
        oracle[token_bucket("red")] += 1.0;
        oracle[token_bucket("hat")] += 1.0;
        let n = oracle.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        oracle.iter_mut().for_each(|x| *x /= n);
        assert_eq!(v, oracle);
    }

    #[test]
    fn cosine_basics() {
        let v = embed("some unit vector");
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0], &[1.0, 2.0]), Err(DimensionMismatch { left: 1, right: 2 }));
    }

    #[test]
    fn recall_formula() {
        assert!((token_recall("red wool hat", "a red hat") - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(token_recall("red hat", "the red hat"), 1.0);
        assert_eq!(token_recall("!!", "anything"), 0.0);
    }
}
