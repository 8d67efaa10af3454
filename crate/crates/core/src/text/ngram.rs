use std::collections::BTreeMap;

use super::TokenSequence;
use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

pub type NGram = Vec<String>;

/// Multiset of n-grams of a single order. Ordered map so iteration is deterministic.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NGramMultiset {
    pub n: usize,
    pub counts: BTreeMap<NGram, usize>,
}

impl NGramMultiset {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn get(&self, gram: &[String]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

pub fn ngrams(seq: &TokenSequence, n: usize) -> Result<NGramMultiset> {
    if !(1..=MAX_ORDER).contains(&n) {
        return Err(Error::Config(format!(
            "n-gram order {n} outside 1..={MAX_ORDER}"
        )));
    }
    let mut counts = BTreeMap::new();
    for window in seq.tokens().windows(n) {
        *counts.entry(window.to_vec()).or_insert(0) += 1;
    }
    Ok(NGramMultiset { n, counts })
}

/// Infallible variant for callers that iterate over `1..=MAX_ORDER`.
pub(crate) fn ngrams_of(seq: &TokenSequence, n: usize) -> NGramMultiset {
    ngrams(seq, n).expect("order within 1..=MAX_ORDER")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(words: &[&str]) -> TokenSequence {
        TokenSequence::from_tokens(words)
    }

    fn key(words: &[&str]) -> NGram {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn examples() {
        let uni = ngrams(&seq(&["a", "b", "a"]), 1).unwrap();
        assert_eq!(uni.get(&key(&["a"])), 2);
        assert_eq!(uni.get(&key(&["b"])), 1);
        assert_eq!(uni.counts.len(), 2);

        assert!(ngrams(&seq(&["a", "b"]), 3).unwrap().is_empty());

        let bi = ngrams(&seq(&["a", "b", "a", "b"]), 2).unwrap();
        assert_eq!(bi.get(&key(&["a", "b"])), 2);
        assert_eq!(bi.get(&key(&["b", "a"])), 1);
        assert_eq!(bi.total(), 3);
    }

    #[test]
    fn order_out_of_range() {
        assert!(matches!(ngrams(&seq(&["a"]), 0), Err(Error::Config(_))));
        assert!(matches!(ngrams(&seq(&["a"]), 5), Err(Error::Config(_))));
    }
}
