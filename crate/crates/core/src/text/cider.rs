use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::ngram::{ngrams_of, NGram, NGramMultiset};
use super::{TokenSequence, MAX_ORDER};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CiderScores {
    pub per_item: Vec<f64>,
    pub mean: f64,
    /// A single-item corpus gives every shared n-gram zero idf.
    pub degenerate_corpus: bool,
}

/// Document frequencies per order, counted over reference sets.
struct IdfTable {
    log_corpus: f64,
    df: [BTreeMap<NGram, usize>; MAX_ORDER],
}

impl IdfTable {
    fn build(references: &[Vec<TokenSequence>]) -> Self {
        let mut df: [BTreeMap<NGram, usize>; MAX_ORDER] = Default::default();
        for refs in references {
            for (n, table) in df.iter_mut().enumerate() {
                let seen: BTreeSet<NGram> = refs
                    .iter()
                    .flat_map(|r| ngrams_of(r, n + 1).counts.into_keys())
                    .collect();
                for gram in seen {
                    *table.entry(gram).or_insert(0) += 1;
                }
            }
        }
        Self {
            log_corpus: (references.len() as f64).ln(),
            df,
        }
    }

    fn idf(&self, n: usize, gram: &NGram) -> f64 {
        let df = self.df[n - 1].get(gram).copied().unwrap_or(0).max(1);
        self.log_corpus - (df as f64).ln()
    }

    fn vector(&self, grams: &NGramMultiset) -> BTreeMap<NGram, f64> {
        grams
            .counts
            .iter()
            .map(|(g, &c)| (g.clone(), c as f64 * self.idf(grams.n, g)))
            .collect()
    }
}

fn cosine(a: &BTreeMap<NGram, f64>, b: &BTreeMap<NGram, f64>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(g, x)| b.get(g).map(|y| x * y)).sum();
    let na: f64 = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

/// Plain CIDEr on the ×10 scale.
///
/// For each order 1..=4 the candidate and each reference become tf-idf vectors
/// (raw counts times `ln(N / df)`, df over reference sets). The per-order score is
/// the mean cosine against the references; the item score is ten times the mean
/// over orders.
pub fn cider(
    candidates: &[TokenSequence],
    references: &[Vec<TokenSequence>],
) -> Result<CiderScores> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("CIDEr over an empty corpus".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::InvalidInput(format!(
            "{} candidates but {} reference lists",
            candidates.len(),
            references.len()
        )));
    }
    if let Some(i) = references.iter().position(Vec::is_empty) {
        return Err(Error::InvalidInput(format!(
            "candidate {i} has no references"
        )));
    }
    let degenerate_corpus = candidates.len() < 2;
    if degenerate_corpus {
        log::warn!("CIDEr on a single-item corpus: shared n-grams get zero idf");
    }

    let idf = IdfTable::build(references);
    let per_item: Vec<f64> = candidates
        .par_iter()
        .zip(references.par_iter())
        .map(|(cand, refs)| {
            let mut total = 0.0;
            for n in 1..=MAX_ORDER {
                let cv = idf.vector(&ngrams_of(cand, n));
                let sum: f64 = refs
                    .iter()
                    .map(|r| cosine(&cv, &idf.vector(&ngrams_of(r, n))))
                    .sum();
                total += sum / refs.len() as f64;
            }
            10.0 * total / MAX_ORDER as f64
        })
        .collect();
    let mean = per_item.iter().sum::<f64>() / per_item.len() as f64;
    Ok(CiderScores {
        per_item,
        mean,
        degenerate_corpus,
    })
}
