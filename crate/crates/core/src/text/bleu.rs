use super::ngram::ngrams_of;
use super::{TokenSequence, MAX_ORDER};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BleuConfig {
    /// Add-one smoothing of the modified precisions for orders 2..=4.
    pub smoothing: bool,
}

/// Corpus-level sufficient statistics.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BleuStats {
    /// Clipped n-gram matches per order (index 0 is unigrams).
    pub matches: [usize; MAX_ORDER],
    /// Candidate n-gram counts per order.
    pub totals: [usize; MAX_ORDER],
    pub candidate_len: usize,
    /// Sum over segments of the closest reference length.
    pub reference_len: usize,
}

impl BleuStats {
    pub fn collect(
        candidates: &[TokenSequence],
        references: &[Vec<TokenSequence>],
    ) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidInput(
                "BLEU over an empty candidate set".into(),
            ));
        }
        if candidates.len() != references.len() {
            return Err(Error::InvalidInput(format!(
                "{} candidates but {} reference lists",
                candidates.len(),
                references.len()
            )));
        }
        let mut stats = BleuStats::default();
        for (i, (cand, refs)) in candidates.iter().zip(references).enumerate() {
            if refs.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "candidate {i} has no references"
                )));
            }
            stats.candidate_len += cand.len();
            stats.reference_len += closest_ref_len(cand.len(), refs);
            for n in 1..=MAX_ORDER {
                let cand_grams = ngrams_of(cand, n);
                let ref_grams: Vec<_> = refs.iter().map(|r| ngrams_of(r, n)).collect();
                for (gram, &count) in &cand_grams.counts {
                    let max_ref = ref_grams.iter().map(|r| r.get(gram)).max().unwrap_or(0);
                    stats.matches[n - 1] += count.min(max_ref);
                }
                stats.totals[n - 1] += cand_grams.total();
            }
        }
        Ok(stats)
    }

    /// Modified precision of order `n` (1-based), before smoothing.
    pub fn precision(&self, n: usize) -> f64 {
        let t = self.totals[n - 1];
        if t == 0 {
            0.0
        } else {
            self.matches[n - 1] as f64 / t as f64
        }
    }

    pub fn brevity_penalty(&self) -> f64 {
        let (c, r) = (self.candidate_len as f64, self.reference_len as f64);
        if self.candidate_len == 0 {
            0.0
        } else if c < r {
            (1.0 - r / c).exp()
        } else {
            1.0
        }
    }

    pub fn score(&self, config: &BleuConfig) -> f64 {
        if self.candidate_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for n in 1..=MAX_ORDER {
            let (m, t) = (self.matches[n - 1] as f64, self.totals[n - 1] as f64);
            let p = if config.smoothing && n >= 2 {
                (m + 1.0) / (t + 1.0)
            } else if t == 0.0 {
                0.0
            } else {
                m / t
            };
            if p == 0.0 {
                return 0.0;
            }
            log_sum += p.ln();
        }
        (self.brevity_penalty() * (log_sum / MAX_ORDER as f64).exp()).clamp(0.0, 1.0)
    }
}

/// Reference length closest to the candidate length; ties go to the shorter one.
fn closest_ref_len(cand_len: usize, refs: &[TokenSequence]) -> usize {
    refs.iter()
        .map(TokenSequence::len)
        .min_by_key(|&len| (len.abs_diff(cand_len), len))
        .unwrap_or(0)
}

/// Unsmoothed corpus BLEU-4.
pub fn bleu4(candidates: &[TokenSequence], references: &[Vec<TokenSequence>]) -> Result<f64> {
    bleu4_with(candidates, references, &BleuConfig::default())
}

pub fn bleu4_with(
    candidates: &[TokenSequence],
    references: &[Vec<TokenSequence>],
    config: &BleuConfig,
) -> Result<f64> {
    Ok(BleuStats::collect(candidates, references)?.score(config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;

    #[test]
    fn identical_is_one() {
        let c = tokenize("a man is riding a horse");
        assert_eq!(
            bleu4(std::slice::from_ref(&c), &[vec![c.clone()]]).unwrap(),
            1.0
        );
    }

    #[test]
    fn disjoint_is_zero() {
        let c = tokenize("red apple on table");
        let r = tokenize("two dogs chase birds");
        assert_eq!(bleu4(&[c], &[vec![r]]).unwrap(), 0.0);
    }

    #[test]
    fn cat_mat_counts() {
        let c = tokenize("the cat sat on the mat");
        let r = tokenize("the cat is on the mat");
        let stats = BleuStats::collect(std::slice::from_ref(&c), &[vec![r.clone()]]).unwrap();
        assert_eq!(stats.matches, [5, 3, 1, 0]);
        assert_eq!(stats.totals, [6, 5, 4, 3]);
        assert_eq!(
            bleu4(std::slice::from_ref(&c), &[vec![r.clone()]]).unwrap(),
            0.0
        );
        // With smoothing: (5/6 * 4/6 * 2/5 * 1/4)^(1/4), brevity penalty 1.
        let smoothed = bleu4_with(&[c], &[vec![r]], &BleuConfig { smoothing: true }).unwrap();
        let expected = (5.0f64 / 6.0 * 4.0 / 6.0 * 2.0 / 5.0 * 1.0 / 4.0).powf(0.25);
        assert!((smoothed - expected).abs() < 1e-12);
    }

    #[test]
    fn clipping_and_brevity() {
        // "the the the the" vs "the cat": unigram clipped to 1 match.
        let stats = BleuStats::collect(
            &[tokenize("the the the the")],
            &[vec![tokenize("the cat"), tokenize("a the cat sat on it")]],
        )
        .unwrap();
        assert_eq!(stats.matches[0], 1);
        // Closest reference length to 4 is 2 (distance 2) vs 6 (distance 2): shorter wins.
        assert_eq!(stats.reference_len, 2);

        let short =
            BleuStats::collect(&[tokenize("a b c d")], &[vec![tokenize("a b c d e f g h")]])
                .unwrap();
        assert!((short.brevity_penalty() - (1.0f64 - 2.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(bleu4(&[], &[]).is_err());
        assert!(bleu4(&[tokenize("a")], &[vec![]]).is_err());
        assert!(bleu4(&[tokenize("a")], &[]).is_err());
    }
}
