use rust_stemmers::{Algorithm, Stemmer};

use super::TokenSequence;

/// METEOR parameters. Defaults are the language-universal values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeteorParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for MeteorParams {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            beta: 3.0,
            gamma: 0.5,
        }
    }
}

/// Unigram alignment as `(candidate index, reference index)` pairs.
///
/// Exact matches are taken first, then stem matches among the leftovers. Within a
/// stage each candidate token, left to right, takes the leftmost free reference
/// token, which keeps repeated words in order. There is no synonym stage.
fn align(candidate: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let stemmer = Stemmer::create(Algorithm::English);
    let cand_stems: Vec<String> = candidate
        .iter()
        .map(|t| stemmer.stem(t).into_owned())
        .collect();
    let ref_stems: Vec<String> = reference
        .iter()
        .map(|t| stemmer.stem(t).into_owned())
        .collect();

    let mut cand_used = vec![false; candidate.len()];
    let mut ref_used = vec![false; reference.len()];
    let mut pairs = Vec::new();
    let stages: [(&[String], &[String]); 2] = [(candidate, reference), (&cand_stems, &ref_stems)];
    for (cand_keys, ref_keys) in stages {
        for (i, key) in cand_keys.iter().enumerate() {
            if cand_used[i] {
                continue;
            }
            if let Some(j) = (0..ref_keys.len()).find(|&j| !ref_used[j] && &ref_keys[j] == key) {
                cand_used[i] = true;
                ref_used[j] = true;
                pairs.push((i, j));
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    if pairs.is_empty() {
        return 0;
    }
    1 + pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

pub fn meteor(candidate: &TokenSequence, reference: &TokenSequence) -> f64 {
    meteor_with(candidate, reference, &MeteorParams::default())
}

pub fn meteor_with(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    params: &MeteorParams,
) -> f64 {
    let pairs = align(candidate.tokens(), reference.tokens());
    let m = pairs.len();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / candidate.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f_mean = p * r / (params.alpha * p + (1.0 - params.alpha) * r);
    let frag = count_chunks(&pairs) as f64 / m as f64;
    let penalty = params.gamma * frag.powf(params.beta);
    (f_mean * (1.0 - penalty)).clamp(0.0, 1.0)
}

/// Best METEOR over several references.
pub fn meteor_multi(candidate: &TokenSequence, references: &[TokenSequence]) -> f64 {
    references
        .iter()
        .map(|r| meteor(candidate, r))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;

    #[test]
    fn examples() {
        assert_eq!(meteor(&tokenize("red apple"), &tokenize("two dogs")), 0.0);
        let s = tokenize("a b c d");
        assert_eq!(meteor(&s, &s), 0.9921875);
        assert_eq!(meteor(&tokenize("the cat"), &tokenize("cat the")), 0.5);
    }

    #[test]
    fn stem_stage_matches_inflections() {
        let pairs = align(
            tokenize("dogs running").tokens(),
            tokenize("dog runs").tokens(),
        );
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn exact_beats_stem() {
        // "runs" exact-matches reference index 1 before the stem stage sees "run".
        let pairs = align(tokenize("runs").tokens(), tokenize("run runs").tokens());
        assert_eq!(pairs, vec![(0, 1)]);
    }

    #[test]
    fn chunk_counting() {
        assert_eq!(count_chunks(&[]), 0);
        assert_eq!(count_chunks(&[(0, 0), (1, 1), (2, 2)]), 1);
        assert_eq!(count_chunks(&[(0, 0), (1, 2), (2, 3)]), 2);
        assert_eq!(count_chunks(&[(0, 1), (1, 0)]), 2);
    }

    #[test]
    fn hand_computed_partial_match() {
        // cand "the cat sat on the mat", ref "the cat is on the mat":
        // m = 5, P = R = 5/6, chunks: [the cat] [on the mat] = 2.
        let v = meteor(
            &tokenize("the cat sat on the mat"),
            &tokenize("the cat is on the mat"),
        );
        let expected = 5.0 / 6.0 * (1.0 - 0.5 * (2.0f64 / 5.0).powi(3));
        assert!((v - expected).abs() < 1e-12);
    }
}
