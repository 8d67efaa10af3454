use super::TokenSequence;

pub const DEFAULT_BETA: f64 = 1.2;

/// Length of the longest common subsequence.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure with recall weighted by `beta`.
pub fn rouge_l(candidate: &TokenSequence, reference: &TokenSequence, beta: f64) -> f64 {
    let lcs = lcs_len(candidate.tokens(), reference.tokens());
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    let b2 = beta * beta;
    ((1.0 + b2) * p * r / (r + b2 * p)).clamp(0.0, 1.0)
}

/// Best ROUGE-L over several references.
pub fn rouge_l_multi(candidate: &TokenSequence, references: &[TokenSequence], beta: f64) -> f64 {
    references
        .iter()
        .map(|r| rouge_l(candidate, r, beta))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;

    #[test]
    fn examples() {
        let a = tokenize("a dog runs in the park");
        assert_eq!(rouge_l(&a, &a, DEFAULT_BETA), 1.0);
        assert_eq!(rouge_l(&a, &tokenize("blue sky"), DEFAULT_BETA), 0.0);
        let c = tokenize("the cat sat on the mat");
        let r = tokenize("the cat is on the mat");
        assert_eq!(lcs_len(c.tokens(), r.tokens()), 5);
        assert!((rouge_l(&c, &r, 1.2) - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn empty_sides() {
        let e = TokenSequence::default();
        let a = tokenize("x y");
        assert_eq!(rouge_l(&e, &a, 1.2), 0.0);
        assert_eq!(rouge_l(&a, &e, 1.2), 0.0);
    }

    #[test]
    fn beta_weights_recall() {
        // P = 1, R = 0.5
        let c = tokenize("a b");
        let r = tokenize("a b c d");
        let f = |beta: f64| {
            let b2 = beta * beta;
            (1.0 + b2) * 0.5 / (0.5 + b2)
        };
        assert!((rouge_l(&c, &r, 1.0) - f(1.0)).abs() < 1e-12);
        assert!((rouge_l(&c, &r, 3.0) - f(3.0)).abs() < 1e-12);
    }
}
