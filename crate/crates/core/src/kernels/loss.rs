use super::Matrix;
use crate::error::{Error, Result};

/// Sigmoid answer scores and their soft targets, both `M × N`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerScores {
    predicted: Matrix,
    target: Matrix,
}

impl AnswerScores {
    pub fn new(predicted: Matrix, target: Matrix) -> Result<Self> {
        if predicted.rows() != target.rows() || predicted.cols() != target.cols() {
            return Err(Error::Shape(format!(
                "predicted {}x{} vs target {}x{}",
                predicted.rows(),
                predicted.cols(),
                target.rows(),
                target.cols()
            )));
        }
        if let Some(v) = predicted.data().iter().find(|&&v| v <= 0.0 || v >= 1.0) {
            return Err(Error::InvalidInput(format!(
                "predicted score {v} not strictly inside (0, 1)"
            )));
        }
        if let Some(v) = target.data().iter().find(|&&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidInput(format!("target {v} outside [0, 1]")));
        }
        Ok(Self { predicted, target })
    }

    pub fn predicted(&self) -> &Matrix {
        &self.predicted
    }

    pub fn target(&self) -> &Matrix {
        &self.target
    }
}

/// Binary cross-entropy summed over all questions and candidate answers.
pub fn bce_answer_loss(scores: &AnswerScores) -> f64 {
    scores
        .predicted
        .data()
        .iter()
        .zip(scores.target.data())
        .map(|(&p, &s)| -(s * p.ln() + (1.0 - s) * (1.0 - p).ln()))
        .sum::<f64>()
        .max(0.0)
}

/// Analytic `∂L/∂ŝ = −(s/ŝ − (1−s)/(1−ŝ))`.
pub fn bce_answer_gradient(scores: &AnswerScores) -> Matrix {
    let data = scores
        .predicted
        .data()
        .iter()
        .zip(scores.target.data())
        .map(|(&p, &s)| -(s / p - (1.0 - s) / (1.0 - p)))
        .collect();
    Matrix::new(scores.predicted.rows(), scores.predicted.cols(), data)
        .expect("gradient of finite scores is finite")
}

/// Log-probabilities of each target token, one list per generated sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenLogProbs {
    sequences: Vec<Vec<f64>>,
}

impl TokenLogProbs {
    /// `max_len` bounds every sequence when given.
    pub fn new(sequences: Vec<Vec<f64>>, max_len: Option<usize>) -> Result<Self> {
        for (i, seq) in sequences.iter().enumerate() {
            if let Some(l) = max_len {
                if seq.len() > l {
                    return Err(Error::InvalidInput(format!(
                        "sequence {i} has {} tokens, limit is {l}",
                        seq.len()
                    )));
                }
            }
            if let Some(v) = seq.iter().find(|v| !v.is_finite() || **v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "sequence {i}: log-probability {v} must be finite and ≤ 0"
                )));
            }
        }
        Ok(Self { sequences })
    }

    pub fn sequences(&self) -> &[Vec<f64>] {
        &self.sequences
    }
}

/// Negative log-likelihood summed over sequences and positions.
pub fn lm_nll_loss(logprobs: &TokenLogProbs) -> f64 {
    -logprobs
        .sequences
        .iter()
        .flat_map(|s| s.iter())
        .sum::<f64>()
}

pub fn total_loss(answer_loss: f64, rationale_loss: f64) -> f64 {
    answer_loss + rationale_loss
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(p: &[f64], s: &[f64]) -> AnswerScores {
        AnswerScores::new(
            Matrix::new(1, p.len(), p.to_vec()).unwrap(),
            Matrix::new(1, s.len(), s.to_vec()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn bce_examples() {
        assert!((bce_answer_loss(&scores(&[0.5], &[1.0])) - 2f64.ln()).abs() < 1e-15);
        assert!((bce_answer_loss(&scores(&[0.9], &[0.0])) + 0.1f64.ln()).abs() < 1e-12);
        let eps = 1e-12;
        let near = scores(&[1.0 - eps, eps, eps, 1.0 - eps], &[1.0, 0.0, 0.0, 1.0]);
        assert!(bce_answer_loss(&near) <= eps * 4.0 * 40.0);
    }

    #[test]
    fn bce_rejects_saturated_scores() {
        let bad = |p: f64| {
            AnswerScores::new(
                Matrix::new(1, 1, vec![p]).unwrap(),
                Matrix::new(1, 1, vec![1.0]).unwrap(),
            )
        };
        assert!(bad(0.0).is_err());
        assert!(bad(1.0).is_err());
        assert!(AnswerScores::new(
            Matrix::new(1, 1, vec![0.5]).unwrap(),
            Matrix::new(1, 1, vec![1.5]).unwrap()
        )
        .is_err());
        assert!(AnswerScores::new(Matrix::zeros(1, 2), Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn nll_examples() {
        assert_eq!(
            lm_nll_loss(&TokenLogProbs::new(vec![vec![0.0]], None).unwrap()),
            0.0
        );
        let quarter = TokenLogProbs::new(vec![vec![0.25f64.ln()]], None).unwrap();
        assert!((lm_nll_loss(&quarter) - 4f64.ln()).abs() < 1e-15);
        let a = vec![-0.2, -1.3];
        let b = vec![-0.7];
        let both = TokenLogProbs::new(vec![a.clone(), b.clone()], Some(2)).unwrap();
        let sum = lm_nll_loss(&TokenLogProbs::new(vec![a], None).unwrap())
            + lm_nll_loss(&TokenLogProbs::new(vec![b], None).unwrap());
        assert!((lm_nll_loss(&both) - sum).abs() < 1e-15);
    }

    #[test]
    fn nll_rejects_bad_input() {
        assert!(TokenLogProbs::new(vec![vec![0.1]], None).is_err());
        assert!(TokenLogProbs::new(vec![vec![f64::NEG_INFINITY]], None).is_err());
        assert!(TokenLogProbs::new(vec![vec![-1.0; 3]], Some(2)).is_err());
    }

    #[test]
    fn total_examples() {
        assert_eq!(total_loss(0.0, 0.0), 0.0);
        assert_eq!(total_loss(0.5, 1.5), 2.0);
        assert_eq!(total_loss(0.3, 1.9), total_loss(1.9, 0.3));
    }
}
