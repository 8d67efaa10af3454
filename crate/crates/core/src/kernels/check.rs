//! Invariant suite behind `rationale-bench kernels check`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    attention_weights, bce_answer_gradient, bce_answer_loss, lm_nll_loss, project_features,
    scaled_dot_attention, AnswerScores, Matrix, ProjectionConfig, TokenLogProbs,
};

pub const SOFTMAX_TOLERANCE: f64 = 1e-9;
pub const GRADIENT_STEP: f64 = 1e-6;
pub const GRADIENT_RELATIVE_TOLERANCE: f64 = 1e-5;
pub const FIXTURE_TOLERANCE: f64 = 1e-9;
pub const RANDOM_INSTANCES: usize = 100;

const PROJECTION_FIXTURE: &str = include_str!("../../fixtures/projection_3row.json");

#[derive(Debug, Clone, Deserialize)]
pub struct ProjectionFixture {
    pub x: Matrix,
    pub c: Matrix,
    pub num_layers: usize,
    pub residual: bool,
    pub expected: Matrix,
}

impl ProjectionFixture {
    pub fn bundled() -> Self {
        serde_json::from_str(PROJECTION_FIXTURE).expect("bundled projection fixture parses")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed deviation for the check's measure.
    pub worst: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub seed: u64,
    pub results: Vec<CheckResult>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    Matrix::new(rows, cols, data).expect("finite random entries")
}

fn result(name: &'static str, worst: f64, tolerance: f64) -> CheckResult {
    CheckResult {
        name,
        passed: worst <= tolerance,
        worst,
        tolerance,
    }
}

/// Worst |row sum − 1| over random attention weight matrices.
pub fn softmax_row_sums(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..RANDOM_INSTANCES {
        let (m, n, d) = (
            rng.random_range(1..6),
            rng.random_range(1..8),
            rng.random_range(1..6),
        );
        let w = attention_weights(
            &random_matrix(rng, m, d, 5.0),
            &random_matrix(rng, n, d, 5.0),
            d,
        )
        .expect("compatible shapes");
        for i in 0..w.rows() {
            if w.row(i).iter().any(|&v| v < 0.0) {
                worst = f64::INFINITY;
            }
            worst = worst.max((w.row(i).iter().sum::<f64>() - 1.0).abs());
        }
    }
    result("softmax rows sum to one", worst, SOFTMAX_TOLERANCE)
}

/// Largest excursion of an output coordinate outside the min/max of V's column.
pub fn convex_hull(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..RANDOM_INSTANCES {
        let (m, n, d, dv) = (
            rng.random_range(1..5),
            rng.random_range(1..7),
            rng.random_range(1..5),
            rng.random_range(1..5),
        );
        let v = random_matrix(rng, n, dv, 3.0);
        let out = scaled_dot_attention(
            &random_matrix(rng, m, d, 3.0),
            &random_matrix(rng, n, d, 3.0),
            &v,
            d,
        )
        .expect("compatible shapes");
        for col in 0..dv {
            let lo = (0..n).map(|j| v.get(j, col)).fold(f64::INFINITY, f64::min);
            let hi = (0..n)
                .map(|j| v.get(j, col))
                .fold(f64::NEG_INFINITY, f64::max);
            for i in 0..m {
                let x = out.get(i, col);
                worst = worst.max(lo - x).max(x - hi);
            }
        }
    }
    result("attention output inside value hull", worst, 1e-12)
}

/// Output change when key/value rows are permuted together.
pub fn permutation_equivariance(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..RANDOM_INSTANCES {
        let (m, n, d) = (
            rng.random_range(1..4),
            rng.random_range(2..6),
            rng.random_range(1..5),
        );
        let q = random_matrix(rng, m, d, 2.0);
        let k = random_matrix(rng, n, d, 2.0);
        let v = random_matrix(rng, n, 3, 2.0);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let pk = Matrix::from_rows(perm.iter().map(|&j| k.row(j).to_vec()).collect()).unwrap();
        let pv = Matrix::from_rows(perm.iter().map(|&j| v.row(j).to_vec()).collect()).unwrap();
        let a = scaled_dot_attention(&q, &k, &v, d).unwrap();
        let b = scaled_dot_attention(&q, &pk, &pv, d).unwrap();
        worst = worst.max(a.max_abs_diff(&b).unwrap());
    }
    result("attention permutation equivariant", worst, 1e-12)
}

/// Worst relative error of the analytic BCE gradient against central differences.
pub fn bce_gradient(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..RANDOM_INSTANCES {
        let (m, n) = (rng.random_range(1..5), rng.random_range(1..6));
        let target: Vec<f64> = (0..m * n).map(|_| rng.random_range(0.0..=1.0)).collect();
        // Keep predictions at least 0.1 away from their target so the gradient is
        // bounded away from zero and the relative error is meaningful.
        let predicted: Vec<f64> = target
            .iter()
            .map(|&s| loop {
                let p: f64 = rng.random_range(0.02..0.98);
                if (p - s).abs() >= 0.1 {
                    break p;
                }
            })
            .collect();
        let t = Matrix::new(m, n, target).unwrap();
        let build =
            |p: Vec<f64>| AnswerScores::new(Matrix::new(m, n, p).unwrap(), t.clone()).unwrap();
        let analytic = bce_answer_gradient(&build(predicted.clone()));
        for idx in 0..m * n {
            let mut plus = predicted.clone();
            let mut minus = predicted.clone();
            plus[idx] += GRADIENT_STEP;
            minus[idx] -= GRADIENT_STEP;
            let numeric = (bce_answer_loss(&build(plus)) - bce_answer_loss(&build(minus)))
                / (2.0 * GRADIENT_STEP);
            let a = analytic.data()[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
            worst = worst.max(rel);
        }
    }
    result(
        "BCE gradient matches finite differences",
        worst,
        GRADIENT_RELATIVE_TOLERANCE,
    )
}

/// Lowering one token's probability must raise the sequence loss.
pub fn nll_monotone(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut violations = 0.0;
    for _ in 0..RANDOM_INSTANCES {
        let len = rng.random_range(1..8);
        let seq: Vec<f64> = (0..len)
            .map(|_| rng.random_range(0.05f64..1.0).ln())
            .collect();
        let base = lm_nll_loss(&TokenLogProbs::new(vec![seq.clone()], None).unwrap());
        let mut lowered = seq;
        let i = rng.random_range(0..len);
        lowered[i] += rng.random_range(0.5f64..0.99).ln();
        let after = lm_nll_loss(&TokenLogProbs::new(vec![lowered], None).unwrap());
        if after <= base {
            violations += 1.0;
        }
    }
    result(
        "NLL increases when a token gets less likely",
        violations,
        0.0,
    )
}

/// Deviation of the bundled 3-row projection from its hand-computed output.
pub fn projection_fixture() -> CheckResult {
    let f = ProjectionFixture::bundled();
    let config = ProjectionConfig {
        num_layers: f.num_layers,
        residual: f.residual,
    };
    let worst = project_features(&f.x, &f.c, &config)
        .ok()
        .and_then(|out| out.max_abs_diff(&f.expected))
        .unwrap_or(f64::INFINITY);
    result(
        "projection fixture matches hand oracle",
        worst,
        FIXTURE_TOLERANCE,
    )
}

pub fn run(seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let results = vec![
        softmax_row_sums(&mut rng),
        convex_hull(&mut rng),
        permutation_equivariance(&mut rng),
        bce_gradient(&mut rng),
        nll_monotone(&mut rng),
        projection_fixture(),
    ];
    CheckReport { seed, results }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let report = run(7);
        for r in &report.results {
            assert!(r.passed, "{} worst {} > {}", r.name, r.worst, r.tolerance);
        }
    }
}
