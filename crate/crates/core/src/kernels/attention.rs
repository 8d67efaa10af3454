use super::Matrix;
use crate::error::{Error, Result};

pub const DEFAULT_PROJECTION_LAYERS: usize = 8;

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows {
        let row = &mut out.data[i * out.cols..(i + 1) * out.cols];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// `softmax(q · kᵀ / √d)`: one row of weights over the keys per query.
pub fn attention_weights(q: &Matrix, k: &Matrix, d: usize) -> Result<Matrix> {
    if d == 0 {
        return Err(Error::Shape("attention scale dimension must be ≥ 1".into()));
    }
    if q.cols != k.cols {
        return Err(Error::Shape(format!(
            "query width {} does not match key width {}",
            q.cols, k.cols
        )));
    }
    if k.rows == 0 {
        return Err(Error::Shape("attention over zero keys".into()));
    }
    let scale = (d as f64).sqrt();
    let mut logits = Matrix::zeros(q.rows, k.rows);
    for i in 0..q.rows {
        for j in 0..k.rows {
            let dot: f64 = q.row(i).iter().zip(k.row(j)).map(|(a, b)| a * b).sum();
            logits.data[i * k.rows + j] = dot / scale;
        }
    }
    Ok(softmax_rows(&logits))
}

/// Scaled dot-product attention. Each output row is a convex combination of the
/// rows of `v`.
pub fn scaled_dot_attention(q: &Matrix, k: &Matrix, v: &Matrix, d: usize) -> Result<Matrix> {
    if k.rows != v.rows {
        return Err(Error::Shape(format!(
            "{} keys but {} values",
            k.rows, v.rows
        )));
    }
    let weights = attention_weights(q, k, d)?;
    let mut out = Matrix::zeros(q.rows, v.cols);
    for i in 0..q.rows {
        for j in 0..v.rows {
            let w = weights.get(i, j);
            for (o, x) in out.data[i * v.cols..(i + 1) * v.cols]
                .iter_mut()
                .zip(v.row(j))
            {
                *o += w * x;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProjectionConfig {
    pub num_layers: usize,
    /// Add each layer's input back onto its attention output.
    pub residual: bool,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            num_layers: DEFAULT_PROJECTION_LAYERS,
            residual: true,
        }
    }
}

/// Appends the constant rows `c` after `x` and runs `num_layers` rounds of
/// parameter-free self-attention (queries, keys and values all equal to the
/// current activations, scale √width).
pub fn project_features(x: &Matrix, c: &Matrix, config: &ProjectionConfig) -> Result<Matrix> {
    if config.num_layers == 0 {
        return Err(Error::Config("projection needs at least one layer".into()));
    }
    let mut h = concat_rows(x, c)?;
    if h.rows == 0 {
        return Err(Error::Shape(
            "projection over an empty token sequence".into(),
        ));
    }
    for _ in 0..config.num_layers {
        let attended = scaled_dot_attention(&h, &h, &h, h.cols.max(1))?;
        h = if config.residual {
            let data = h
                .data
                .iter()
                .zip(&attended.data)
                .map(|(a, b)| a + b)
                .collect();
            Matrix::new(h.rows, h.cols, data)?
        } else {
            attended
        };
    }
    Ok(h)
}

fn concat_rows(top: &Matrix, bottom: &Matrix) -> Result<Matrix> {
    if top.rows == 0 {
        return Ok(bottom.clone());
    }
    if bottom.rows == 0 {
        return Ok(top.clone());
    }
    if top.cols != bottom.cols {
        return Err(Error::Shape(format!(
            "cannot stack width {} on width {}",
            bottom.cols, top.cols
        )));
    }
    let mut data = top.data.clone();
    data.extend_from_slice(&bottom.data);
    Matrix::new(top.rows + bottom.rows, top.cols, data)
}

/// Image rows first, then question rows.
pub fn concat_projected(image: &Matrix, question: &Matrix) -> Result<Matrix> {
    concat_rows(image, question)
}
