//! Visual-textual similarity score: the harmonic mean of text-embedding cosine
//! similarity and visual-rationale AP, with the arithmetic-mean and product
//! combiners it is compared against.
//!
//! All values are fractions in `[0, 1]`; rendering to percentages happens in reports.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VtsInputs {
    pub cos_sim: f64,
    pub ap: f64,
}

impl VtsInputs {
    pub fn new(cos_sim: f64, ap: f64) -> Result<Self> {
        for (name, v) in [("cos_sim", cos_sim), ("ap", ap)] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(Self { cos_sim, ap })
    }
}

/// Harmonic mean. Zero when either input is zero; when both are zero the result
/// is zero and [`is_degenerate`] reports it.
pub fn vts(inputs: VtsInputs) -> f64 {
    let VtsInputs { cos_sim, ap } = inputs;
    let sum = cos_sim + ap;
    if sum == 0.0 {
        0.0
    } else {
        2.0 * cos_sim * ap / sum
    }
}

pub fn is_degenerate(inputs: VtsInputs) -> bool {
    inputs.cos_sim == 0.0 && inputs.ap == 0.0
}

pub fn combine_arithmetic(inputs: VtsInputs) -> f64 {
    (inputs.cos_sim + inputs.ap) / 2.0
}

pub fn combine_product(inputs: VtsInputs) -> f64 {
    inputs.cos_sim * inputs.ap
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VtsReport {
    pub vts: f64,
    pub arith: f64,
    pub prod: f64,
    pub cos_sim: f64,
    pub ap: f64,
    pub degenerate: bool,
}

impl VtsReport {
    pub fn compute(inputs: VtsInputs) -> Self {
        Self {
            vts: vts(inputs),
            arith: combine_arithmetic(inputs),
            prod: combine_product(inputs),
            cos_sim: inputs.cos_sim,
            ap: inputs.ap,
            degenerate: is_degenerate(inputs),
        }
    }
}

/// Fraction to a percentage rounded to two decimals.
pub fn to_percent(fraction: f64) -> f64 {
    (fraction * 10_000.0).round() / 100.0
}
