//! Evaluation and dataset tooling for explanatory visual question answering.
//!
//! The crate bundles everything the `rationale-bench` binary needs:
//!
//! * [`geometry`] and [`detection`]: box overlap and single-category average precision
//!   for visual rationales.
//! * [`text`]: BLEU-4, ROUGE-L, CIDEr and METEOR over a shared rule-based tokenizer.
//! * [`embedding`]: sentence-embedding providers and cosine similarity.
//! * [`vts`]: the harmonic fusion of embedding similarity and AP, plus the two
//!   alternative combiners it is usually compared against.
//! * [`synthesis`] and [`review`]: building a rationale dataset from question/answer/
//!   explanation triplets and COCO boxes, including the human review step.
//! * [`kernels`]: forward reference numerics for the projection attention stack and
//!   the training losses.
//! * [`eval`]: orchestration of a full evaluation run into a [`eval::MetricReport`].

pub mod detection;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod jsonl;
pub mod kernels;
pub mod review;
pub mod synthesis;
pub mod text;
pub mod vts;

pub use detection::{Detection, PrCurve};
pub use embedding::{EmbeddingProvider, EmbeddingVector};
pub use error::{Error, Result};
pub use eval::MetricReport;
pub use geometry::BoundingBox;
pub use review::{ReviewDecision, ReviewItem};
pub use synthesis::RationaleSample;
pub use vts::{VtsInputs, VtsReport};

/// Toolkit version stamped into every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
