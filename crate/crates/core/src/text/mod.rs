//! Caption-style language metrics over a shared rule-based tokenizer.
//!
//! All metrics take pre-tokenized [`TokenSequence`]s so that candidates and
//! references are guaranteed to go through the same tokenizer.

mod bleu;
mod cider;
mod meteor;
mod ngram;
mod rouge;
mod tokenize;

pub use bleu::{bleu4, bleu4_with, BleuConfig, BleuStats};
pub use cider::{cider, CiderScores};
pub use meteor::{meteor, meteor_multi, meteor_with, MeteorParams};
pub use ngram::{ngrams, NGram, NGramMultiset, MAX_ORDER};
pub use rouge::{lcs_len, rouge_l, rouge_l_multi, DEFAULT_BETA};
pub use tokenize::{tokenize, TokenSequence};
