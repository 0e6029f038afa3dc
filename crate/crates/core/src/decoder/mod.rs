//! Beam-search decoding with optional language-ID posterior re-weighting.

mod beam;
mod nbest;
mod oracle;
mod reweight;

pub use crate::vocab::strip_language_ids;
pub use beam::{beam_search_decode, collapse_alignment, Hypothesis};
pub use nbest::{format_nbest, parse_nbest, read_nbest, NbestEntry, NbestList};
pub use oracle::{exhaustive_decode, EXHAUSTIVE_MAX_ALIGNMENTS};
pub use reweight::{reweight_posteriors, DecodeConfig, LambdaMode, DEFAULT_LAMBDA};
