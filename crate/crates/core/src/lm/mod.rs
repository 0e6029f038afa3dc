//! Language models for N-best rescoring: a discounted n-gram model and a
//! small recurrent model.

mod ngram;
mod rescore;
mod rnnlm;

pub use ngram::{ngram_train, NgramModel, DEFAULT_DISCOUNT, DEFAULT_ORDER, SENT_END, SENT_START, UNK};
pub use rescore::{rescore_nbest, LanguageModel, RescoreConfig, RescoredEntry};
pub use rnnlm::{RnnLm, RnnLmConfig, RnnLmParams, MAGIC as RNNLM_MAGIC};
