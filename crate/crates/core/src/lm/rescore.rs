use serde::{Deserialize, Serialize};

use super::ngram::NgramModel;
use super::rnnlm::RnnLm;
use crate::decoder::NbestEntry;
use crate::error::{Error, Result};
use crate::vocab::is_language_tag;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RescoreConfig {
    pub lm_weight: f64,
    /// Added once per non-tag token.
    pub length_penalty: f64,
    /// Hypotheses per utterance taken into account.
    pub nbest: usize,
}

impl Default for RescoreConfig {
    fn default() -> Self {
        RescoreConfig {
            lm_weight: 0.3,
            length_penalty: 0.0,
            nbest: 35,
        }
    }
}

impl RescoreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nbest == 0 {
            return Err(Error::domain("rescoring needs nbest >= 1"));
        }
        if !self.lm_weight.is_finite() || !self.length_penalty.is_finite() {
            return Err(Error::domain("rescoring weights must be finite"));
        }
        Ok(())
    }
}

/// Anything that can score a word-level token sequence.
pub trait LanguageModel {
    fn sentence_logprob(&self, tokens: &[String]) -> Result<f64>;
}

impl LanguageModel for NgramModel {
    fn sentence_logprob(&self, tokens: &[String]) -> Result<f64> {
        Ok(self.logprob(tokens))
    }
}

impl LanguageModel for RnnLm {
    fn sentence_logprob(&self, tokens: &[String]) -> Result<f64> {
        self.logprob(tokens)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RescoredEntry {
    pub entry: NbestEntry,
    pub lm_log_prob: f64,
    pub score: f64,
}

/// Re-ranks one utterance's hypotheses by
/// `acoustic + lm_weight · lm + length_penalty · tokens`, best first.
/// Equal scores keep their original order.
pub fn rescore_nbest(
    nbest: &[NbestEntry],
    lm: &dyn LanguageModel,
    config: &RescoreConfig,
) -> Result<Vec<RescoredEntry>> {
    config.validate()?;
    if nbest.is_empty() {
        return Err(Error::domain("cannot rescore an empty n-best list"));
    }
    let mut out = Vec::with_capacity(nbest.len().min(config.nbest));
    for e in nbest.iter().take(config.nbest) {
        // Tags stay in the LM input; the LM is trained on tagged text.
        let lm_log_prob = lm.sentence_logprob(&e.tokens)?;
        let words = e.tokens.iter().filter(|t| !is_language_tag(t)).count();
        let score = e.log_prob + config.lm_weight * lm_log_prob + config.length_penalty * words as f64;
        out.push(RescoredEntry {
            entry: e.clone(),
            lm_log_prob,
            score,
        });
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(out)
}
