//! Exhaustive decoding for tiny problems, used to check the beam search.

use std::collections::BTreeMap;

use super::reweight::{reweight_posteriors, DecodeConfig, LambdaMode};
use crate::error::{Error, Result};
use crate::nn::{log_softmax, log_sum_exp, Tensor2};
use crate::transducer::TransducerModel;
use crate::vocab::{LanguageAttr, SymbolKind, BLANK};

/// Largest `vocab^frames` the oracle will enumerate.
pub const EXHAUSTIVE_MAX_ALIGNMENTS: usize = 1 << 16;

/// Scores every alignment with at most one label per frame from scratch and
/// returns the label sequence with the highest total probability. Each node
/// reruns the prediction network on the whole prefix. Probability-scaled
/// re-weighting is not supported.
pub fn exhaustive_decode(
    model: &TransducerModel,
    features: &Tensor2,
    config: &DecodeConfig,
) -> Result<(Vec<usize>, f64)> {
    if config.lambda_mode == LambdaMode::Prob {
        return Err(Error::domain(
            "the exhaustive oracle supports lambda modes off and fixed only",
        ));
    }
    let frames = features.rows();
    let v = model.vocab_size();
    let n_align = (v as u32)
        .checked_pow(frames as u32)
        .map(|n| n as usize)
        .filter(|&n| n <= EXHAUSTIVE_MAX_ALIGNMENTS)
        .ok_or_else(|| Error::Size(format!("{v}^{frames} alignments exceed the oracle limit")))?;
    let enc = model.encode(features)?;
    let mut totals: BTreeMap<Vec<usize>, Vec<f64>> = BTreeMap::new();
    for code in 0..n_align {
        let mut c = code;
        let mut prefix: Vec<usize> = Vec::new();
        let mut score = 0.0;
        for t in 0..frames {
            // Per frame: blank only, or label `pick` then blank.
            let pick = c % v;
            c /= v;
            let mut steps = Vec::with_capacity(2);
            if pick != BLANK {
                steps.push(pick);
            }
            steps.push(BLANK);
            for k in steps {
                score += node_distribution(model, enc.row(t), &prefix, config)?[k];
                if k != BLANK {
                    prefix.push(k);
                }
            }
        }
        totals.entry(prefix).or_default().push(score);
    }
    Ok(totals
        .into_iter()
        .map(|(p, s)| (p, log_sum_exp(&s)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least the empty alignment"))
}

fn node_distribution(
    model: &TransducerModel,
    enc: &[f64],
    prefix: &[usize],
    config: &DecodeConfig,
) -> Result<Vec<f64>> {
    let mut states = model.initial_prediction_states();
    let mut out = Vec::new();
    for &y in std::iter::once(&BLANK).chain(prefix) {
        let (o, s) = model.prediction_step(y, &states)?;
        out = o;
        states = s;
    }
    let raw = log_softmax(&model.joint_logits(enc, &out)?)?;
    let lang = prefix
        .iter()
        .rev()
        .map(|&k| model.classes[k])
        .find(|c| c.kind == SymbolKind::LanguageId)
        .map_or(LanguageAttr::Neutral, |c| c.lang);
    reweight_posteriors(&raw, &model.classes, lang, config.effective_lambda(None))
}
