use std::collections::HashMap;

use super::reweight::{reweight_posteriors, DecodeConfig};
use crate::error::{Error, Result};
use crate::nn::{log_add, log_softmax_in_place, LstmState, Tensor2};
use crate::transducer::TransducerModel;
use crate::vocab::{LanguageAttr, SymbolKind, BLANK};

/// One beam entry.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    /// Emitted symbols, blank-free.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub pred_states: Vec<LstmState>,
    /// Prediction output projected into the joint space.
    pub pred_proj: Vec<f64>,
    pub current_language: LanguageAttr,
    /// Raw model posterior of the latest language-ID emission.
    pub id_posterior: Option<f64>,
}

/// Blank-removal collapse of an alignment; repeated labels are kept.
pub fn collapse_alignment(alignment: &[usize]) -> Vec<usize> {
    alignment.iter().copied().filter(|&k| k != BLANK).collect()
}

struct Candidate {
    parent: usize,
    token: usize,
    log_prob: f64,
    raw_log_prob: f64,
}

fn better(a: &Hypothesis, b: &Hypothesis) -> std::cmp::Ordering {
    b.log_prob.total_cmp(&a.log_prob).then_with(|| a.tokens.cmp(&b.tokens))
}

/// Adds `h` into `pool`, log-adding probabilities of identical prefixes.
/// The merged entry keeps the language-ID posterior of the more probable
/// path.
fn merge_into(pool: &mut Vec<Hypothesis>, index: &mut HashMap<Vec<usize>, usize>, h: Hypothesis) {
    match index.get(&h.tokens) {
        Some(&i) => {
            let existing = &mut pool[i];
            if h.log_prob > existing.log_prob {
                existing.id_posterior = h.id_posterior;
            }
            existing.log_prob = log_add(existing.log_prob, h.log_prob);
        }
        None => {
            index.insert(h.tokens.clone(), pool.len());
            pool.push(h);
        }
    }
}

fn prune(mut pool: Vec<Hypothesis>, beam: usize) -> Vec<Hypothesis> {
    pool.sort_by(better);
    pool.truncate(beam);
    pool
}

/// Frame-synchronous beam search. Within each frame a hypothesis may emit up
/// to `max_symbols_per_frame` labels before the blank that moves it to the
/// next frame. Returns up to `beam_size` hypotheses, best first.
pub fn beam_search_decode(
    model: &TransducerModel,
    features: &Tensor2,
    config: &DecodeConfig,
) -> Result<Vec<Hypothesis>> {
    config.validate()?;
    if features.cols() != model.config.input_dim {
        return Err(Error::shape("features", model.config.input_dim, features.cols()));
    }
    let (start_out, start_states) = model.prediction_step(BLANK, &model.initial_prediction_states())?;
    let start = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        pred_proj: model.project_prediction(&Tensor2::row_vector(start_out))?.into_vec(),
        pred_states: start_states,
        current_language: LanguageAttr::Neutral,
        id_posterior: None,
    };
    if features.rows() == 0 {
        return Ok(vec![start]);
    }
    let enc_proj = model.project_encoder(&model.encode(features)?)?;
    let classes = &model.classes;
    let v = model.vocab_size();

    // Prefixes recur across frames; the prediction network only ever sees
    // the prefix, so its outputs are computed once per utterance.
    let mut pred_cache: HashMap<Vec<usize>, (Vec<LstmState>, Vec<f64>)> = HashMap::new();
    let mut beam = vec![start];
    for t in 0..features.rows() {
        let a_t = enc_proj.row(t);
        let mut next: Vec<Hypothesis> = Vec::new();
        let mut next_index = HashMap::new();
        let mut active = beam;
        for level in 0..=config.max_symbols_per_frame {
            let mut candidates: Vec<Candidate> = Vec::new();
            for (hi, h) in active.iter().enumerate() {
                let mut raw = model.joint_from_projections(a_t, &h.pred_proj)?;
                log_softmax_in_place(&mut raw)
                    .map_err(|_| Error::Numerical(format!("non-finite joint output at frame {t}")))?;
                let lambda = config.effective_lambda(h.id_posterior);
                let lp = reweight_posteriors(&raw, classes, h.current_language, lambda)?;
                let mut blank = h.clone();
                blank.log_prob += lp[BLANK];
                merge_into(&mut next, &mut next_index, blank);
                if level < config.max_symbols_per_frame {
                    for k in 1..v {
                        candidates.push(Candidate {
                            parent: hi,
                            token: k,
                            log_prob: h.log_prob + lp[k],
                            raw_log_prob: raw[k],
                        });
                    }
                }
            }
            if candidates.is_empty() {
                break;
            }
            // Within a level every candidate prefix has a unique parent, so
            // no merging is needed before pruning.
            candidates.sort_by(|x, y| {
                y.log_prob.total_cmp(&x.log_prob).then_with(|| {
                    let px = &active[x.parent].tokens;
                    let py = &active[y.parent].tokens;
                    px.iter().chain([&x.token]).cmp(py.iter().chain([&y.token]))
                })
            });
            candidates.truncate(config.beam_size);
            let mut expanded = Vec::with_capacity(candidates.len());
            for c in candidates {
                let parent = &active[c.parent];
                let mut tokens = parent.tokens.clone();
                tokens.push(c.token);
                let (pred_states, pred_proj) = match pred_cache.get(&tokens) {
                    Some(hit) => hit.clone(),
                    None => {
                        let (out, states) = model.prediction_step(c.token, &parent.pred_states)?;
                        let proj = model.project_prediction(&Tensor2::row_vector(out))?.into_vec();
                        pred_cache.insert(tokens.clone(), (states.clone(), proj.clone()));
                        (states, proj)
                    }
                };
                let class = classes[c.token];
                let (current_language, id_posterior) = if class.kind == SymbolKind::LanguageId {
                    (class.lang, Some(c.raw_log_prob.exp()))
                } else {
                    (parent.current_language, parent.id_posterior)
                };
                expanded.push(Hypothesis {
                    tokens,
                    log_prob: c.log_prob,
                    pred_states,
                    pred_proj,
                    current_language,
                    id_posterior,
                });
            }
            active = expanded;
        }
        beam = prune(next, config.beam_size);
    }
    Ok(beam)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapse_examples() {
        assert_eq!(collapse_alignment(&[5, 0, 7, 0, 0, 9]), vec![5, 7, 9]);
        assert!(collapse_alignment(&[0, 0, 0]).is_empty());
        assert_eq!(collapse_alignment(&[3, 3, 4]), vec![3, 3, 4]);
    }
}
