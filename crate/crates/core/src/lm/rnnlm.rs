//! Single-layer LSTM language model over word-level tokens.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::ngram::{SENT_END, SENT_START, UNK};
use crate::container::{decode_container, encode_container};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, log_softmax_in_place, lstm_backward, lstm_forward, AdamConfig, AdamState, Linear, LstmParams, LstmState,
    ParameterSet, Tensor2,
};

pub const MAGIC: &[u8; 4] = b"CSLM";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RnnLmConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for RnnLmConfig {
    fn default() -> Self {
        RnnLmConfig {
            embedding_dim: 32,
            hidden_dim: 64,
            epochs: 5,
            learning_rate: 0.01,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnLmParams {
    pub embedding: Tensor2,
    pub lstm: LstmParams,
    pub output: Linear,
}

impl ParameterSet for RnnLmParams {
    fn named_tensors(&self) -> Vec<(String, &Tensor2)> {
        vec![
            ("embedding".into(), &self.embedding),
            ("lstm.weights".into(), &self.lstm.weights),
            ("lstm.bias".into(), &self.lstm.bias),
            ("output.weight".into(), &self.output.weight),
            ("output.bias".into(), &self.output.bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2> {
        vec![
            &mut self.embedding,
            &mut self.lstm.weights,
            &mut self.lstm.bias,
            &mut self.output.weight,
            &mut self.output.bias,
        ]
    }
}

/// Symbol table `[<s>, </s>, <unk>, words…]`; the softmax covers all of it.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnLm {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
    pub params: RnnLmParams,
}

const START_ID: usize = 0;
const END_ID: usize = 1;
const UNK_ID: usize = 2;

impl RnnLm {
    /// Builds the symbol table from the corpus. `rng = None` gives all-zero
    /// weights.
    pub fn new<S: AsRef<str>, R: Rng + ?Sized>(
        corpus: &[Vec<S>],
        embedding_dim: usize,
        hidden_dim: usize,
        rng: Option<&mut R>,
    ) -> Result<Self> {
        if embedding_dim == 0 || hidden_dim == 0 {
            return Err(Error::domain("RNN-LM dimensions must be at least 1"));
        }
        let mut words: Vec<String> = corpus
            .iter()
            .flatten()
            .map(|t| t.as_ref().to_string())
            .filter(|w| ![SENT_START, SENT_END, UNK].contains(&w.as_str()))
            .collect();
        words.sort();
        words.dedup();
        let mut symbols: Vec<String> = [SENT_START, SENT_END, UNK].iter().map(|s| s.to_string()).collect();
        symbols.extend(words);
        let v = symbols.len();
        let params = match rng {
            Some(rng) => RnnLmParams {
                embedding: Tensor2::uniform(v, embedding_dim, 1.0, rng),
                lstm: LstmParams::init(embedding_dim, hidden_dim, rng),
                output: Linear::init(hidden_dim, v, rng),
            },
            None => RnnLmParams {
                embedding: Tensor2::zeros(v, embedding_dim),
                lstm: LstmParams::zeros(embedding_dim, hidden_dim),
                output: Linear::zeros(hidden_dim, v),
            },
        };
        Ok(Self::from_parts(symbols, params))
    }

    fn from_parts(symbols: Vec<String>, params: RnnLmParams) -> Self {
        let index = symbols.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        RnnLm { symbols, index, params }
    }

    pub fn vocab_size(&self) -> usize {
        self.symbols.len()
    }

    fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.index.get(t.as_ref()).copied().unwrap_or(UNK_ID))
            .collect()
    }

    /// Inputs `<s> w1 … wn`, targets `w1 … wn </s>`.
    fn forward(&self, ids: &[usize]) -> Result<(Tensor2, Tensor2, crate::nn::LstmCache, Vec<usize>)> {
        let inputs: Vec<usize> = std::iter::once(START_ID).chain(ids.iter().copied()).collect();
        let targets: Vec<usize> = ids.iter().copied().chain(std::iter::once(END_ID)).collect();
        let e = self.params.embedding.cols();
        let mut x = Tensor2::zeros(inputs.len(), e);
        for (r, &id) in inputs.iter().enumerate() {
            x.row_mut(r).copy_from_slice(self.params.embedding.row(id));
        }
        let (h, _, cache) = lstm_forward(&self.params.lstm, &x, &LstmState::zeros(self.params.lstm.hidden_dim))?;
        let mut logits = self.params.output.forward(&h)?;
        for r in 0..logits.rows() {
            log_softmax_in_place(logits.row_mut(r)).map_err(|_| Error::Numerical("non-finite RNN-LM logits".into()))?;
        }
        Ok((h, logits, cache, targets))
    }

    /// Natural-log probability of the sentence including its end marker.
    pub fn logprob<S: AsRef<str>>(&self, tokens: &[S]) -> Result<f64> {
        let (_, lp, _, targets) = self.forward(&self.ids(tokens))?;
        Ok(targets.iter().enumerate().map(|(r, &y)| lp.get(r, y)).sum())
    }

    /// Negative log-likelihood of one sentence and its parameter gradient.
    pub fn loss_and_grad<S: AsRef<str>>(&self, tokens: &[S]) -> Result<(f64, RnnLmParams)> {
        let ids = self.ids(tokens);
        let (h, lp, cache, targets) = self.forward(&ids)?;
        let mut grads = self.params.zeros_like();
        let mut d_logits = lp.map(f64::exp);
        let mut loss = 0.0;
        for (r, &y) in targets.iter().enumerate() {
            loss -= lp.get(r, y);
            let d = d_logits.get(r, y) - 1.0;
            d_logits.set(r, y, d);
        }
        let d_h = self.params.output.backward(&h, &d_logits, &mut grads.output)?;
        let zero = LstmState::zeros(self.params.lstm.hidden_dim);
        let lg = lstm_backward(&self.params.lstm, &cache, &d_h, &zero)?;
        grads.lstm = lg.params;
        let inputs = std::iter::once(START_ID).chain(ids.iter().copied());
        for (r, id) in inputs.enumerate() {
            for (g, d) in grads.embedding.row_mut(id).iter_mut().zip(lg.inputs.row(r)) {
                *g += d;
            }
        }
        Ok((loss, grads))
    }

    /// Plain per-sentence Adam training in corpus order. Returns the mean
    /// per-token loss of each epoch.
    pub fn train<S: AsRef<str>>(&mut self, corpus: &[Vec<S>], epochs: usize, learning_rate: f64) -> Result<Vec<f64>> {
        let config = AdamConfig {
            learning_rate,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(config, &self.params.tensors());
        let mut history = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let (mut total, mut count) = (0.0, 0usize);
            for sent in corpus {
                let (loss, grads) = self.loss_and_grad(sent)?;
                if !loss.is_finite() || !grads.is_finite() {
                    return Err(Error::Numerical("RNN-LM training diverged".into()));
                }
                total += loss;
                count += sent.len() + 1;
                adam_step(&mut adam, &mut self.params.tensors_mut(), &grads.tensors())?;
            }
            history.push(total / count.max(1) as f64);
        }
        self.params.round_to_f32();
        Ok(history)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = json!({
            "symbols": self.symbols,
            "embedding_dim": self.params.embedding.cols(),
            "hidden_dim": self.params.lstm.hidden_dim,
        });
        encode_container(MAGIC, &header, &self.params.named_tensors())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            symbols: Vec<String>,
            embedding_dim: usize,
            hidden_dim: usize,
        }
        let mut c = decode_container(MAGIC, bytes)?;
        let h: Header = serde_json::from_value(std::mem::take(&mut c.header))
            .map_err(|e| Error::format("RNN-LM header", e.to_string()))?;
        let starts_ok = h.symbols.len() >= 3
            && h.symbols[START_ID] == SENT_START
            && h.symbols[END_ID] == SENT_END
            && h.symbols[UNK_ID] == UNK;
        if !starts_ok {
            return Err(Error::format(
                "RNN-LM header",
                "symbol table lacks the reserved markers",
            ));
        }
        let v = h.symbols.len();
        let mut params = RnnLmParams {
            embedding: Tensor2::zeros(v, h.embedding_dim),
            lstm: LstmParams::zeros(h.embedding_dim, h.hidden_dim),
            output: Linear::zeros(h.hidden_dim, v),
        };
        let shapes: Vec<(String, usize, usize)> = params
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.rows(), t.cols()))
            .collect();
        for ((name, r, cols), slot) in shapes.iter().zip(params.tensors_mut()) {
            *slot = c.take_shaped(name, *r, *cols)?;
        }
        Ok(Self::from_parts(h.symbols, params))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn corpus() -> Vec<Vec<String>> {
        ["<chn> 我 去 <eng> school", "<eng> go home"]
            .iter()
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn zero_weights_are_uniform() {
        let lm = RnnLm::new::<_, ChaCha8Rng>(&corpus(), 4, 5, None).unwrap();
        let v = lm.vocab_size() as f64;
        assert_eq!(v, 3.0 + 7.0);
        let lp = lm.logprob(&["我", "go", "unseen"]).unwrap();
        assert!((lp + 4.0 * v.ln()).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lm = RnnLm::new(&corpus(), 3, 4, Some(&mut rng)).unwrap();
        let sent = ["<eng>", "go", "我"];
        let (_, grads) = lm.loss_and_grad(&sent).unwrap();
        let eps = 1e-5;
        for ti in 0..5 {
            for i in 0..lm.params.tensors()[ti].len() {
                let eval = |d: f64| {
                    let mut m = lm.clone();
                    m.params.tensors_mut()[ti].data_mut()[i] += d;
                    -m.logprob(&sent).unwrap()
                };
                let fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
                let a = grads.tensors()[ti].data()[i];
                assert!(
                    (a - fd).abs() <= 1e-6 * a.abs().max(fd.abs()).max(1e-3),
                    "{ti}/{i}: {a} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn overfits_one_sentence() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sent = vec!["<chn> 我 去 <eng> school home"
            .split_whitespace()
            .map(str::to_string)
            .collect::<Vec<_>>()];
        let mut lm = RnnLm::new(&sent, 16, 32, Some(&mut rng)).unwrap();
        lm.train(&sent, 100, 0.02).unwrap();
        let lp = lm.logprob(&sent[0]).unwrap();
        let ppl = (-lp / (sent[0].len() + 1) as f64).exp();
        assert!(ppl < 1.5, "perplexity {ppl}");
        assert_eq!(lm.logprob(&sent[0]).unwrap().to_bits(), lp.to_bits());
    }

    #[test]
    fn container_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut lm = RnnLm::new(&corpus(), 3, 4, Some(&mut rng)).unwrap();
        lm.params.round_to_f32();
        let back = RnnLm::from_bytes(&lm.to_bytes().unwrap()).unwrap();
        assert_eq!(back, lm);
        assert!(crate::transducer::Checkpoint::from_bytes(&lm.to_bytes().unwrap()).is_err());
    }
}
