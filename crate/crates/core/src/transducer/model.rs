use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    dropout_backward, dropout_forward, gemm, log_softmax_in_place, lstm_backward, lstm_forward, Linear, LstmCache,
    LstmParams, LstmState, ParameterSet, Tensor2,
};
use crate::vocab::{LanguageAttr, SymbolClass, BLANK};

use super::loss::{rnnt_loss, LatticeLogProbs};

/// Network dimensions. `lid_dim = 0` disables the embedding constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub encoder_layers: usize,
    pub encoder_dim: usize,
    pub prediction_layers: usize,
    pub prediction_dim: usize,
    pub joint_dim: usize,
    pub embedding_dim: usize,
    pub lid_dim: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk()
    }
}

impl ModelConfig {
    pub fn desk() -> Self {
        ModelConfig {
            input_dim: 16,
            encoder_layers: 2,
            encoder_dim: 64,
            prediction_layers: 1,
            prediction_dim: 64,
            joint_dim: 64,
            embedding_dim: 64,
            lid_dim: 8,
            dropout: 0.2,
        }
    }

    pub fn seame_paper() -> Self {
        ModelConfig {
            input_dim: 80,
            encoder_layers: 4,
            encoder_dim: 512,
            prediction_layers: 2,
            prediction_dim: 512,
            joint_dim: 512,
            embedding_dim: 512,
            lid_dim: 8,
            dropout: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_dim", self.input_dim),
            ("encoder_layers", self.encoder_layers),
            ("encoder_dim", self.encoder_dim),
            ("prediction_layers", self.prediction_layers),
            ("prediction_dim", self.prediction_dim),
            ("joint_dim", self.joint_dim),
            ("embedding_dim", self.embedding_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::domain(format!("model {name} must be at least 1")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::domain(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// All trainable tensors. The first joint layer is split into an encoder
/// half (carrying the bias) and a prediction half.
#[derive(Debug, Clone, PartialEq)]
pub struct TransducerParams {
    pub encoder: Vec<LstmParams>,
    pub prediction: Vec<LstmParams>,
    pub embedding: Tensor2,
    pub joint_enc: Linear,
    pub joint_pred: Tensor2,
    pub output: Linear,
}

impl ParameterSet for TransducerParams {
    fn named_tensors(&self) -> Vec<(String, &Tensor2)> {
        let mut out = Vec::new();
        for (i, l) in self.encoder.iter().enumerate() {
            out.push((format!("encoder.{i}.weights"), &l.weights));
            out.push((format!("encoder.{i}.bias"), &l.bias));
        }
        for (i, l) in self.prediction.iter().enumerate() {
            out.push((format!("prediction.{i}.weights"), &l.weights));
            out.push((format!("prediction.{i}.bias"), &l.bias));
        }
        out.push(("embedding".into(), &self.embedding));
        out.push(("joint.enc.weight".into(), &self.joint_enc.weight));
        out.push(("joint.enc.bias".into(), &self.joint_enc.bias));
        out.push(("joint.pred.weight".into(), &self.joint_pred));
        out.push(("output.weight".into(), &self.output.weight));
        out.push(("output.bias".into(), &self.output.bias));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut out = Vec::new();
        for l in self.encoder.iter_mut().chain(self.prediction.iter_mut()) {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
        }
        out.push(&mut self.embedding);
        out.push(&mut self.joint_enc.weight);
        out.push(&mut self.joint_enc.bias);
        out.push(&mut self.joint_pred);
        out.push(&mut self.output.weight);
        out.push(&mut self.output.bias);
        out
    }
}

impl TransducerParams {
    pub fn zeros(config: &ModelConfig, vocab_size: usize) -> Self {
        let c = config;
        TransducerParams {
            encoder: (0..c.encoder_layers)
                .map(|i| LstmParams::zeros(if i == 0 { c.input_dim } else { c.encoder_dim }, c.encoder_dim))
                .collect(),
            prediction: (0..c.prediction_layers)
                .map(|i| {
                    let input = if i == 0 {
                        c.embedding_dim + c.lid_dim
                    } else {
                        c.prediction_dim
                    };
                    LstmParams::zeros(input, c.prediction_dim)
                })
                .collect(),
            embedding: Tensor2::zeros(vocab_size, c.embedding_dim),
            joint_enc: Linear::zeros(c.encoder_dim, c.joint_dim),
            joint_pred: Tensor2::zeros(c.prediction_dim, c.joint_dim),
            output: Linear::zeros(c.joint_dim, vocab_size),
        }
    }

    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, vocab_size: usize, rng: &mut R) -> Self {
        let c = config;
        let encoder = (0..c.encoder_layers)
            .map(|i| LstmParams::init(if i == 0 { c.input_dim } else { c.encoder_dim }, c.encoder_dim, rng))
            .collect();
        let prediction = (0..c.prediction_layers)
            .map(|i| {
                let input = if i == 0 {
                    c.embedding_dim + c.lid_dim
                } else {
                    c.prediction_dim
                };
                LstmParams::init(input, c.prediction_dim, rng)
            })
            .collect();
        let embedding = Tensor2::uniform(vocab_size, c.embedding_dim, 1.0, rng);
        // The joint input is [h ‖ p], so both halves share its fan-in.
        let bound = 1.0 / ((c.encoder_dim + c.prediction_dim) as f64).sqrt();
        let joint_enc = Linear {
            weight: Tensor2::uniform(c.encoder_dim, c.joint_dim, bound, rng),
            bias: Tensor2::uniform(1, c.joint_dim, bound, rng),
        };
        let joint_pred = Tensor2::uniform(c.prediction_dim, c.joint_dim, bound, rng);
        let output = Linear::init(c.joint_dim, vocab_size, rng);
        TransducerParams {
            encoder,
            prediction,
            embedding,
            joint_enc,
            joint_pred,
            output,
        }
    }
}

/// Parameters together with the symbol classes they were trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct TransducerModel {
    pub config: ModelConfig,
    pub classes: Vec<SymbolClass>,
    pub params: TransducerParams,
}

/// The fixed constraint vector for a language: all `+1` for English, all
/// `-1` for Mandarin, zeros otherwise.
pub fn language_vector(lang: LanguageAttr, lid_dim: usize) -> Vec<f64> {
    let v = match lang {
        LanguageAttr::English => 1.0,
        LanguageAttr::Mandarin => -1.0,
        LanguageAttr::Neutral => 0.0,
    };
    vec![v; lid_dim]
}

impl TransducerModel {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, classes: Vec<SymbolClass>, rng: &mut R) -> Result<Self> {
        config.validate()?;
        check_classes(&classes)?;
        let params = TransducerParams::init(&config, classes.len(), rng);
        Ok(TransducerModel {
            config,
            classes,
            params,
        })
    }

    pub fn zeros(config: ModelConfig, classes: Vec<SymbolClass>) -> Result<Self> {
        config.validate()?;
        check_classes(&classes)?;
        let params = TransducerParams::zeros(&config, classes.len());
        Ok(TransducerModel {
            config,
            classes,
            params,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.classes.len()
    }

    /// Embedding row of `token_id` followed by its language vector. Blank's
    /// row doubles as the prediction network's start symbol.
    pub fn embed_with_language_constraint(&self, token_id: usize) -> Result<Vec<f64>> {
        let class = self.classes.get(token_id).ok_or(Error::Index {
            what: "vocabulary",
            index: token_id,
            len: self.classes.len(),
        })?;
        let mut out = self.params.embedding.row(token_id).to_vec();
        out.extend(language_vector(class.lang, self.config.lid_dim));
        Ok(out)
    }

    /// Prediction-network input rows for `[start, y_1, …, y_U]`.
    pub fn prediction_inputs(&self, target: &[usize]) -> Result<Tensor2> {
        let width = self.config.embedding_dim + self.config.lid_dim;
        let mut rows = Tensor2::zeros(target.len() + 1, width);
        rows.row_mut(0)
            .copy_from_slice(&self.embed_with_language_constraint(BLANK)?);
        for (u, &y) in target.iter().enumerate() {
            rows.row_mut(u + 1)
                .copy_from_slice(&self.embed_with_language_constraint(y)?);
        }
        Ok(rows)
    }

    /// Runs the encoder stack over `features` (no dropout).
    pub fn encode(&self, features: &Tensor2) -> Result<Tensor2> {
        features.check_shape("features", features.rows(), self.config.input_dim)?;
        let mut x = features.clone();
        for layer in &self.params.encoder {
            let (out, _, _) = lstm_forward(layer, &x, &LstmState::zeros(layer.hidden_dim))?;
            x = out;
        }
        Ok(x)
    }

    /// `enc · W1a + b1` for every frame.
    pub fn project_encoder(&self, encoded: &Tensor2) -> Result<Tensor2> {
        self.params.joint_enc.forward(encoded)
    }

    /// `pred · W1b` for every row.
    pub fn project_prediction(&self, pred: &Tensor2) -> Result<Tensor2> {
        pred.matmul(&self.params.joint_pred)
    }

    pub fn initial_prediction_states(&self) -> Vec<LstmState> {
        self.params
            .prediction
            .iter()
            .map(|l| LstmState::zeros(l.hidden_dim))
            .collect()
    }

    /// Advances the prediction stack by one symbol. Returns the top-layer
    /// output and the new per-layer states.
    pub fn prediction_step(&self, token_id: usize, states: &[LstmState]) -> Result<(Vec<f64>, Vec<LstmState>)> {
        if states.len() != self.params.prediction.len() {
            return Err(Error::shape(
                "prediction states",
                self.params.prediction.len(),
                states.len(),
            ));
        }
        let mut x = Tensor2::row_vector(self.embed_with_language_constraint(token_id)?);
        let mut next = Vec::with_capacity(states.len());
        for (layer, state) in self.params.prediction.iter().zip(states) {
            let (out, s, _) = lstm_forward(layer, &x, state)?;
            x = out;
            next.push(s);
        }
        Ok((x.into_vec(), next))
    }

    /// Joint logits from already-projected encoder and prediction rows.
    pub fn joint_from_projections(&self, enc_proj: &[f64], pred_proj: &[f64]) -> Result<Vec<f64>> {
        let j = self.config.joint_dim;
        if enc_proj.len() != j || pred_proj.len() != j {
            return Err(Error::shape(
                "joint projections",
                j,
                enc_proj.len().max(pred_proj.len()),
            ));
        }
        let hidden: Vec<f64> = enc_proj.iter().zip(pred_proj).map(|(a, b)| (a + b).tanh()).collect();
        let v = self.vocab_size();
        let w = self.params.output.weight.data();
        let mut out = self.params.output.bias.data().to_vec();
        for (k, &hk) in hidden.iter().enumerate() {
            for (o, wk) in out.iter_mut().zip(&w[k * v..(k + 1) * v]) {
                *o += hk * wk;
            }
        }
        Ok(out)
    }

    /// `z = W2 · tanh(W1 · [h ‖ p] + b1) + b2`.
    pub fn joint_logits(&self, enc_state: &[f64], pred_state: &[f64]) -> Result<Vec<f64>> {
        if enc_state.len() != self.config.encoder_dim {
            return Err(Error::shape(
                "joint encoder input",
                self.config.encoder_dim,
                enc_state.len(),
            ));
        }
        if pred_state.len() != self.config.prediction_dim {
            return Err(Error::shape(
                "joint prediction input",
                self.config.prediction_dim,
                pred_state.len(),
            ));
        }
        let a = self.project_encoder(&Tensor2::row_vector(enc_state.to_vec()))?;
        let b = self.project_prediction(&Tensor2::row_vector(pred_state.to_vec()))?;
        self.joint_from_projections(a.data(), b.data())
    }

    /// Per-node log-distributions of the full lattice (inference mode).
    pub fn lattice_log_probs(&self, features: &Tensor2, target: &[usize]) -> Result<LatticeLogProbs> {
        let pass = Forward::run(self, features, target, false, &mut rand::rngs::mock::StepRng::new(0, 0))?;
        Ok(pass.log_probs)
    }
}

fn check_classes(classes: &[SymbolClass]) -> Result<()> {
    if classes.len() < 2 {
        return Err(Error::domain("vocabulary needs blank and at least one label"));
    }
    Ok(())
}

fn check_target(model: &TransducerModel, target: &[usize]) -> Result<()> {
    for (i, &y) in target.iter().enumerate() {
        if y == BLANK {
            return Err(Error::domain(format!("target position {i} is blank")));
        }
        if y >= model.vocab_size() {
            return Err(Error::Index {
                what: "vocabulary",
                index: y,
                len: model.vocab_size(),
            });
        }
    }
    Ok(())
}

struct LayerRecord {
    input: Tensor2,
    cache: LstmCache,
    mask: Option<Vec<f64>>,
}

struct Forward {
    encoder: Vec<LayerRecord>,
    prediction: Vec<LayerRecord>,
    enc_out: Tensor2,
    pred_out: Tensor2,
    /// `T(U+1) × J`, row `t(U+1)+u`.
    hidden: Tensor2,
    log_probs: LatticeLogProbs,
}

fn run_stack<R: Rng + ?Sized>(
    layers: &[LstmParams],
    input: Tensor2,
    dropout: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor2, Vec<LayerRecord>)> {
    let mut x = input;
    let mut records = Vec::with_capacity(layers.len());
    for layer in layers {
        let (out, _, cache) = lstm_forward(layer, &x, &LstmState::zeros(layer.hidden_dim))?;
        let (out, mask) = dropout_forward(&out, dropout, rng, training)?;
        records.push(LayerRecord { input: x, cache, mask });
        x = out;
    }
    Ok((x, records))
}

fn backprop_stack(
    layers: &[LstmParams],
    records: &[LayerRecord],
    grad_out: Tensor2,
    grads: &mut [LstmParams],
) -> Result<Tensor2> {
    let mut g = grad_out;
    for ((layer, rec), grad) in layers.iter().zip(records).zip(grads.iter_mut()).rev() {
        dropout_backward(&mut g, rec.mask.as_deref());
        let zero = LstmState::zeros(layer.hidden_dim);
        let lg = lstm_backward(layer, &rec.cache, &g, &zero)?;
        grad.weights.add_assign(&lg.params.weights)?;
        grad.bias.add_assign(&lg.params.bias)?;
        debug_assert_eq!(rec.input.cols(), layer.input_dim);
        g = lg.inputs;
    }
    Ok(g)
}

impl Forward {
    fn run<R: Rng + ?Sized>(
        model: &TransducerModel,
        features: &Tensor2,
        target: &[usize],
        training: bool,
        rng: &mut R,
    ) -> Result<Forward> {
        let cfg = &model.config;
        if features.cols() != cfg.input_dim {
            return Err(Error::shape(
                "features",
                format!("T x {}", cfg.input_dim),
                format!("{}x{}", features.rows(), features.cols()),
            ));
        }
        if features.rows() == 0 {
            return Err(Error::domain("features have zero frames"));
        }
        check_target(model, target)?;
        let p = &model.params;
        let rate = if training { cfg.dropout } else { 0.0 };

        let (enc_out, encoder) = run_stack(&p.encoder, features.clone(), rate, training, rng)?;
        let pred_in = model.prediction_inputs(target)?;
        let (pred_out, prediction) = run_stack(&p.prediction, pred_in, rate, training, rng)?;

        let frames = enc_out.rows();
        let width = target.len() + 1;
        let j = cfg.joint_dim;
        let v = model.vocab_size();
        let a = p.joint_enc.forward(&enc_out)?;
        let b = pred_out.matmul(&p.joint_pred)?;
        let mut hidden = Tensor2::zeros(frames * width, j);
        for t in 0..frames {
            let at = a.row(t);
            for u in 0..width {
                let bu = b.row(u);
                for ((h, x), y) in hidden.row_mut(t * width + u).iter_mut().zip(at).zip(bu) {
                    *h = (x + y).tanh();
                }
            }
        }
        let mut logits = Tensor2::zeros(frames * width, v);
        gemm(1.0, &hidden, false, &p.output.weight, false, 0.0, &mut logits)?;
        logits.add_row_broadcast(p.output.bias.data())?;
        for r in 0..logits.rows() {
            log_softmax_in_place(logits.row_mut(r))
                .map_err(|_| Error::Numerical(format!("non-finite joint logits at lattice node {r}")))?;
        }
        let log_probs = LatticeLogProbs::new(frames, target.len(), v, logits.into_vec())?;
        Ok(Forward {
            encoder,
            prediction,
            enc_out,
            pred_out,
            hidden,
            log_probs,
        })
    }
}

/// Output of `model_forward`.
#[derive(Debug, Clone)]
pub struct ForwardResult {
    pub loss: f64,
    pub grads: TransducerParams,
}

/// Transducer loss of one utterance and its gradient for every parameter.
pub fn model_forward<R: Rng + ?Sized>(
    model: &TransducerModel,
    features: &Tensor2,
    target: &[usize],
    training: bool,
    rng: &mut R,
) -> Result<ForwardResult> {
    let pass = Forward::run(model, features, target, training, rng)?;
    let loss = rnnt_loss(&pass.log_probs, target)?;
    let p = &model.params;
    let cfg = &model.config;
    let mut grads = p.zeros_like();

    // d(loss)/d(logits) = g - softmax · Σg per node.
    let v = model.vocab_size();
    let mut d_logits = Tensor2::from_vec(pass.hidden.rows(), v, loss.grad.data().to_vec())?;
    for (r, lp_row) in pass.log_probs.data().chunks(v).enumerate() {
        let row = d_logits.row_mut(r);
        let total: f64 = row.iter().sum();
        if total != 0.0 {
            for (d, lp) in row.iter_mut().zip(lp_row) {
                *d -= lp.exp() * total;
            }
        }
    }
    let mut d_hidden = Tensor2::zeros(pass.hidden.rows(), cfg.joint_dim);
    {
        let out_grad = &mut grads.output;
        gemm(1.0, &pass.hidden, true, &d_logits, false, 0.0, &mut out_grad.weight)?;
        out_grad.bias = Tensor2::row_vector(d_logits.sum_rows());
        gemm(1.0, &d_logits, false, &p.output.weight, true, 0.0, &mut d_hidden)?;
    }
    for (d, h) in d_hidden.data_mut().iter_mut().zip(pass.hidden.data()) {
        *d *= 1.0 - h * h;
    }
    let frames = pass.enc_out.rows();
    let width = target.len() + 1;
    let j = cfg.joint_dim;
    let mut d_a = Tensor2::zeros(frames, j);
    let mut d_b = Tensor2::zeros(width, j);
    for t in 0..frames {
        for u in 0..width {
            let row = d_hidden.row(t * width + u);
            for (x, y) in d_a.row_mut(t).iter_mut().zip(row) {
                *x += y;
            }
            for (x, y) in d_b.row_mut(u).iter_mut().zip(row) {
                *x += y;
            }
        }
    }
    let d_enc = p.joint_enc.backward(&pass.enc_out, &d_a, &mut grads.joint_enc)?;
    gemm(1.0, &pass.pred_out, true, &d_b, false, 0.0, &mut grads.joint_pred)?;
    let d_pred = d_b.matmul_nt(&p.joint_pred)?;

    backprop_stack(&p.encoder, &pass.encoder, d_enc, &mut grads.encoder)?;
    let d_emb_in = backprop_stack(&p.prediction, &pass.prediction, d_pred, &mut grads.prediction)?;
    let emb = cfg.embedding_dim;
    let ids = std::iter::once(BLANK).chain(target.iter().copied());
    for (u, id) in ids.enumerate() {
        let src = &d_emb_in.row(u)[..emb];
        for (g, s) in grads.embedding.row_mut(id).iter_mut().zip(src) {
            *g += s;
        }
    }

    Ok(ForwardResult {
        loss: loss.neg_log_likelihood,
        grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::SymbolKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn toy_classes() -> Vec<SymbolClass> {
        let c = |lang, kind| SymbolClass { lang, kind };
        vec![
            c(LanguageAttr::Neutral, SymbolKind::Blank),
            c(LanguageAttr::Mandarin, SymbolKind::LanguageId),
            c(LanguageAttr::English, SymbolKind::LanguageId),
            c(LanguageAttr::Mandarin, SymbolKind::MandarinChar),
            c(LanguageAttr::Mandarin, SymbolKind::MandarinChar),
            c(LanguageAttr::English, SymbolKind::EnglishWordpiece),
        ]
    }

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            input_dim: 3,
            encoder_layers: 2,
            encoder_dim: 4,
            prediction_layers: 1,
            prediction_dim: 3,
            joint_dim: 5,
            embedding_dim: 3,
            lid_dim: 2,
            dropout: 0.2,
        }
    }

    #[test]
    fn constraint_vectors_follow_language() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = TransducerModel::new(tiny_config(), toy_classes(), &mut rng).unwrap();
        let e = model.embed_with_language_constraint(5).unwrap();
        assert_eq!(&e[..3], model.params.embedding.row(5));
        assert_eq!(&e[3..], &[1.0, 1.0]);
        assert_eq!(&model.embed_with_language_constraint(2).unwrap()[3..], &[1.0, 1.0]);
        assert_eq!(&model.embed_with_language_constraint(1).unwrap()[3..], &[-1.0, -1.0]);
        assert_eq!(&model.embed_with_language_constraint(BLANK).unwrap()[3..], &[0.0, 0.0]);
        let m3 = model.embed_with_language_constraint(3).unwrap();
        let m4 = model.embed_with_language_constraint(4).unwrap();
        assert_eq!(m3[3..], m4[3..]);
        assert!(matches!(
            model.embed_with_language_constraint(6),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn zero_joint_gives_output_bias() {
        let mut model = TransducerModel::zeros(tiny_config(), toy_classes()).unwrap();
        model.params.output.bias = Tensor2::row_vector(vec![0.5, -1.0, 2.0, 0.0, 3.0, 1.5]);
        let z = model.joint_logits(&[0.3, -0.2, 0.9, 1.0], &[0.1, 0.1, -0.4]).unwrap();
        assert_eq!(z, vec![0.5, -1.0, 2.0, 0.0, 3.0, 1.5]);
        assert!(model.joint_logits(&[0.0; 3], &[0.0; 3]).is_err());
    }

    #[test]
    fn joint_matches_scalar_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = TransducerModel::new(tiny_config(), toy_classes(), &mut rng).unwrap();
        let h = [0.2, -0.7, 0.4, 0.05];
        let p = [-0.3, 0.8, 0.1];
        let joint = model.joint_logits(&h, &p).unwrap();
        let w1a = &model.params.joint_enc.weight;
        let w1b = &model.params.joint_pred;
        let mut hidden = [0.0; 5];
        for (k, hid) in hidden.iter_mut().enumerate() {
            let mut s = model.params.joint_enc.bias.get(0, k);
            for (i, hi) in h.iter().enumerate() {
                s += hi * w1a.get(i, k);
            }
            for (i, pi) in p.iter().enumerate() {
                s += pi * w1b.get(i, k);
            }
            *hid = s.tanh();
        }
        for (o, z) in joint.iter().enumerate() {
            let mut s = model.params.output.bias.get(0, o);
            for (k, hk) in hidden.iter().enumerate() {
                s += hk * model.params.output.weight.get(k, o);
            }
            assert!((s - z).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_target_is_sum_of_forced_blanks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = TransducerModel::new(tiny_config(), toy_classes(), &mut rng).unwrap();
        let x = Tensor2::uniform(4, 3, 1.0, &mut rng);
        let out = model_forward(&model, &x, &[], false, &mut rng).unwrap();
        let lp = model.lattice_log_probs(&x, &[]).unwrap();
        let expected: f64 = -(0..4).map(|t| lp.get(t, 0, BLANK)).sum::<f64>();
        assert!((out.loss - expected).abs() < 1e-12);
    }

    #[test]
    fn lattice_matches_incremental_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = TransducerModel::new(tiny_config(), toy_classes(), &mut rng).unwrap();
        let x = Tensor2::uniform(3, 3, 1.0, &mut rng);
        let target = [1, 3, 5];
        let lp = model.lattice_log_probs(&x, &target).unwrap();
        let enc = model.encode(&x).unwrap();
        let mut states = model.initial_prediction_states();
        let mut preds = Vec::new();
        for &y in std::iter::once(&BLANK).chain(target.iter()) {
            let (p, s) = model.prediction_step(y, &states).unwrap();
            preds.push(p);
            states = s;
        }
        for t in 0..3 {
            for (u, p) in preds.iter().enumerate() {
                let mut z = model.joint_logits(enc.row(t), p).unwrap();
                log_softmax_in_place(&mut z).unwrap();
                for k in 0..6 {
                    assert!((z[k] - lp.get(t, u, k)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = TransducerModel::new(tiny_config(), toy_classes(), &mut rng).unwrap();
        let x = Tensor2::zeros(3, 2);
        assert!(matches!(
            model_forward(&model, &x, &[1], false, &mut rng),
            Err(Error::Shape { .. })
        ));
        let x = Tensor2::zeros(3, 3);
        assert!(matches!(
            model_forward(&model, &x, &[0], false, &mut rng),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            model_forward(&model, &x, &[9], false, &mut rng),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn dropout_changes_training_loss_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = TransducerModel::new(tiny_config(), toy_classes(), &mut rng).unwrap();
        let x = Tensor2::uniform(5, 3, 1.0, &mut rng);
        let eval_a = model_forward(&model, &x, &[3, 5], false, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let eval_b = model_forward(&model, &x, &[3, 5], false, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(eval_a.loss, eval_b.loss);
        let train = model_forward(&model, &x, &[3, 5], true, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_ne!(train.loss, eval_a.loss);
    }
}
