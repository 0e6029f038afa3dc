//! Minibatch Adam training of the transducer with plateau learning-rate
//! halving and best-model tracking.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamConfig, AdamState, ParameterSet, Tensor2, DEFAULT_LEARNING_RATE};
use crate::synth::derive_seed;
use crate::transducer::{model_forward, Checkpoint, TrainingSnapshot, TransducerModel, TransducerParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub learning_rate: f64,
    /// Factor applied to the learning rate after `patience` epochs without
    /// validation improvement.
    pub lr_decay: f64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 12,
            batch_size: 8,
            seed: 42,
            learning_rate: DEFAULT_LEARNING_RATE,
            lr_decay: 0.5,
            patience: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::domain("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::domain("learning_rate must be positive"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::domain("lr_decay must lie in (0, 1]"));
        }
        if self.patience == 0 {
            return Err(Error::domain("patience must be at least 1"));
        }
        Ok(())
    }
}

/// One utterance ready for the model.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub id: String,
    pub features: Tensor2,
    pub target: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-utterance loss with dropout active.
    pub train_loss: f64,
    /// Mean per-utterance loss without dropout.
    pub valid_loss: f64,
    pub learning_rate: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub learning_rate: f64,
    pub best_valid: Option<f64>,
    pub bad_epochs: usize,
    pub history: Vec<EpochStats>,
}

pub struct Trainer {
    pub model: TransducerModel,
    pub adam: AdamState,
    pub state: TrainState,
    pub config: TrainConfig,
    best: Option<TransducerParams>,
}

/// Mean loss without dropout.
pub fn evaluate_loss(model: &TransducerModel, data: &[TrainExample]) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let losses: Vec<Result<f64>> = data
        .par_iter()
        .map(|ex| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            Ok(model_forward(model, &ex.features, &ex.target, false, &mut rng)?.loss)
        })
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / data.len() as f64)
}

impl Trainer {
    pub fn new(mut model: TransducerModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        model.params.round_to_f32();
        let adam_config = AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        };
        let adam = AdamState::new(adam_config, &model.params.tensors());
        Ok(Trainer {
            model,
            adam,
            state: TrainState {
                epoch: 0,
                learning_rate: config.learning_rate,
                best_valid: None,
                bad_epochs: 0,
                history: Vec::new(),
            },
            config,
            best: None,
        })
    }

    /// Continues from a checkpoint written by `checkpoint`.
    pub fn resume(ck: Checkpoint, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let snap = ck
            .training
            .ok_or_else(|| Error::domain("checkpoint carries no training state to resume from"))?;
        let state: TrainState = serde_json::from_value(snap.state)
            .map_err(|e| Error::format("checkpoint training state", e.to_string()))?;
        Ok(Trainer {
            model: ck.model,
            adam: snap.adam,
            state,
            config,
            best: None,
        })
    }

    pub fn finished(&self) -> bool {
        self.state.epoch >= self.config.epochs
    }

    /// Parameters from the epoch with the lowest validation loss seen by
    /// this trainer instance.
    pub fn best_model(&self) -> Option<TransducerModel> {
        self.best.as_ref().map(|p| TransducerModel {
            config: self.model.config.clone(),
            classes: self.model.classes.clone(),
            params: p.clone(),
        })
    }

    pub fn run_epoch(&mut self, train: &[TrainExample], valid: &[TrainExample]) -> Result<EpochStats> {
        if train.is_empty() {
            return Err(Error::domain("training set is empty"));
        }
        let epoch = self.state.epoch;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[
            self.config.seed,
            epoch as u64,
        ])));
        self.adam.config.learning_rate = self.state.learning_rate;

        let mut total = 0.0;
        for (b, batch) in order.chunks(self.config.batch_size).enumerate() {
            // Utterances run in parallel; the reduction below keeps batch order.
            let outs: Vec<Result<_>> = batch
                .par_iter()
                .map(|&i| {
                    let ex = &train[i];
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(derive_seed(&[self.config.seed, epoch as u64, i as u64, 7]));
                    model_forward(&self.model, &ex.features, &ex.target, true, &mut rng).map_err(|e| match e {
                        Error::Numerical(m) => {
                            Error::Numerical(format!("epoch {} batch {b} utterance {}: {m}", epoch + 1, ex.id))
                        }
                        other => other,
                    })
                })
                .collect();
            let mut grads: Option<TransducerParams> = None;
            let mut batch_loss = 0.0;
            for out in outs {
                let out = out?;
                batch_loss += out.loss;
                match grads.as_mut() {
                    Some(g) => g.add_assign(&out.grads)?,
                    None => grads = Some(out.grads),
                }
            }
            let mut grads = grads.expect("chunks are nonempty");
            if !batch_loss.is_finite() || !grads.is_finite() {
                let ids: Vec<&str> = batch.iter().map(|&i| train[i].id.as_str()).collect();
                return Err(Error::Numerical(format!(
                    "non-finite loss or gradient in epoch {} batch {b} (utterances {})",
                    epoch + 1,
                    ids.join(", ")
                )));
            }
            grads.scale(1.0 / batch.len() as f64);
            adam_step(&mut self.adam, &mut self.model.params.tensors_mut(), &grads.tensors())?;
            total += batch_loss;
        }
        self.model.params.round_to_f32();
        self.adam.round_to_f32();

        let train_loss = total / train.len() as f64;
        // Without a validation set the training loss drives the schedule.
        let valid_loss = if valid.is_empty() {
            train_loss
        } else {
            evaluate_loss(&self.model, valid)?
        };
        let improved = self.state.best_valid.is_none_or(|b| valid_loss < b);
        if improved {
            self.state.best_valid = Some(valid_loss);
            self.state.bad_epochs = 0;
            self.best = Some(self.model.params.clone());
        } else {
            self.state.bad_epochs += 1;
        }
        let stats = EpochStats {
            epoch: epoch + 1,
            train_loss,
            valid_loss,
            learning_rate: self.state.learning_rate,
            improved,
        };
        if self.state.bad_epochs >= self.config.patience {
            self.state.learning_rate *= self.config.lr_decay;
            self.state.bad_epochs = 0;
        }
        self.state.epoch += 1;
        self.state.history.push(stats.clone());
        Ok(stats)
    }

    /// Current parameters plus everything needed to resume.
    pub fn checkpoint(&self, vocab_hash: &str, config: Value) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            vocab_hash: vocab_hash.to_string(),
            config,
            training: Some(TrainingSnapshot {
                adam: self.adam.clone(),
                state: serde_json::to_value(&self.state).expect("train state serializes"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transducer::ModelConfig;
    use crate::vocab::{LanguageAttr, SymbolClass, SymbolKind};

    fn setup() -> (TransducerModel, Vec<TrainExample>) {
        let c = |lang, kind| SymbolClass { lang, kind };
        let classes = vec![
            c(LanguageAttr::Neutral, SymbolKind::Blank),
            c(LanguageAttr::Mandarin, SymbolKind::LanguageId),
            c(LanguageAttr::English, SymbolKind::LanguageId),
            c(LanguageAttr::Mandarin, SymbolKind::MandarinChar),
        ];
        let cfg = ModelConfig {
            input_dim: 2,
            encoder_layers: 1,
            encoder_dim: 6,
            prediction_layers: 1,
            prediction_dim: 6,
            joint_dim: 6,
            embedding_dim: 4,
            lid_dim: 2,
            dropout: 0.2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = TransducerModel::new(cfg, classes, &mut rng).unwrap();
        let data = (0..6)
            .map(|i| TrainExample {
                id: format!("u{i}"),
                features: Tensor2::uniform(5, 2, 1.0, &mut rng),
                target: vec![1, 3, 2][..1 + i % 3].to_vec(),
            })
            .collect();
        (model, data)
    }

    #[test]
    fn resume_reproduces_uninterrupted_run() {
        let (model, data) = setup();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 4,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let mut straight = Trainer::new(model.clone(), cfg.clone()).unwrap();
        let full: Vec<EpochStats> = (0..3).map(|_| straight.run_epoch(&data, &data[..2]).unwrap()).collect();

        let mut first = Trainer::new(model, cfg.clone()).unwrap();
        first.run_epoch(&data, &data[..2]).unwrap();
        first.run_epoch(&data, &data[..2]).unwrap();
        let bytes = first.checkpoint("h", Value::Null).to_bytes().unwrap();
        let mut resumed = Trainer::resume(Checkpoint::from_bytes(&bytes).unwrap(), cfg).unwrap();
        let third = resumed.run_epoch(&data, &data[..2]).unwrap();
        assert_eq!(third, full[2]);
        assert_eq!(resumed.model, straight.model);
        assert!(resumed.finished());
    }

    #[test]
    fn plateau_halves_learning_rate() {
        let (model, data) = setup();
        let cfg = TrainConfig {
            epochs: 4,
            learning_rate: 1e-12,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(model, cfg).unwrap();
        t.run_epoch(&data, &data).unwrap();
        t.state.best_valid = Some(f64::NEG_INFINITY);
        let s = t.run_epoch(&data, &data).unwrap();
        assert!(!s.improved);
        assert_eq!(t.state.learning_rate, 0.5e-12);
    }

    #[test]
    fn validates_config() {
        let (model, _) = setup();
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(Trainer::new(model, cfg).is_err());
    }
}
