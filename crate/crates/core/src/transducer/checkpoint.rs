use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::model::{ModelConfig, TransducerModel, TransducerParams};
use crate::container::{decode_container, encode_container, Container};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, ParameterSet, Tensor2};
use crate::vocab::SymbolClass;

pub const MAGIC: &[u8; 4] = b"CSRT";

/// Optimizer state and free-form trainer bookkeeping stored next to the
/// parameters so a run can resume exactly.
#[derive(Debug, Clone)]
pub struct TrainingSnapshot {
    pub adam: AdamState,
    pub state: Value,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: TransducerModel,
    pub vocab_hash: String,
    /// Resolved run configuration, kept for reference.
    pub config: Value,
    pub training: Option<TrainingSnapshot>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    classes: Vec<SymbolClass>,
    vocab_hash: String,
    config: Value,
    training: Option<TrainingHeader>,
}

#[derive(Serialize, Deserialize)]
struct TrainingHeader {
    adam_step: u64,
    adam: AdamConfig,
    state: Value,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            model: self.model.config.clone(),
            classes: self.model.classes.clone(),
            vocab_hash: self.vocab_hash.clone(),
            config: self.config.clone(),
            training: self.training.as_ref().map(|t| TrainingHeader {
                adam_step: t.adam.step,
                adam: t.adam.config,
                state: t.state.clone(),
            }),
        };
        let mut tensors = self.model.params.named_tensors();
        if let Some(t) = &self.training {
            let names: Vec<String> = tensors.iter().map(|(n, _)| n.clone()).collect();
            if t.adam.first_moment.len() != names.len() || t.adam.second_moment.len() != names.len() {
                return Err(Error::shape(
                    "optimizer moments",
                    names.len(),
                    t.adam.first_moment.len(),
                ));
            }
            for (n, m) in names.iter().zip(&t.adam.first_moment) {
                tensors.push((format!("adam.m.{n}"), m));
            }
            for (n, v) in names.iter().zip(&t.adam.second_moment) {
                tensors.push((format!("adam.v.{n}"), v));
            }
        }
        let header = serde_json::to_value(header).expect("checkpoint header serializes");
        encode_container(MAGIC, &header, &tensors)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = decode_container(MAGIC, bytes)?;
        let header: Header = serde_json::from_value(std::mem::take(&mut c.header))
            .map_err(|e| Error::format("checkpoint header", e.to_string()))?;
        header.model.validate()?;
        let mut params = TransducerParams::zeros(&header.model, header.classes.len());
        let names: Vec<(String, usize, usize)> = params
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.rows(), t.cols()))
            .collect();
        for ((name, r, cols), slot) in names.iter().zip(params.tensors_mut()) {
            *slot = c.take_shaped(name, *r, *cols)?;
        }
        let training = match header.training {
            None => None,
            Some(th) => {
                let first = take_all(&mut c, "adam.m.", &names)?;
                let second = take_all(&mut c, "adam.v.", &names)?;
                let refs: Vec<&Tensor2> = params.tensors();
                let mut adam = AdamState::new(th.adam, &refs);
                adam.step = th.adam_step;
                adam.first_moment = first;
                adam.second_moment = second;
                Some(TrainingSnapshot { adam, state: th.state })
            }
        };
        if let Some((name, _)) = c.tensors.first() {
            return Err(Error::format("checkpoint", format!("unexpected tensor `{name}`")));
        }
        Ok(Checkpoint {
            model: TransducerModel {
                config: header.model,
                classes: header.classes,
                params,
            },
            vocab_hash: header.vocab_hash,
            config: header.config,
            training,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Fails unless the checkpoint was trained with the vocabulary hashing
    /// to `vocab_hash`.
    pub fn check_vocab(&self, vocab_hash: &str) -> Result<()> {
        if self.vocab_hash != vocab_hash {
            return Err(Error::VocabMismatch {
                expected: self.vocab_hash.clone(),
                found: vocab_hash.to_string(),
            });
        }
        Ok(())
    }
}

fn take_all(c: &mut Container, prefix: &str, names: &[(String, usize, usize)]) -> Result<Vec<Tensor2>> {
    names
        .iter()
        .map(|(n, r, cols)| c.take_shaped(&format!("{prefix}{n}"), *r, *cols))
        .collect()
}

/// Header fields only, for tools that inspect a checkpoint without loading
/// the tensors.
pub fn describe(bytes: &[u8]) -> Result<Value> {
    let c = decode_container(MAGIC, bytes)?;
    Ok(json!({
        "model": c.header.get("model"),
        "vocab_hash": c.header.get("vocab_hash"),
        "tensors": c.tensors.len(),
    }))
}
