//! Run configuration: a preset, optionally overlaid by a TOML file and then
//! by `key.path=value` overrides.

use std::path::{Path, PathBuf};

use csrnnt::decoder::DecodeConfig;
use csrnnt::lm::{RescoreConfig, RnnLmConfig, DEFAULT_DISCOUNT, DEFAULT_ORDER};
use csrnnt::pipeline::DEFAULT_BPE_MERGES;
use csrnnt::synth::{SynthConfig, DEFAULT_SPEED_RATES};
use csrnnt::train::TrainConfig;
use csrnnt::transducer::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const PRESETS: [&str; 2] = ["desk", "seame-paper"];
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmSettings {
    pub order: usize,
    pub discount: f64,
    pub rnn: RnnLmConfig,
}

impl Default for LmSettings {
    fn default() -> Self {
        LmSettings {
            order: DEFAULT_ORDER,
            discount: DEFAULT_DISCOUNT,
            rnn: RnnLmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Corpus, features and lexicon written by `synth` and `bpe-train`.
    pub data: PathBuf,
    /// Training runs: checkpoints and logs.
    pub runs: PathBuf,
    /// Decoding, rescoring and scoring outputs.
    pub outputs: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data: "data".into(),
            runs: "runs".into(),
            outputs: "outputs".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    pub synth: SynthConfig,
    /// Speed-perturbation rates used by `synth --speed-perturb`.
    pub speed_rates: Vec<f64>,
    pub bpe_merges: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub rescore: RescoreConfig,
    pub lm: LmSettings,
    pub paths: Paths,
}

impl RunConfig {
    /// Small enough to train on a laptop CPU in minutes.
    pub fn desk() -> Self {
        RunConfig {
            preset: "desk".into(),
            synth: SynthConfig::default(),
            speed_rates: DEFAULT_SPEED_RATES.to_vec(),
            bpe_merges: DEFAULT_BPE_MERGES,
            model: ModelConfig::desk(),
            train: TrainConfig {
                epochs: 12,
                batch_size: 4,
                learning_rate: 0.005,
                ..TrainConfig::default()
            },
            decode: DecodeConfig::default(),
            rescore: RescoreConfig {
                nbest: 8,
                ..RescoreConfig::default()
            },
            lm: LmSettings::default(),
            paths: Paths::default(),
        }
    }

    /// Full-size network and decoder settings.
    pub fn seame_paper() -> Self {
        let mut c = RunConfig::desk();
        c.preset = "seame-paper".into();
        c.model = ModelConfig::seame_paper();
        c.synth.feature_dim = c.model.input_dim;
        c.train = TrainConfig::default();
        c.decode = DecodeConfig::seame_paper();
        c.rescore = RescoreConfig::default();
        c
    }

    pub fn preset(name: &str) -> Result<Self, CliError> {
        match name {
            "desk" => Ok(RunConfig::desk()),
            "seame-paper" => Ok(RunConfig::seame_paper()),
            other => Err(CliError::Usage(format!(
                "unknown preset {other:?}; choose one of {}",
                PRESETS.join(", ")
            ))),
        }
    }

    /// Resolves preset, file and overrides in that order. A file that names
    /// its own preset wins over `preset` unless `preset` was given explicitly.
    pub fn resolve(preset: Option<&str>, file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let file_tree = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
                Some(
                    text.parse::<toml::Table>()
                        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?,
                )
            }
            None => None,
        };
        let name = preset
            .map(str::to_string)
            .or_else(|| {
                file_tree
                    .as_ref()
                    .and_then(|t| t.get("preset"))
                    .and_then(|v| v.as_str())
                    .map(str::to_string)
            })
            .unwrap_or_else(|| "desk".to_string());
        let base = RunConfig::preset(&name)?;
        let mut tree = toml::Table::try_from(&base).expect("config serializes");
        if let Some(file_tree) = file_tree {
            merge(&mut tree, file_tree);
        }
        tree.insert("preset".into(), toml::Value::String(name));
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let config: RunConfig = toml::Value::Table(tree)
            .try_into()
            .map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: csrnnt::Error| CliError::Usage(format!("invalid configuration: {e}"));
        self.synth.validate().map_err(usage)?;
        self.model.validate().map_err(usage)?;
        self.train.validate().map_err(usage)?;
        self.decode.validate().map_err(usage)?;
        self.rescore.validate().map_err(usage)?;
        if self.model.input_dim != self.synth.feature_dim {
            return Err(CliError::Usage(format!(
                "model.input_dim ({}) must equal synth.feature_dim ({})",
                self.model.input_dim, self.synth.feature_dim
            )));
        }
        if self.speed_rates.iter().any(|&r| !(r > 0.5 && r < 2.0)) {
            return Err(CliError::Usage("speed_rates must lie in (0.5, 2)".into()));
        }
        if self.lm.order == 0 || !(0.0..1.0).contains(&self.lm.discount) {
            return Err(CliError::Usage(
                "lm.order must be >= 1 and lm.discount in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Writes the resolved configuration into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(CONFIG_FILE);
        std::fs::write(&path, self.to_toml()).map_err(|e| CliError::io(&path, e))
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, falling back to a
/// plain string. Only existing keys may be set.
fn apply_override(tree: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {spec:?} is not of the form key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut node = tree;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        let unknown = || CliError::Usage(format!("unknown configuration key {key:?}"));
        if last {
            let slot = node.get_mut(*part).ok_or_else(unknown)?;
            *slot = value;
            return Ok(());
        }
        node = match node.get_mut(*part) {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(unknown()),
        };
    }
    Err(CliError::Usage("empty override key".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_load_without_files() {
        assert_eq!(RunConfig::resolve(None, None, &[]).unwrap(), RunConfig::desk());
        let full = RunConfig::resolve(Some("seame-paper"), None, &[]).unwrap();
        assert_eq!(full.decode.beam_size, 35);
        assert_eq!(full.train.learning_rate, 0.001);
        assert_eq!(full.model.dropout, 0.2);
        assert_eq!(full.rescore.nbest, 35);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let c = RunConfig::resolve(
            None,
            None,
            &[
                "decode.lambda_mode=fixed".into(),
                "train.epochs=3".into(),
                "paths.data=/tmp/x".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.decode.lambda_mode, csrnnt::decoder::LambdaMode::Fixed);
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.paths.data, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::resolve(None, None, &["train.epoch=3".into()]).is_err());
        assert!(RunConfig::resolve(None, None, &["train.epochs=-1".into()]).is_err());
        assert!(RunConfig::resolve(None, None, &["synth.num_train=0".into()]).is_err());
        assert!(RunConfig::resolve(Some("huge"), None, &[]).is_err());
    }

    #[test]
    fn echoed_config_reloads_identically() {
        let dir = tempfile::tempdir().unwrap();
        let c = RunConfig::resolve(None, None, &["decode.beam_size=4".into()]).unwrap();
        c.echo(dir.path()).unwrap();
        let back = RunConfig::resolve(None, Some(&dir.path().join(CONFIG_FILE)), &[]).unwrap();
        assert_eq!(back, c);
    }
}
