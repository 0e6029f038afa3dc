use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{LanguageAttr, SymbolClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LambdaMode {
    #[default]
    Off,
    Fixed,
    Prob,
}

impl std::str::FromStr for LambdaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(LambdaMode::Off),
            "fixed" => Ok(LambdaMode::Fixed),
            "prob" => Ok(LambdaMode::Prob),
            other => Err(Error::domain(format!(
                "lambda mode must be off, fixed or prob, got {other:?}"
            ))),
        }
    }
}

pub const DEFAULT_LAMBDA: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeConfig {
    pub beam_size: usize,
    pub lambda_mode: LambdaMode,
    /// Boost used in fixed mode.
    pub lambda: f64,
    pub max_symbols_per_frame: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_size: 8,
            lambda_mode: LambdaMode::Off,
            lambda: DEFAULT_LAMBDA,
            max_symbols_per_frame: 5,
        }
    }
}

impl DecodeConfig {
    pub fn seame_paper() -> Self {
        DecodeConfig {
            beam_size: 35,
            ..DecodeConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::domain("beam_size must be at least 1"));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::domain(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// The boost in effect given the posterior recorded with the latest
    /// language-ID emission.
    pub fn effective_lambda(&self, id_posterior: Option<f64>) -> f64 {
        match self.lambda_mode {
            LambdaMode::Off => 0.0,
            LambdaMode::Fixed => self.lambda,
            LambdaMode::Prob => id_posterior.unwrap_or(0.0),
        }
    }
}

/// Multiplies the probability of every lexical symbol of `current` by
/// `1 + lambda` and renormalizes. Blank and language-ID symbols are never
/// boosted. Returns the input unchanged when there is nothing to boost.
pub fn reweight_posteriors(
    log_probs: &[f64],
    classes: &[SymbolClass],
    current: LanguageAttr,
    lambda: f64,
) -> Result<Vec<f64>> {
    if log_probs.len() != classes.len() {
        return Err(Error::shape("posteriors", classes.len(), log_probs.len()));
    }
    if log_probs.iter().any(|v| v.is_nan() || *v > 0.0) {
        return Err(Error::domain("posteriors are not log-probabilities"));
    }
    let mass: f64 = log_probs.iter().map(|v| v.exp()).sum();
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::domain(format!("posteriors sum to {mass}, not 1")));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::domain(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if lambda == 0.0 || current == LanguageAttr::Neutral {
        return Ok(log_probs.to_vec());
    }
    let favored = |c: &SymbolClass| c.is_lexical() && c.lang == current;
    let same: f64 = log_probs
        .iter()
        .zip(classes)
        .filter(|(_, c)| favored(c))
        .map(|(v, _)| v.exp())
        .sum();
    let boost = lambda.ln_1p();
    let log_z = (lambda * same).ln_1p();
    Ok(log_probs
        .iter()
        .zip(classes)
        .map(|(&v, c)| if favored(c) { v + boost - log_z } else { v - log_z })
        .collect())
}
