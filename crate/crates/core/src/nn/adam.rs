use serde::{Deserialize, Serialize};

use super::tensor::Tensor2;
use crate::error::{Error, Result};

pub const DEFAULT_LEARNING_RATE: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: DEFAULT_LEARNING_RATE,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators for ADAM, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub config: AdamConfig,
    pub first_moment: Vec<Tensor2>,
    pub second_moment: Vec<Tensor2>,
}

impl AdamState {
    /// Zeroed moments shaped like `params`.
    pub fn new(config: AdamConfig, params: &[&Tensor2]) -> Self {
        let zeros: Vec<Tensor2> = params.iter().map(|p| Tensor2::zeros(p.rows(), p.cols())).collect();
        AdamState {
            step: 0,
            config,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    pub fn round_to_f32(&mut self) {
        self.first_moment.iter_mut().for_each(Tensor2::round_to_f32);
        self.second_moment.iter_mut().for_each(Tensor2::round_to_f32);
    }
}

/// One bias-corrected ADAM update.
///
/// Entries whose gradient is exactly zero have their moments decayed but the
/// parameter itself is left untouched.
pub fn adam_step(state: &mut AdamState, params: &mut [&mut Tensor2], grads: &[&Tensor2]) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::shape(
            "adam parameter list",
            state.first_moment.len(),
            format!("{} params / {} grads", params.len(), grads.len()),
        ));
    }
    for (i, ((p, g), m)) in params.iter().zip(grads).zip(&state.first_moment).enumerate() {
        let (r, c) = m.shape();
        p.check_shape(&format!("adam param {i}"), r, c)?;
        g.check_shape(&format!("adam grad {i}"), r, c)?;
    }

    state.step += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);

    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        let pd = p.data_mut();
        for (((pv, &gv), mv), vv) in pd.iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            *mv = beta1 * *mv + (1.0 - beta1) * gv;
            *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
            if gv != 0.0 {
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
    }
    Ok(())
}
