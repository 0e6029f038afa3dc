//! Single-layer LSTM with an explicit forward cache and a hand-written
//! backward pass (backpropagation through time).
//!
//! Gate layout: the combined weight matrix is `(input_dim + hidden_dim) × 4·hidden_dim`.
//! Rows `0..input_dim` multiply the input, the remaining rows multiply the
//! previous hidden state. Column blocks are, in order, the input gate, forget
//! gate, cell candidate and output gate, each `hidden_dim` wide. No peepholes.

use rand::Rng;

use super::tensor::{gemm, Tensor2};
use crate::error::{Error, Result};

const GATE_I: usize = 0;
const GATE_F: usize = 1;
const GATE_G: usize = 2;
const GATE_O: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub weights: Tensor2,
    pub bias: Tensor2,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmParams {
            input_dim,
            hidden_dim,
            weights: Tensor2::zeros(input_dim + hidden_dim, 4 * hidden_dim),
            bias: Tensor2::zeros(1, 4 * hidden_dim),
        }
    }

    /// Uniform(±1/√fan_in) weights and biases, forget-gate bias set to 1.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((input_dim + hidden_dim) as f64).sqrt();
        let weights = Tensor2::uniform(input_dim + hidden_dim, 4 * hidden_dim, bound, rng);
        let mut bias = Tensor2::uniform(1, 4 * hidden_dim, bound, rng);
        for j in 0..hidden_dim {
            bias.set(0, GATE_F * hidden_dim + j, 1.0);
        }
        LstmParams {
            input_dim,
            hidden_dim,
            weights,
            bias,
        }
    }

    /// Weight block for one gate (`0..4` = input, forget, candidate, output),
    /// shaped `(input_dim + hidden_dim) × hidden_dim`.
    pub fn gate_weights(&self, gate: usize) -> Tensor2 {
        self.weights
            .columns(gate * self.hidden_dim, (gate + 1) * self.hidden_dim)
    }

    fn validate(&self) -> Result<()> {
        self.weights
            .check_shape("lstm weights", self.input_dim + self.hidden_dim, 4 * self.hidden_dim)?;
        self.bias.check_shape("lstm bias", 1, 4 * self.hidden_dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden_dim],
            c: vec![0.0; hidden_dim],
        }
    }
}

/// Everything `lstm_backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    inputs: Tensor2,
    h_prev: Tensor2,
    c_prev: Tensor2,
    /// Post-activation gate values, `T × 4H`.
    gates: Tensor2,
    tanh_c: Tensor2,
}

impl LstmCache {
    pub fn steps(&self) -> usize {
        self.inputs.rows()
    }
}

#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub params: LstmParams,
    pub inputs: Tensor2,
    pub init_state: LstmState,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Runs the recurrence over the rows of `inputs`.
pub fn lstm_forward(
    params: &LstmParams,
    inputs: &Tensor2,
    init: &LstmState,
) -> Result<(Tensor2, LstmState, LstmCache)> {
    params.validate()?;
    let (steps, hidden) = (inputs.rows(), params.hidden_dim);
    if inputs.cols() != params.input_dim {
        return Err(Error::shape("lstm inputs", params.input_dim, inputs.cols()));
    }
    if init.h.len() != hidden {
        return Err(Error::shape("lstm initial h", hidden, init.h.len()));
    }
    if init.c.len() != hidden {
        return Err(Error::shape("lstm initial c", hidden, init.c.len()));
    }

    // Input contribution for all steps at once.
    let mut gates = Tensor2::zeros(steps, 4 * hidden);
    if steps > 0 {
        let w_x = params.weights.row_range(0, params.input_dim);
        gemm(1.0, inputs, false, &w_x, false, 0.0, &mut gates)?;
        gates.add_row_broadcast(params.bias.data())?;
    }
    let w_h = &params.weights.data()[params.input_dim * 4 * hidden..];

    let mut outputs = Tensor2::zeros(steps, hidden);
    let mut h_prev = Tensor2::zeros(steps, hidden);
    let mut c_prev = Tensor2::zeros(steps, hidden);
    let mut tanh_c = Tensor2::zeros(steps, hidden);
    let mut h = init.h.clone();
    let mut c = init.c.clone();

    for t in 0..steps {
        h_prev.row_mut(t).copy_from_slice(&h);
        c_prev.row_mut(t).copy_from_slice(&c);
        let pre = gates.row_mut(t);
        for (k, &hk) in h.iter().enumerate() {
            if hk != 0.0 {
                let w_row = &w_h[k * 4 * hidden..(k + 1) * 4 * hidden];
                for (p, w) in pre.iter_mut().zip(w_row) {
                    *p += hk * w;
                }
            }
        }
        for j in 0..hidden {
            let i = sigmoid(pre[GATE_I * hidden + j]);
            let f = sigmoid(pre[GATE_F * hidden + j]);
            let g = pre[GATE_G * hidden + j].tanh();
            let o = sigmoid(pre[GATE_O * hidden + j]);
            pre[GATE_I * hidden + j] = i;
            pre[GATE_F * hidden + j] = f;
            pre[GATE_G * hidden + j] = g;
            pre[GATE_O * hidden + j] = o;
            c[j] = f * c[j] + i * g;
            let tc = c[j].tanh();
            h[j] = o * tc;
            tanh_c.set(t, j, tc);
        }
        outputs.row_mut(t).copy_from_slice(&h);
    }

    let cache = LstmCache {
        inputs: inputs.clone(),
        h_prev,
        c_prev,
        gates,
        tanh_c,
    };
    Ok((outputs, LstmState { h, c }, cache))
}

/// Backpropagation through time for one `lstm_forward` call.
pub fn lstm_backward(
    params: &LstmParams,
    cache: &LstmCache,
    grad_outputs: &Tensor2,
    grad_final: &LstmState,
) -> Result<LstmGrads> {
    params.validate()?;
    let (steps, hidden) = (cache.steps(), params.hidden_dim);
    grad_outputs.check_shape("lstm grad_outputs", steps, hidden)?;
    if cache.gates.cols() != 4 * hidden || cache.inputs.cols() != params.input_dim {
        return Err(Error::shape(
            "lstm cache",
            format!("{}x{}", params.input_dim, 4 * hidden),
            format!("{}x{}", cache.inputs.cols(), cache.gates.cols()),
        ));
    }
    if grad_final.h.len() != hidden || grad_final.c.len() != hidden {
        return Err(Error::shape("lstm grad_final_state", hidden, grad_final.h.len()));
    }

    let w_h = &params.weights.data()[params.input_dim * 4 * hidden..];
    let mut d_pre = Tensor2::zeros(steps, 4 * hidden);
    let mut dh = grad_final.h.clone();
    let mut dc = grad_final.c.clone();

    for t in (0..steps).rev() {
        let gate = cache.gates.row(t);
        let tc = cache.tanh_c.row(t);
        let cp = cache.c_prev.row(t);
        let go = grad_outputs.row(t);
        let dp = d_pre.row_mut(t);
        for j in 0..hidden {
            let i = gate[GATE_I * hidden + j];
            let f = gate[GATE_F * hidden + j];
            let g = gate[GATE_G * hidden + j];
            let o = gate[GATE_O * hidden + j];
            let dh_j = dh[j] + go[j];
            let dc_j = dc[j] + dh_j * o * (1.0 - tc[j] * tc[j]);
            dp[GATE_I * hidden + j] = dc_j * g * i * (1.0 - i);
            dp[GATE_F * hidden + j] = dc_j * cp[j] * f * (1.0 - f);
            dp[GATE_G * hidden + j] = dc_j * i * (1.0 - g * g);
            dp[GATE_O * hidden + j] = dh_j * tc[j] * o * (1.0 - o);
            dc[j] = dc_j * f;
        }
        for (k, dh_k) in dh.iter_mut().enumerate() {
            let w_row = &w_h[k * 4 * hidden..(k + 1) * 4 * hidden];
            *dh_k = w_row.iter().zip(dp.iter()).map(|(w, d)| w * d).sum();
        }
    }

    let mut grads = LstmParams::zeros(params.input_dim, hidden);
    let mut d_inputs = Tensor2::zeros(steps, params.input_dim);
    if steps > 0 {
        let mut d_wx = Tensor2::zeros(params.input_dim, 4 * hidden);
        gemm(1.0, &cache.inputs, true, &d_pre, false, 0.0, &mut d_wx)?;
        let mut d_wh = Tensor2::zeros(hidden, 4 * hidden);
        gemm(1.0, &cache.h_prev, true, &d_pre, false, 0.0, &mut d_wh)?;
        let split = params.input_dim * 4 * hidden;
        grads.weights.data_mut()[..split].copy_from_slice(d_wx.data());
        grads.weights.data_mut()[split..].copy_from_slice(d_wh.data());
        grads.bias = Tensor2::row_vector(d_pre.sum_rows());
        let w_x = params.weights.row_range(0, params.input_dim);
        gemm(1.0, &d_pre, false, &w_x, true, 0.0, &mut d_inputs)?;
    }

    Ok(LstmGrads {
        params: grads,
        inputs: d_inputs,
        init_state: LstmState { h: dh, c: dc },
    })
}
