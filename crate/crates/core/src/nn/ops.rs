use rand::Rng;

use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// Numerically stable `log(softmax(logits))`.
pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    let mut out = logits.to_vec();
    log_softmax_in_place(&mut out)?;
    Ok(out)
}

pub fn log_softmax_in_place(values: &mut [f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::domain("log_softmax of an empty vector"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("log_softmax input is not finite"));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    let log_sum = sum.ln();
    values.iter_mut().for_each(|v| *v = (*v - max) - log_sum);
    Ok(())
}

/// `log(Σ exp(xᵢ))` over a slice; `-∞` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Inverted dropout. Returns the input unchanged outside training or at
/// rate 0.
pub fn dropout_apply<R: Rng + ?Sized>(input: &Tensor2, rate: f64, rng: &mut R, training: bool) -> Result<Tensor2> {
    let (out, _) = dropout_forward(input, rate, rng, training)?;
    Ok(out)
}

/// Dropout that also returns the per-element scale (0 or `1/(1-rate)`) used,
/// so the backward pass can replay it. `None` means identity.
pub fn dropout_forward<R: Rng + ?Sized>(
    input: &Tensor2,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Tensor2, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::domain(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mut out = input.clone();
    for (v, m) in out.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    Ok((out, Some(mask)))
}

pub fn dropout_backward(grad: &mut Tensor2, mask: Option<&[f64]>) {
    if let Some(mask) = mask {
        for (g, m) in grad.data_mut().iter_mut().zip(mask) {
            *g *= m;
        }
    }
}

/// Affine layer `y = x·W + b` with `W` shaped `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor2,
    pub bias: Tensor2,
}

impl Linear {
    pub fn zeros(input_dim: usize, output_dim: usize) -> Self {
        Linear {
            weight: Tensor2::zeros(input_dim, output_dim),
            bias: Tensor2::zeros(1, output_dim),
        }
    }

    pub fn init<R: Rng + ?Sized>(input_dim: usize, output_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input_dim.max(1) as f64).sqrt();
        Linear {
            weight: Tensor2::uniform(input_dim, output_dim, bound, rng),
            bias: Tensor2::uniform(1, output_dim, bound, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Tensor2) -> Result<Tensor2> {
        let mut y = x.matmul(&self.weight)?;
        y.add_row_broadcast(self.bias.data())?;
        Ok(y)
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Tensor2, grad_y: &Tensor2, grad: &mut Linear) -> Result<Tensor2> {
        super::tensor::gemm(1.0, x, true, grad_y, false, 1.0, &mut grad.weight)?;
        for (b, g) in grad.bias.data_mut().iter_mut().zip(grad_y.sum_rows()) {
            *b += g;
        }
        grad_y.matmul_nt(&self.weight)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_softmax_symmetric_pair() {
        let out = log_softmax(&[0.0, 0.0]).unwrap();
        assert_eq!(out, vec![0.5f64.ln(), 0.5f64.ln()]);
    }

    #[test]
    fn log_softmax_large_shift_does_not_overflow() {
        let out = log_softmax(&[1000.0, 1000.0]).unwrap();
        assert_eq!(out, vec![0.5f64.ln(), 0.5f64.ln()]);
    }

    #[test]
    fn log_softmax_matches_direct_formula() {
        let x = [1.0f64, 2.0, 3.0];
        let z: f64 = x.iter().map(|v| v.exp()).sum();
        let out = log_softmax(&x).unwrap();
        for (o, v) in out.iter().zip(x) {
            assert!((o - (v.exp() / z).ln()).abs() < 1e-15);
        }
        let total: f64 = out.iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_softmax_rejects_empty_and_nonfinite() {
        assert!(matches!(log_softmax(&[]), Err(Error::Domain(_))));
        assert!(log_softmax(&[f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn log_add_matches_direct() {
        let got = log_add(0.3f64.ln(), 0.2f64.ln());
        assert!((got - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(log_add(f64::NEG_INFINITY, -1.0), -1.0);
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor2::uniform(3, 4, 1.0, &mut rng);
        assert_eq!(dropout_apply(&x, 0.0, &mut rng, true).unwrap(), x);
        assert_eq!(dropout_apply(&x, 0.5, &mut rng, false).unwrap(), x);
        assert!(dropout_apply(&x, 1.0, &mut rng, true).is_err());
        assert!(dropout_apply(&x, -0.1, &mut rng, true).is_err());
    }

    #[test]
    fn dropout_zero_fraction_concentrates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor2::filled(1000, 1000, 1.0);
        let y = dropout_apply(&x, 0.2, &mut rng, true).unwrap();
        let zeros = y.data().iter().filter(|&&v| v == 0.0).count();
        let frac = zeros as f64 / 1e6;
        assert!((frac - 0.2).abs() <= 0.002, "zeroed fraction {frac}");
        let survivor = y.data().iter().find(|&&v| v != 0.0).unwrap();
        assert!((survivor - 1.25).abs() < 1e-12);
    }
}
