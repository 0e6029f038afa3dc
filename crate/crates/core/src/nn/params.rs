use super::tensor::Tensor2;
use crate::error::Result;

/// A fixed, ordered collection of parameter tensors. Gradients use the same
/// type as the parameters they belong to.
pub trait ParameterSet: Clone {
    /// Tensors in a stable order, with names used by checkpoints.
    fn named_tensors(&self) -> Vec<(String, &Tensor2)>;

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2>;

    fn tensors(&self) -> Vec<&Tensor2> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    fn add_assign(&mut self, other: &Self) -> Result<()> {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    fn scale(&mut self, k: f64) {
        self.tensors_mut().into_iter().for_each(|t| t.scale(k));
    }

    fn round_to_f32(&mut self) {
        self.tensors_mut().into_iter().for_each(Tensor2::round_to_f32);
    }

    fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.data().iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}
