//! Transducer loss: exact log-space forward/backward over the
//! `T × (U+1)` alignment lattice.
//!
//! Node `(t, u)` means "`t` frames consumed before this step, `u` labels
//! emitted". Emitting the next label moves to `(t, u+1)`; emitting blank
//! moves to `(t+1, u)`. Every alignment ends with a blank out of
//! `(T-1, U)`.

use crate::error::{Error, Result};
use crate::nn::log_add;
use crate::vocab::BLANK;

/// Per-node log-distributions over the vocabulary, `T × (U+1) × V`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeLogProbs {
    frames: usize,
    target_len: usize,
    vocab: usize,
    data: Vec<f64>,
}

impl LatticeLogProbs {
    pub fn new(frames: usize, target_len: usize, vocab: usize, data: Vec<f64>) -> Result<Self> {
        let expected = frames * (target_len + 1) * vocab;
        if data.len() != expected {
            return Err(Error::shape(
                "lattice log-probs",
                format!("{frames}x{}x{vocab} = {expected}", target_len + 1),
                data.len(),
            ));
        }
        Ok(LatticeLogProbs {
            frames,
            target_len,
            vocab,
            data,
        })
    }

    pub fn zeros(frames: usize, target_len: usize, vocab: usize) -> Self {
        LatticeLogProbs {
            frames,
            target_len,
            vocab,
            data: vec![0.0; frames * (target_len + 1) * vocab],
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn target_len(&self) -> usize {
        self.target_len
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn offset(&self, t: usize, u: usize) -> usize {
        (t * (self.target_len + 1) + u) * self.vocab
    }

    pub fn node(&self, t: usize, u: usize) -> &[f64] {
        let o = self.offset(t, u);
        &self.data[o..o + self.vocab]
    }

    pub fn node_mut(&mut self, t: usize, u: usize) -> &mut [f64] {
        let o = self.offset(t, u);
        &mut self.data[o..o + self.vocab]
    }

    #[inline]
    pub fn get(&self, t: usize, u: usize, k: usize) -> f64 {
        self.data[self.offset(t, u) + k]
    }
}

/// Forward and backward log-probability grids plus the two arc weights out
/// of every node.
#[derive(Debug, Clone)]
pub struct AlignmentLattice {
    pub frames: usize,
    pub target_len: usize,
    /// `T × (U+1)`: log-probability of reaching node `(t, u)`.
    pub log_alpha: Vec<f64>,
    /// `T × (U+1)`: log-probability of finishing from node `(t, u)`.
    pub log_beta: Vec<f64>,
    /// `T × (U+1)`: blank arc out of each node.
    pub blank: Vec<f64>,
    /// `T × U`: label arc out of each node with `u < U`.
    pub label: Vec<f64>,
}

impl AlignmentLattice {
    #[inline]
    fn idx(&self, t: usize, u: usize) -> usize {
        t * (self.target_len + 1) + u
    }

    pub fn alpha(&self, t: usize, u: usize) -> f64 {
        self.log_alpha[self.idx(t, u)]
    }

    pub fn beta(&self, t: usize, u: usize) -> f64 {
        self.log_beta[self.idx(t, u)]
    }

    /// `log P(Y|X)` read off the forward grid.
    pub fn log_likelihood_forward(&self) -> f64 {
        let last = self.idx(self.frames - 1, self.target_len);
        self.log_alpha[last] + self.blank[last]
    }

    /// `log P(Y|X)` read off the backward grid.
    pub fn log_likelihood_backward(&self) -> f64 {
        self.log_beta[0]
    }

    fn beta_after_blank(&self, t: usize, u: usize) -> f64 {
        if t + 1 < self.frames {
            self.beta(t + 1, u)
        } else if u == self.target_len {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Posterior probability that an alignment takes the blank arc out of
    /// `(t, u)`.
    pub fn blank_occupancy(&self, t: usize, u: usize) -> f64 {
        let i = self.idx(t, u);
        (self.log_alpha[i] + self.blank[i] + self.beta_after_blank(t, u) - self.log_likelihood_backward()).exp()
    }

    /// Posterior probability that an alignment emits label `u+1` from
    /// `(t, u)`.
    pub fn label_occupancy(&self, t: usize, u: usize) -> f64 {
        let i = self.idx(t, u);
        let l = self.label[t * self.target_len + u];
        (self.log_alpha[i] + l + self.beta(t, u + 1) - self.log_likelihood_backward()).exp()
    }
}

/// Result of `rnnt_loss`.
#[derive(Debug, Clone)]
pub struct RnntLoss {
    pub neg_log_likelihood: f64,
    /// Same layout as the input; zero except on blank and next-label entries.
    pub grad: LatticeLogProbs,
    pub lattice: AlignmentLattice,
}

fn check_target(lp: &LatticeLogProbs, target: &[usize]) -> Result<()> {
    if lp.frames == 0 {
        return Err(Error::domain("transducer loss needs at least one frame"));
    }
    if target.len() != lp.target_len {
        return Err(Error::shape("target", lp.target_len, target.len()));
    }
    for (i, &y) in target.iter().enumerate() {
        if y == BLANK {
            return Err(Error::domain(format!("target position {i} is blank")));
        }
        if y >= lp.vocab {
            return Err(Error::Index {
                what: "vocabulary",
                index: y,
                len: lp.vocab,
            });
        }
    }
    Ok(())
}

/// Negative log-likelihood of `target` summed over all alignments, with its
/// gradient with respect to every node log-probability.
///
/// Each node's entries must form a normalized log-distribution.
pub fn rnnt_loss(lp: &LatticeLogProbs, target: &[usize]) -> Result<RnntLoss> {
    check_target(lp, target)?;
    for t in 0..lp.frames {
        for u in 0..=lp.target_len {
            let node = lp.node(t, u);
            if node.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("non-finite log-prob at node ({t}, {u})")));
            }
            let mass: f64 = node.iter().map(|v| v.exp()).sum();
            if (mass - 1.0).abs() > 1e-6 {
                return Err(Error::domain(format!(
                    "node ({t}, {u}) is not a distribution (mass {mass})"
                )));
            }
        }
    }
    lattice_loss(lp, target)
}

/// The same dynamic programme as `rnnt_loss` without the normalization
/// check: node entries are treated as arbitrary arc log-weights.
pub fn rnnt_lattice_loss(lp: &LatticeLogProbs, target: &[usize]) -> Result<RnntLoss> {
    check_target(lp, target)?;
    let finite = (0..lp.frames).all(|t| {
        (0..=lp.target_len)
            .all(|u| lp.get(t, u, BLANK).is_finite() && (u == lp.target_len || lp.get(t, u, target[u]).is_finite()))
    });
    if !finite {
        return Err(Error::domain("non-finite arc log-weight"));
    }
    lattice_loss(lp, target)
}

fn lattice_loss(lp: &LatticeLogProbs, target: &[usize]) -> Result<RnntLoss> {
    let (frames, tlen) = (lp.frames, lp.target_len);
    let width = tlen + 1;
    let mut blank = vec![0.0; frames * width];
    let mut label = vec![0.0; frames * tlen];
    for t in 0..frames {
        for u in 0..width {
            blank[t * width + u] = lp.get(t, u, BLANK);
            if u < tlen {
                label[t * tlen + u] = lp.get(t, u, target[u]);
            }
        }
    }

    let mut log_alpha = vec![f64::NEG_INFINITY; frames * width];
    log_alpha[0] = 0.0;
    for t in 0..frames {
        for u in 0..width {
            if t == 0 && u == 0 {
                continue;
            }
            let mut a = f64::NEG_INFINITY;
            if t > 0 {
                let p = (t - 1) * width + u;
                a = log_alpha[p] + blank[p];
            }
            if u > 0 {
                let p = t * width + u - 1;
                a = log_add(a, log_alpha[p] + label[t * tlen + u - 1]);
            }
            log_alpha[t * width + u] = a;
        }
    }

    let mut log_beta = vec![f64::NEG_INFINITY; frames * width];
    for t in (0..frames).rev() {
        for u in (0..width).rev() {
            let i = t * width + u;
            let mut b = if t + 1 < frames {
                log_beta[i + width] + blank[i]
            } else if u == tlen {
                blank[i]
            } else {
                f64::NEG_INFINITY
            };
            if u < tlen {
                b = log_add(b, log_beta[i + 1] + label[t * tlen + u]);
            }
            log_beta[i] = b;
        }
    }

    let lattice = AlignmentLattice {
        frames,
        target_len: tlen,
        log_alpha,
        log_beta,
        blank,
        label,
    };
    let log_likelihood = lattice.log_likelihood_backward();
    if !log_likelihood.is_finite() {
        return Err(Error::Numerical(format!(
            "transducer log-likelihood is {log_likelihood}"
        )));
    }

    let mut grad = LatticeLogProbs::zeros(frames, tlen, lp.vocab);
    for t in 0..frames {
        for u in 0..width {
            let o = grad.offset(t, u);
            grad.data[o + BLANK] = -lattice.blank_occupancy(t, u);
            if u < tlen {
                grad.data[o + target[u]] = -lattice.label_occupancy(t, u);
            }
        }
    }

    Ok(RnntLoss {
        neg_log_likelihood: -log_likelihood,
        grad,
        lattice,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::log_softmax;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_lattice(rng: &mut ChaCha8Rng, frames: usize, tlen: usize, vocab: usize) -> LatticeLogProbs {
        let mut data = Vec::new();
        for _ in 0..frames * (tlen + 1) {
            let logits: Vec<f64> = (0..vocab).map(|_| rng.gen_range(-2.0..2.0)).collect();
            data.extend(log_softmax(&logits).unwrap());
        }
        LatticeLogProbs::new(frames, tlen, vocab, data).unwrap()
    }

    #[test]
    fn single_frame_empty_target_is_forced_blank() {
        let lp = LatticeLogProbs::new(1, 0, 3, log_softmax(&[0.3, -1.0, 2.0]).unwrap()).unwrap();
        let loss = rnnt_loss(&lp, &[]).unwrap();
        assert!((loss.neg_log_likelihood + lp.get(0, 0, BLANK)).abs() < 1e-15);
        assert!((loss.grad.get(0, 0, BLANK) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn forward_and_backward_grids_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let (t, u, v) = (rng.gen_range(1..8), rng.gen_range(0..6), rng.gen_range(2..7));
            let lp = random_lattice(&mut rng, t, u, v);
            let target: Vec<usize> = (0..u).map(|_| rng.gen_range(1..v)).collect();
            let loss = rnnt_loss(&lp, &target).unwrap();
            let fwd = loss.lattice.log_likelihood_forward();
            let bwd = loss.lattice.log_likelihood_backward();
            assert!((fwd - bwd).abs() <= 1e-10, "{fwd} vs {bwd}");
        }
    }

    #[test]
    fn each_frame_is_left_by_exactly_one_blank() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let lp = random_lattice(&mut rng, 5, 3, 4);
        let loss = rnnt_loss(&lp, &[1, 3, 3]).unwrap();
        for t in 0..5 {
            let s: f64 = (0..=3).map(|u| loss.lattice.blank_occupancy(t, u)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        for u in 0..3 {
            let s: f64 = (0..5).map(|t| loss.lattice.label_occupancy(t, u)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn permuting_vocabulary_leaves_loss_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (frames, tlen, vocab) = (4, 3, 5);
        let lp = random_lattice(&mut rng, frames, tlen, vocab);
        let target = [2, 4, 2];
        // Fix blank, permute the rest.
        let perm = [0, 3, 1, 4, 2];
        let mut permuted = LatticeLogProbs::zeros(frames, tlen, vocab);
        for t in 0..frames {
            for u in 0..=tlen {
                for k in 0..vocab {
                    permuted.node_mut(t, u)[perm[k]] = lp.get(t, u, k);
                }
            }
        }
        let ptarget: Vec<usize> = target.iter().map(|&y| perm[y]).collect();
        let a = rnnt_loss(&lp, &target).unwrap().neg_log_likelihood;
        let b = rnnt_loss(&permuted, &ptarget).unwrap().neg_log_likelihood;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lp = random_lattice(&mut rng, 2, 1, 3);
        assert!(matches!(rnnt_loss(&lp, &[0]), Err(Error::Domain(_))));
        assert!(matches!(rnnt_loss(&lp, &[3]), Err(Error::Index { .. })));
        assert!(rnnt_loss(&lp, &[1, 2]).is_err());
        let mut bad = lp.clone();
        bad.node_mut(1, 0)[2] = f64::NAN;
        assert!(matches!(rnnt_loss(&bad, &[1]), Err(Error::Domain(_))));
        let mut unnormalized = lp.clone();
        unnormalized.node_mut(0, 0)[1] += 0.5;
        assert!(rnnt_loss(&unnormalized, &[1]).is_err());
        assert!(rnnt_lattice_loss(&unnormalized, &[1]).is_ok());
        let empty = LatticeLogProbs::zeros(0, 0, 3);
        assert!(rnnt_loss(&empty, &[]).is_err());
    }
}
