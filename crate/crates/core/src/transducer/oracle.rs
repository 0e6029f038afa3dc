//! Brute-force reference for the transducer loss.

use super::loss::LatticeLogProbs;
use crate::error::{Error, Result};
use crate::nn::log_sum_exp;
use crate::vocab::BLANK;

pub const ORACLE_MAX_FRAMES: usize = 6;
pub const ORACLE_MAX_LABELS: usize = 4;

/// Every valid alignment as a sequence of symbol ids (blank = 0), in
/// lexicographic order of the step pattern with labels before blanks.
pub fn enumerate_alignments(frames: usize, target: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if frames == 0 {
        return out;
    }
    let mut path = Vec::with_capacity(frames + target.len());
    walk(0, 0, frames, target, &mut path, &mut out);
    out
}

fn walk(t: usize, u: usize, frames: usize, target: &[usize], path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if u < target.len() {
        path.push(target[u]);
        walk(t, u + 1, frames, target, path, out);
        path.pop();
    }
    if t + 1 < frames || u == target.len() {
        path.push(BLANK);
        if t + 1 == frames {
            out.push(path.clone());
        } else {
            walk(t + 1, u, frames, target, path, out);
        }
        path.pop();
    }
}

/// Log-probability of one alignment, walking the lattice step by step.
pub fn alignment_log_prob(lp: &LatticeLogProbs, alignment: &[usize]) -> f64 {
    let (mut t, mut u) = (0, 0);
    let mut total = 0.0;
    for &k in alignment {
        total += lp.get(t, u, k);
        if k == BLANK {
            t += 1;
        } else {
            u += 1;
        }
    }
    total
}

/// Negative log-likelihood by explicit summation over every alignment.
pub fn enumerate_alignments_oracle(lp: &LatticeLogProbs, target: &[usize]) -> Result<f64> {
    if lp.frames() > ORACLE_MAX_FRAMES || target.len() > ORACLE_MAX_LABELS {
        return Err(Error::Size(format!(
            "enumeration limited to T <= {ORACLE_MAX_FRAMES}, U <= {ORACLE_MAX_LABELS}; got T = {}, U = {}",
            lp.frames(),
            target.len()
        )));
    }
    if lp.frames() == 0 {
        return Err(Error::domain("transducer loss needs at least one frame"));
    }
    if target.len() != lp.target_len() {
        return Err(Error::shape("target", lp.target_len(), target.len()));
    }
    if target.iter().any(|&y| y == BLANK || y >= lp.vocab()) {
        return Err(Error::domain("target contains blank or out-of-range id"));
    }
    let scores: Vec<f64> = enumerate_alignments(lp.frames(), target)
        .iter()
        .map(|a| alignment_log_prob(lp, a))
        .collect();
    Ok(-log_sum_exp(&scores))
}
