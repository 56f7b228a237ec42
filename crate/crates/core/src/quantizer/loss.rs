//! Transmission error, its codebook gradient, and the training losses.
//!
//! Losses are empirical expectations over the supplied feature set: each
//! feature vector carries weight `1/N` unless explicit occurrence weights are
//! given.

use crate::error::{Error, Result};
use crate::matrix::TransitionMatrix;
use crate::subchannel::SubchannelPlan;

use super::codebook::{sq_dist, Codebook, Features};
use super::MultiCodebook;

fn check_inputs(
    z: &Features,
    indices: &[usize],
    cb: &Codebook,
    h: &TransitionMatrix,
) -> Result<()> {
    if z.len() != indices.len() {
        return Err(Error::DimensionMismatch {
            expected: z.len(),
            actual: indices.len(),
            context: "index count vs feature count",
        });
    }
    if z.dim() != cb.dim() {
        return Err(Error::DimensionMismatch {
            expected: cb.dim(),
            actual: z.dim(),
            context: "feature dimension vs codebook",
        });
    }
    if h.dim() != cb.size() {
        return Err(Error::DimensionMismatch {
            expected: cb.size(),
            actual: h.dim(),
            context: "transition matrix vs codebook size",
        });
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= cb.size()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            size: cb.size(),
        });
    }
    Ok(())
}

/// Weighted sum `Σ_n w_n Σ_k h[y_n][k] ||z_n - m_k||²`.
fn weighted_transmission_error(
    z: &Features,
    indices: &[usize],
    cb: &Codebook,
    h: &TransitionMatrix,
    weight: impl Fn(usize) -> f64,
) -> f64 {
    z.iter()
        .zip(indices)
        .enumerate()
        .map(|(n, (v, &y))| {
            let inner: f64 = h
                .row(y)
                .iter()
                .enumerate()
                .filter(|(_, &p)| p != 0.0)
                .map(|(k, &p)| p * sq_dist(v, cb.codeword(k)))
                .sum();
            weight(n) * inner
        })
        .sum()
}

/// Expected squared distance between each feature and the codeword
/// selected after the index crosses channel `h`, averaged over features.
pub fn transmission_error_analytic(
    z: &Features,
    indices: &[usize],
    cb: &Codebook,
    h: &TransitionMatrix,
) -> Result<f64> {
    check_inputs(z, indices, cb, h)?;
    if z.is_empty() {
        return Ok(0.0);
    }
    let sum = weighted_transmission_error(z, indices, cb, h, |_| 1.0);
    Ok(sum / z.len() as f64)
}

/// Mean `||z_n - m_{y_n}||²`.
pub fn vanilla_codebook_loss(z: &Features, indices: &[usize], cb: &Codebook) -> Result<f64> {
    transmission_error_analytic(z, indices, cb, &TransitionMatrix::identity(cb.size()))
}

/// Gradient of the weighted transmission error with respect to every
/// codeword, accumulated per transmitted index class.
fn weighted_gradient(
    z: &Features,
    indices: &[usize],
    cb: &Codebook,
    h: &TransitionMatrix,
    weight: impl Fn(usize) -> f64,
) -> Vec<f64> {
    let (k, d) = (cb.size(), cb.dim());
    let mut mass = vec![0.0; k];
    let mut sums = vec![0.0; k * d];
    for (n, (v, &y)) in z.iter().zip(indices).enumerate() {
        let w = weight(n);
        mass[y] += w;
        for (s, x) in sums[y * d..(y + 1) * d].iter_mut().zip(v) {
            *s += w * x;
        }
    }
    let mut grad = vec![0.0; k * d];
    for y in (0..k).filter(|&y| mass[y] != 0.0) {
        for (j, &p) in h.row(y).iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let m = cb.codeword(j);
            let s = &sums[y * d..(y + 1) * d];
            for t in 0..d {
                grad[j * d + t] += 2.0 * p * (mass[y] * m[t] - s[t]);
            }
        }
    }
    grad
}

/// `∂L_t/∂m_i = 2 E[Σ_n P(ŷ_n = i | y_n) (m_i - z_n)]`, row-major `K × d`.
pub fn codebook_gradient(
    z: &Features,
    indices: &[usize],
    cb: &Codebook,
    h: &TransitionMatrix,
) -> Result<Vec<f64>> {
    check_inputs(z, indices, cb, h)?;
    if z.is_empty() {
        return Ok(vec![0.0; cb.as_slice().len()]);
    }
    let inv = 1.0 / z.len() as f64;
    Ok(weighted_gradient(z, indices, cb, h, |_| inv))
}

/// Empirical occurrence probabilities of a batch of `n` samples.
pub fn batch_occurrence(n: usize) -> Vec<f64> {
    if n == 0 {
        Vec::new()
    } else {
        vec![1.0 / n as f64; n]
    }
}

/// Per-subchannel inputs of the channel-aware loss.
#[derive(Debug, Clone, Copy)]
pub struct SubchannelBatch<'a> {
    pub features: &'a Features,
    pub indices: &'a [usize],
    pub occurrence: &'a [f64],
}

fn check_batches(
    batches: &[SubchannelBatch<'_>],
    mcb: &MultiCodebook,
    plan: &SubchannelPlan,
) -> Result<()> {
    if batches.len() != mcb.len() || plan.matrices.len() != mcb.len() {
        return Err(Error::DimensionMismatch {
            expected: mcb.len(),
            actual: batches.len().min(plan.matrices.len()),
            context: "subchannel count",
        });
    }
    for (i, b) in batches.iter().enumerate() {
        check_inputs(b.features, b.indices, &mcb.codebooks[i], &plan.matrices[i])?;
        if b.occurrence.len() != b.indices.len() {
            return Err(Error::DimensionMismatch {
                expected: b.indices.len(),
                actual: b.occurrence.len(),
                context: "occurrence weights",
            });
        }
    }
    Ok(())
}

/// `Σ_i Σ_k p_k Σ_j h_{y_k j} ||sg[z_k] - m_j||²` over all subchannels.
pub fn channel_aware_loss(
    batches: &[SubchannelBatch<'_>],
    mcb: &MultiCodebook,
    plan: &SubchannelPlan,
) -> Result<f64> {
    check_batches(batches, mcb, plan)?;
    Ok(batches
        .iter()
        .enumerate()
        .map(|(i, b)| {
            weighted_transmission_error(
                b.features,
                b.indices,
                &mcb.codebooks[i],
                &plan.matrices[i],
                |n| b.occurrence[n],
            )
        })
        .sum())
}

/// Gradient of [`channel_aware_loss`] for each codebook. Features are
/// constants, so only codewords receive gradient.
pub fn channel_aware_gradient(
    batches: &[SubchannelBatch<'_>],
    mcb: &MultiCodebook,
    plan: &SubchannelPlan,
) -> Result<Vec<Vec<f64>>> {
    check_batches(batches, mcb, plan)?;
    Ok(batches
        .iter()
        .enumerate()
        .map(|(i, b)| {
            weighted_gradient(
                b.features,
                b.indices,
                &mcb.codebooks[i],
                &plan.matrices[i],
                |n| b.occurrence[n],
            )
        })
        .collect())
}

/// Mean `||z - sg[q]||²`.
pub fn commitment_loss(z: &Features, quantized: &Features) -> Result<f64> {
    if z.len() != quantized.len() || z.dim() != quantized.dim() {
        return Err(Error::DimensionMismatch {
            expected: z.len(),
            actual: quantized.len(),
            context: "commitment loss operands",
        });
    }
    if z.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = z.iter().zip(quantized.iter()).map(|(a, b)| sq_dist(a, b)).sum();
    Ok(s / z.len() as f64)
}

/// Mean transmission error over all subchannels, each feature weighted
/// equally.
pub fn multi_transmission_error(
    features: &[Features],
    mcb: &MultiCodebook,
    plan: &SubchannelPlan,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, z) in features.iter().enumerate() {
        let cb = &mcb.codebooks[i];
        let idx = cb.quantize_indices(z)?;
        total += transmission_error_analytic(z, &idx, cb, &plan.matrices[i])? * z.len() as f64;
        count += z.len();
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}
