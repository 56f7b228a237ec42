//! Usage-driven re-anchoring of under-used codewords.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

use super::codebook::{sq_dist, Codebook, Features};

pub const DEFAULT_DECAY: f64 = 0.99;
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Per-codeword activation statistics of one codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageStats {
    /// EMA usage counters `N_k`.
    pub ema: Vec<f64>,
    /// Assignment counts `n_k` of the most recent batch.
    pub batch_counts: Vec<u64>,
    /// Assignment counts accumulated since the last [`UsageStats::reset_activations`].
    pub activations: Vec<u64>,
    pub decay: f64,
    pub epsilon: f64,
}

impl UsageStats {
    pub fn new(k: usize, decay: f64, epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) {
            return Err(invalid(format!("usage decay must be in [0, 1), got {decay}")));
        }
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(invalid(format!("epsilon must be non-negative, got {epsilon}")));
        }
        Ok(Self {
            ema: vec![0.0; k],
            batch_counts: vec![0; k],
            activations: vec![0; k],
            decay,
            epsilon,
        })
    }

    pub fn with_defaults(k: usize) -> Self {
        Self::new(k, DEFAULT_DECAY, DEFAULT_EPSILON).expect("defaults are valid")
    }

    pub fn len(&self) -> usize {
        self.ema.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ema.is_empty()
    }

    pub fn reset_activations(&mut self) {
        self.activations.iter_mut().for_each(|c| *c = 0);
    }

    /// Anchor weight `α_k = exp(-N_k K 10 / (1 - γ) - ε)`.
    pub fn anchor_weight(&self, k: usize) -> f64 {
        let kk = self.len() as f64;
        (-self.ema[k] * kk * 10.0 / (1.0 - self.decay) - self.epsilon).exp()
    }
}

/// Index counts of `indices` over an alphabet of size `k`.
pub fn count_assignments(indices: &[usize], k: usize) -> Vec<u64> {
    let mut counts = vec![0u64; k];
    for &i in indices {
        counts[i] += 1;
    }
    counts
}

/// Updates the usage counters from one batch and pulls every codeword
/// toward its nearest batch feature by its anchor weight. Returns the
/// anchor weights used.
pub fn cvq_update_with_counts(
    stats: &mut UsageStats,
    cb: &mut Codebook,
    batch: &Features,
    counts: &[u64],
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(invalid("CVQ update needs a non-empty batch"));
    }
    if batch.dim() != cb.dim() {
        return Err(Error::DimensionMismatch {
            expected: cb.dim(),
            actual: batch.dim(),
            context: "batch feature dimension",
        });
    }
    let k = cb.size();
    if stats.len() != k || counts.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: counts.len().min(stats.len()),
            context: "usage statistics length",
        });
    }
    let n_c = batch.len() as f64;
    let gamma = stats.decay;
    let mut alphas = Vec::with_capacity(k);
    for (j, &n) in counts.iter().enumerate() {
        stats.ema[j] = gamma * stats.ema[j] + (1.0 - gamma) * n as f64 / n_c;
        stats.batch_counts[j] = n;
        stats.activations[j] += n;
        let alpha = stats.anchor_weight(j);
        alphas.push(alpha);
        if alpha == 0.0 {
            continue;
        }
        let m = cb.codeword(j);
        let mut nearest = 0;
        let mut best = f64::INFINITY;
        for (t, z) in batch.iter().enumerate() {
            let d = sq_dist(z, m);
            if d < best {
                best = d;
                nearest = t;
            }
        }
        let target = batch.get(nearest).to_vec();
        for (w, z) in cb.codeword_mut(j).iter_mut().zip(target) {
            *w = (1.0 - alpha) * *w + alpha * z;
        }
    }
    Ok(alphas)
}

/// [`cvq_update_with_counts`] with nearest-codeword assignments of `batch`.
pub fn cvq_update(stats: &mut UsageStats, cb: &mut Codebook, batch: &Features) -> Result<Vec<f64>> {
    let idx = cb.quantize_indices(batch)?;
    let counts = count_assignments(&idx, cb.size());
    cvq_update_with_counts(stats, cb, batch, &counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Codebook, Features) {
        let cb = Codebook::from_rows(1, &[vec![0.0, 0.0], vec![10.0, 10.0]]).unwrap();
        let batch = Features::new(2, vec![0.1, 0.0, -0.1, 0.0, 0.0, 0.2, 1.0, 1.0]).unwrap();
        (cb, batch)
    }

    #[test]
    fn heavily_used_codeword_stays_put() {
        let (mut cb, batch) = setup();
        let mut stats = UsageStats::with_defaults(2);
        stats.ema[0] = 1.0;
        let before = cb.codeword(0).to_vec();
        let alphas = cvq_update(&mut stats, &mut cb, &batch).unwrap();
        assert!(alphas[0] < 1e-300);
        for (a, b) in cb.codeword(0).iter().zip(&before) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn unused_codeword_snaps_to_nearest_feature() {
        let (mut cb, batch) = setup();
        let mut stats = UsageStats::with_defaults(2);
        let alphas = cvq_update(&mut stats, &mut cb, &batch).unwrap();
        assert_eq!(stats.ema[1], 0.0);
        assert!((alphas[1] - (-DEFAULT_EPSILON).exp()).abs() < 1e-15);
        // nearest batch feature to (10, 10) is (1, 1)
        let a = alphas[1];
        let expected = (1.0 - a) * 10.0 + a * 1.0;
        assert!((cb.codeword(1)[0] - expected).abs() < 1e-12);
        assert!((cb.codeword(1)[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn direct_formula_value() {
        let mut stats = UsageStats::new(16, 0.99, 1e-5).unwrap();
        stats.ema[3] = 0.01;
        let expected = (-0.01f64 * 16.0 * 1000.0 - 1e-5).exp();
        assert!((stats.anchor_weight(3) / expected - 1.0).abs() < 1e-9);
        assert!(stats.anchor_weight(3) < 1e-60);
    }

    #[test]
    fn counter_update_rule() {
        let (mut cb, batch) = setup();
        let mut stats = UsageStats::new(2, 0.5, 0.0).unwrap();
        stats.ema = vec![0.2, 0.4];
        cvq_update_with_counts(&mut stats, &mut cb, &batch, &[3, 1]).unwrap();
        assert!((stats.ema[0] - (0.1 + 0.5 * 0.75)).abs() < 1e-15);
        assert!((stats.ema[1] - (0.2 + 0.5 * 0.25)).abs() < 1e-15);
        assert_eq!(stats.activations, vec![3, 1]);
    }

    #[test]
    fn empty_batch_rejected() {
        let (mut cb, _) = setup();
        let mut stats = UsageStats::with_defaults(2);
        assert!(cvq_update(&mut stats, &mut cb, &Features::empty(2)).is_err());
    }
}
