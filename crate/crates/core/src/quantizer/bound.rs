//! Reconstruction-error bound of an affine decoder behind a noisy index
//! channel: `E||x - x̂||² ≤ 2E||x - g(Z)||² + 2C₀²·L_t`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::{chunks, Execution};
use crate::rng::rng_for;
use crate::subchannel::{CdfTable, SubchannelPlan};

use super::codebook::{sq_dist, Features};
use super::codec::AffineCodec;
use super::MultiCodebook;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    /// Monte-Carlo estimate of `E||x - x̂||²`.
    pub lhs: f64,
    pub lhs_std_error: f64,
    pub rhs: f64,
    /// `E||x - g(Z)||²`.
    pub codec_error: f64,
    /// Analytic `L_t` per source vector (summed over its features).
    pub transmission_error: f64,
    pub lipschitz: f64,
    pub transmissions: usize,
}

impl BoundEstimate {
    /// `lhs - k·σ ≤ rhs`.
    pub fn holds(&self, k_sigma: f64) -> bool {
        self.lhs - k_sigma * self.lhs_std_error <= self.rhs
    }
}

pub fn reconstruction_bound(
    source: &Features,
    codec: &AffineCodec,
    mcb: &MultiCodebook,
    plan: &SubchannelPlan,
    transmissions: usize,
    seed: u64,
) -> Result<BoundEstimate> {
    reconstruction_bound_with(source, codec, mcb, plan, transmissions, seed, Execution::default())
}

/// Transmission `t` sends source vector `t mod |source|`; each chunk of
/// transmissions draws from its own derived stream.
pub fn reconstruction_bound_with(
    source: &Features,
    codec: &AffineCodec,
    mcb: &MultiCodebook,
    plan: &SubchannelPlan,
    transmissions: usize,
    seed: u64,
    exec: Execution,
) -> Result<BoundEstimate> {
    if source.is_empty() || transmissions == 0 {
        return Err(invalid("bound estimation needs source vectors and transmissions"));
    }
    if mcb.len() != plan.n_sub || plan.matrices.len() != plan.n_sub {
        return Err(Error::DimensionMismatch {
            expected: plan.n_sub,
            actual: mcb.len(),
            context: "codebooks vs subchannels",
        });
    }
    if mcb.dim() != codec.code_dim() {
        return Err(Error::DimensionMismatch {
            expected: codec.code_dim(),
            actual: mcb.dim(),
            context: "codeword dimension vs codec",
        });
    }
    let per_block = codec.features_per_sample();
    let n_sub = plan.n_sub;
    let d = codec.code_dim();
    let z = codec.encode_all(source)?;
    let sub_of = |k: usize| k % n_sub;
    let indices: Vec<usize> = z
        .iter()
        .enumerate()
        .map(|(t, v)| mcb.codebooks[sub_of(t % per_block)].nearest(v))
        .collect();

    let s = source.len();
    let mut codec_error = 0.0;
    let mut lt = 0.0;
    for b in 0..s {
        let lat = &z.as_slice()[b * per_block * d..(b + 1) * per_block * d];
        codec_error += sq_dist(source.get(b), &codec.decode(lat));
        for k in 0..per_block {
            let i = sub_of(k);
            let cb = &mcb.codebooks[i];
            let zk = z.get(b * per_block + k);
            lt += plan.matrices[i]
                .row(indices[b * per_block + k])
                .iter()
                .enumerate()
                .filter(|(_, &p)| p != 0.0)
                .map(|(j, &p)| p * sq_dist(zk, cb.codeword(j)))
                .sum::<f64>();
        }
    }
    codec_error /= s as f64;
    lt /= s as f64;
    let c0 = codec.lipschitz();

    let tables: Vec<CdfTable> = plan.matrices.iter().map(CdfTable::new).collect();
    let work = chunks(transmissions, CHUNK);
    let partial = exec.map_range(work.len(), |c| {
        let (start, len) = work[c];
        let mut rng = rng_for(seed, &[0xb0, c as u64]);
        let mut lat = vec![0.0; per_block * d];
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for t in start..start + len {
            let b = t % s;
            for k in 0..per_block {
                let i = sub_of(k);
                let y_hat = tables[i].sample(indices[b * per_block + k], &mut rng);
                lat[k * d..(k + 1) * d].copy_from_slice(mcb.codebooks[i].codeword(y_hat));
            }
            let e = sq_dist(source.get(b), &codec.decode(&lat));
            sum += e;
            sum_sq += e * e;
        }
        (sum, sum_sq)
    });
    let (sum, sum_sq) = partial
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    let n = transmissions as f64;
    let lhs = sum / n;
    let var = if transmissions > 1 {
        ((sum_sq - n * lhs * lhs) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(BoundEstimate {
        lhs,
        lhs_std_error: (var / n).sqrt(),
        rhs: 2.0 * codec_error + 2.0 * c0 * c0 * lt,
        codec_error,
        transmission_error: lt,
        lipschitz: c0,
        transmissions,
    })
}
