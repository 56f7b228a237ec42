//! End-to-end transmission of a dataset through codec, codebooks and
//! channel.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constellation::{Constellation, NoiseSpec};
use crate::error::{Error, Result};
use crate::exec::{chunks, Execution};
use crate::quantizer::{AffineCodec, Features, MultiCodebook};
use crate::rng::rng_for;
use crate::subchannel::{deserialize_from_symbols, serialize_to_symbols, CdfTable, SubchannelPlan};

use super::dataset::VectorDataset;

/// Source vectors per parallel work item.
const CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelPath {
    /// Complex-baseband AWGN with nearest-neighbor detection.
    Awgn,
    /// Direct sampling of the subchannel matrices.
    Dmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub path: ChannelPath,
    pub m_c: u32,
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubchannelReport {
    pub subchannel: usize,
    pub indices: usize,
    pub index_error_rate: f64,
    pub l_t_analytic: f64,
    pub l_t_empirical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionReport {
    /// Mean squared error per source component.
    pub mse: f64,
    pub psnr_db: f64,
    /// `None` on the DMC path, which has no symbols.
    pub symbol_error_rate: Option<f64>,
    pub index_error_rate: f64,
    /// Mean per feature of `E||z - ẑ_q||²` under the plan matrices.
    pub l_t_analytic: f64,
    /// Mean per feature of the realised `||z - ẑ_q||²`.
    pub l_t_empirical: f64,
    pub subchannels: Vec<SubchannelReport>,
    pub vectors: usize,
    pub symbols: usize,
    pub seed: u64,
    pub channel: ChannelSpec,
}

#[derive(Default)]
struct Tally {
    sq_err: f64,
    symbols: usize,
    symbol_errors: usize,
    sub_count: Vec<usize>,
    sub_errors: Vec<usize>,
    sub_lt_analytic: Vec<f64>,
    sub_lt_empirical: Vec<f64>,
    recon: Vec<f64>,
}

impl Tally {
    fn new(n_sub: usize) -> Self {
        Self {
            sub_count: vec![0; n_sub],
            sub_errors: vec![0; n_sub],
            sub_lt_analytic: vec![0.0; n_sub],
            sub_lt_empirical: vec![0.0; n_sub],
            ..Self::default()
        }
    }

    fn absorb(&mut self, o: Tally) {
        self.sq_err += o.sq_err;
        self.symbols += o.symbols;
        self.symbol_errors += o.symbol_errors;
        for i in 0..self.sub_count.len() {
            self.sub_count[i] += o.sub_count[i];
            self.sub_errors[i] += o.sub_errors[i];
            self.sub_lt_analytic[i] += o.sub_lt_analytic[i];
            self.sub_lt_empirical[i] += o.sub_lt_empirical[i];
        }
        self.recon.extend(o.recon);
    }
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check(ds: &VectorDataset, codec: &AffineCodec, mcb: &MultiCodebook, plan: &SubchannelPlan) -> Result<()> {
    if ds.dim() != codec.source_dim() {
        return Err(Error::DimensionMismatch {
            expected: codec.source_dim(),
            actual: ds.dim(),
            context: "dataset dimension vs codec",
        });
    }
    if mcb.dim() != codec.code_dim() {
        return Err(Error::DimensionMismatch {
            expected: codec.code_dim(),
            actual: mcb.dim(),
            context: "codeword dimension vs codec",
        });
    }
    if mcb.len() != plan.n_sub || mcb.order() != plan.m_b {
        return Err(Error::DimensionMismatch {
            expected: plan.n_sub,
            actual: mcb.len(),
            context: "codebooks vs plan",
        });
    }
    Ok(())
}

/// Runs `corrupt` on every source vector's index stream and gathers
/// reconstruction and transmission statistics.
#[allow(clippy::too_many_arguments)]
fn run<F>(
    ds: &VectorDataset,
    codec: &AffineCodec,
    mcb: &MultiCodebook,
    plan: &SubchannelPlan,
    seed: u64,
    channel: ChannelSpec,
    exec: Execution,
    corrupt: F,
) -> Result<(VectorDataset, TransmissionReport)>
where
    F: Fn(&[usize], &mut crate::rng::SimRng) -> Result<(Vec<usize>, usize, usize)> + Sync,
{
    check(ds, codec, mcb, plan)?;
    let per_block = codec.features_per_sample();
    let d = codec.code_dim();
    let n_sub = plan.n_sub;
    let work = chunks(ds.len(), CHUNK);
    let partial = exec.map_range(work.len(), |c| -> Result<Tally> {
        let (start, len) = work[c];
        let mut rng = rng_for(seed, &[0x7a, c as u64]);
        let mut t = Tally::new(n_sub);
        t.recon.reserve(len * ds.dim());
        let mut lat = vec![0.0; per_block * d];
        for b in start..start + len {
            let x = ds.values.get(b);
            let z = codec.encode(x);
            let y: Vec<usize> = (0..per_block)
                .map(|k| mcb.codebooks[k % n_sub].nearest(&z[k * d..(k + 1) * d]))
                .collect();
            let (y_hat, symbols, symbol_errors) = corrupt(&y, &mut rng)?;
            t.symbols += symbols;
            t.symbol_errors += symbol_errors;
            for k in 0..per_block {
                let i = k % n_sub;
                let cb = &mcb.codebooks[i];
                let zk = &z[k * d..(k + 1) * d];
                let m = cb.codeword(y_hat[k]);
                t.sub_count[i] += 1;
                t.sub_errors[i] += usize::from(y_hat[k] != y[k]);
                t.sub_lt_empirical[i] += sq(zk, m);
                t.sub_lt_analytic[i] += plan.matrices[i]
                    .row(y[k])
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p != 0.0)
                    .map(|(j, &p)| p * sq(zk, cb.codeword(j)))
                    .sum::<f64>();
                lat[k * d..(k + 1) * d].copy_from_slice(m);
            }
            let x_hat = codec.decode(&lat);
            t.sq_err += sq(x, &x_hat);
            t.recon.extend(x_hat);
        }
        Ok(t)
    });
    let mut total = Tally::new(n_sub);
    for p in partial {
        total.absorb(p?);
    }
    let features: usize = total.sub_count.iter().sum();
    let ratio = |a: f64, b: usize| if b == 0 { 0.0 } else { a / b as f64 };
    let mse = total.sq_err / (ds.len() * ds.dim()) as f64;
    let peak = ds.peak();
    let report = TransmissionReport {
        mse,
        psnr_db: 10.0 * (peak * peak / mse).log10(),
        symbol_error_rate: match channel.path {
            ChannelPath::Awgn => Some(ratio(total.symbol_errors as f64, total.symbols)),
            ChannelPath::Dmc => None,
        },
        index_error_rate: ratio(total.sub_errors.iter().sum::<usize>() as f64, features),
        l_t_analytic: ratio(total.sub_lt_analytic.iter().sum(), features),
        l_t_empirical: ratio(total.sub_lt_empirical.iter().sum(), features),
        subchannels: (0..n_sub)
            .map(|i| SubchannelReport {
                subchannel: i,
                indices: total.sub_count[i],
                index_error_rate: ratio(total.sub_errors[i] as f64, total.sub_count[i]),
                l_t_analytic: ratio(total.sub_lt_analytic[i], total.sub_count[i]),
                l_t_empirical: ratio(total.sub_lt_empirical[i], total.sub_count[i]),
            })
            .collect(),
        vectors: ds.len(),
        symbols: total.symbols,
        seed,
        channel,
    };
    let recon = VectorDataset::new(
        Features::new(ds.dim(), total.recon)?,
        Some(peak),
        format!("reconstruction of {}", ds.provenance),
    )?;
    Ok((recon, report))
}

/// Complex-baseband transmission: indices are packed into symbols,
/// modulated, corrupted by AWGN and detected by nearest neighbor.
pub fn transmit(
    ds: &VectorDataset,
    codec: &AffineCodec,
    mcb: &MultiCodebook,
    plan: &SubchannelPlan,
    constellation: &Constellation,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<(VectorDataset, TransmissionReport)> {
    transmit_with(ds, codec, mcb, plan, constellation, noise, seed, Execution::default())
}

#[allow(clippy::too_many_arguments)]
pub fn transmit_with(
    ds: &VectorDataset,
    codec: &AffineCodec,
    mcb: &MultiCodebook,
    plan: &SubchannelPlan,
    constellation: &Constellation,
    noise: &NoiseSpec,
    seed: u64,
    exec: Execution,
) -> Result<(VectorDataset, TransmissionReport)> {
    let m_c = constellation.bits();
    if plan.m_c != m_c {
        return Err(Error::DimensionMismatch {
            expected: m_c as usize,
            actual: plan.m_c as usize,
            context: "plan symbol order vs constellation",
        });
    }
    let m_b = plan.m_b;
    let sigma = noise.sigma_axis();
    let spec = ChannelSpec {
        path: ChannelPath::Awgn,
        m_c,
        snr_db: Some(noise.snr_db),
    };
    run(ds, codec, mcb, plan, seed, spec, exec, |y, rng| {
        let words = serialize_to_symbols(y, m_b, m_c)?;
        let tx = constellation.modulate_labels(&words)?;
        let rx: Vec<usize> = tx
            .iter()
            .map(|s| {
                let nr: f64 = rng.sample(StandardNormal);
                let ni: f64 = rng.sample(StandardNormal);
                let r = Complex64::new(s.re + sigma * nr, s.im + sigma * ni);
                constellation.labels()[constellation.detect(r)]
            })
            .collect();
        let errors = words.iter().zip(&rx).filter(|(a, b)| a != b).count();
        Ok((deserialize_from_symbols(&rx, m_b, m_c, y.len())?, words.len(), errors))
    })
}

/// Same pipeline with the index corruption drawn from the subchannel
/// matrices directly.
pub fn transmit_via_dmc(
    ds: &VectorDataset,
    codec: &AffineCodec,
    mcb: &MultiCodebook,
    plan: &SubchannelPlan,
    seed: u64,
) -> Result<(VectorDataset, TransmissionReport)> {
    transmit_via_dmc_with(ds, codec, mcb, plan, seed, Execution::default())
}

pub fn transmit_via_dmc_with(
    ds: &VectorDataset,
    codec: &AffineCodec,
    mcb: &MultiCodebook,
    plan: &SubchannelPlan,
    seed: u64,
    exec: Execution,
) -> Result<(VectorDataset, TransmissionReport)> {
    let tables: Vec<CdfTable> = plan.matrices.iter().map(CdfTable::new).collect();
    let n_sub = plan.n_sub;
    let spec = ChannelSpec {
        path: ChannelPath::Dmc,
        m_c: plan.m_c,
        snr_db: None,
    };
    run(ds, codec, mcb, plan, seed, spec, exec, |y, rng| {
        let y_hat = y
            .iter()
            .enumerate()
            .map(|(k, &v)| tables[k % n_sub].sample(v, rng))
            .collect();
        Ok((y_hat, 0, 0))
    })
}
