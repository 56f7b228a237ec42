//! Joint training of the affine codec and the per-subchannel codebooks.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constellation::{Constellation, NoiseSpec};
use crate::error::{invalid, Error, Result};
use crate::matrix::TransitionMatrix;
use crate::rng::rng_for;
use crate::subchannel::{
    build_plan, serialize_to_symbols, subsequence_count, CdfTable, EmaPrior,
    SubchannelPlan, SymbolPrior, DEFAULT_PRIOR_DECAY, MAX_INDEX_BITS,
};

use super::codebook::{sq_dist, Features};
use super::codec::AffineCodec;
use super::cvq::{count_assignments, cvq_update_with_counts};
use super::diagnostics::entropy_bits;
use super::kmeans::kmeans_pp;
use super::loss::{
    batch_occurrence, channel_aware_gradient, channel_aware_loss, commitment_loss,
    multi_transmission_error, SubchannelBatch,
};
use super::MultiCodebook;

/// Source of the symbol prior fed to the subchannel plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorEstimate {
    Uniform,
    /// Per-batch EMA of the transmitted symbol distribution.
    Ema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub m_b: u32,
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// SNR drawn uniformly from `[lo, hi]` dB for every batch.
    pub snr_range_db: [f64; 2],
    /// SNR of the channel the per-epoch `L_t` is evaluated on; the middle of
    /// the range when unset.
    pub eval_snr_db: Option<f64>,
    pub prior: PriorEstimate,
    pub prior_decay: f64,
    /// Train codebooks on the subchannel matrices (`true`) or on identity
    /// matrices (channel-unaware baseline).
    pub channel_aware: bool,
    pub gamma: f64,
    pub epsilon: f64,
    pub train_codec: bool,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            m_b: 4,
            beta: 0.25,
            learning_rate: 1e-3,
            epochs: 20,
            batch_size: 128,
            seed: 0,
            snr_range_db: [0.0, 18.0],
            eval_snr_db: None,
            prior: PriorEstimate::Uniform,
            prior_decay: DEFAULT_PRIOR_DECAY,
            channel_aware: true,
            gamma: super::cvq::DEFAULT_DECAY,
            epsilon: super::cvq::DEFAULT_EPSILON,
            train_codec: true,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_INDEX_BITS).contains(&self.m_b) {
            return Err(invalid(format!("m_b must be in 1..={MAX_INDEX_BITS}")));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(invalid("beta must be non-negative"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(invalid("learning rate must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid("epochs and batch size must be positive"));
        }
        let [lo, hi] = self.snr_range_db;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(invalid(format!("invalid SNR range [{lo}, {hi}]")));
        }
        if !(0.0..1.0).contains(&self.gamma) || !(0.0..1.0).contains(&self.prior_decay) {
            return Err(invalid("decay factors must be in [0, 1)"));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(invalid("epsilon must be non-negative"));
        }
        Ok(())
    }

    fn eval_snr(&self) -> f64 {
        self.eval_snr_db
            .unwrap_or(0.5 * (self.snr_range_db[0] + self.snr_range_db[1]))
    }
}

/// Channel the codebooks are trained against.
#[derive(Debug, Clone)]
pub enum TrainingChannel {
    Noiseless { m_c: u32 },
    /// A precomputed plan used for every batch.
    Fixed(SubchannelPlan),
    /// AWGN on a square QAM constellation with per-batch SNR sampling.
    Awgn(Constellation),
}

impl TrainingChannel {
    pub fn symbol_bits(&self) -> u32 {
        match self {
            Self::Noiseless { m_c } => *m_c,
            Self::Fixed(p) => p.m_c,
            Self::Awgn(c) => c.bits(),
        }
    }
}

/// Label-ordered symbol matrices and uniform-prior plans, memoized on a
/// 0.5 dB grid.
struct ChannelCache<'a> {
    channel: &'a TrainingChannel,
    m_b: u32,
    symbols: BTreeMap<i64, TransitionMatrix>,
    plans: BTreeMap<i64, SubchannelPlan>,
    ema: Option<EmaPrior>,
}

fn snr_key(snr_db: f64) -> i64 {
    (snr_db * 2.0).round() as i64
}

impl<'a> ChannelCache<'a> {
    fn new(channel: &'a TrainingChannel, cfg: &TrainConfig) -> Result<Self> {
        let m_c = channel.symbol_bits();
        let ema = match (cfg.prior, channel) {
            (PriorEstimate::Ema, TrainingChannel::Awgn(_)) => Some(EmaPrior::new(m_c, cfg.prior_decay)?),
            _ => None,
        };
        if let TrainingChannel::Fixed(p) = channel {
            if p.m_b != cfg.m_b {
                return Err(Error::DimensionMismatch {
                    expected: cfg.m_b as usize,
                    actual: p.m_b as usize,
                    context: "fixed plan index order",
                });
            }
        }
        Ok(Self {
            channel,
            m_b: cfg.m_b,
            symbols: BTreeMap::new(),
            plans: BTreeMap::new(),
            ema,
        })
    }

    fn symbol_matrix(&mut self, c: &Constellation, key: i64) -> Result<&TransitionMatrix> {
        if let std::collections::btree_map::Entry::Vacant(e) = self.symbols.entry(key) {
            let noise = NoiseSpec::new(key as f64 / 2.0)?;
            e.insert(c.label_channel(&c.transition_matrix_analytic(&noise)));
        }
        Ok(&self.symbols[&key])
    }

    fn uniform_plan(&mut self, c: &Constellation, key: i64) -> Result<SubchannelPlan> {
        if let Some(p) = self.plans.get(&key) {
            return Ok(p.clone());
        }
        let h = self.symbol_matrix(c, key)?.clone();
        let plan = build_plan(self.m_b, c.bits(), &h, &SymbolPrior::uniform(c.bits()))?;
        self.plans.insert(key, plan.clone());
        Ok(plan)
    }

    /// Plan for a batch transmitted at `snr_db`.
    fn plan(&mut self, snr_db: f64) -> Result<SubchannelPlan> {
        match self.channel {
            TrainingChannel::Noiseless { m_c } => Ok(SubchannelPlan::noiseless(self.m_b, *m_c)),
            TrainingChannel::Fixed(p) => Ok(p.clone()),
            TrainingChannel::Awgn(c) => {
                let key = snr_key(snr_db);
                match &self.ema {
                    None => self.uniform_plan(c, key),
                    Some(ema) => {
                        let prior = ema.prior();
                        let m_b = self.m_b;
                        let h = self.symbol_matrix(c, key)?;
                        build_plan(m_b, c.bits(), h, &prior)
                    }
                }
            }
        }
    }

    /// Plan used for the per-epoch evaluation of `L_t`.
    fn eval_plan(&mut self, snr_db: f64) -> Result<SubchannelPlan> {
        match self.channel {
            TrainingChannel::Awgn(c) => self.uniform_plan(c, snr_key(snr_db)),
            _ => self.plan(snr_db),
        }
    }

    fn observe(&mut self, block_indices: &[Vec<usize>], m_c: u32) -> Result<()> {
        let Some(ema) = self.ema.as_mut() else {
            return Ok(());
        };
        let mut counts = vec![0u64; 1 << m_c];
        for y in block_indices {
            for s in serialize_to_symbols(y, self.m_b, m_c)? {
                counts[s] += 1;
            }
        }
        ema.update(&counts);
        Ok(())
    }
}

/// Splits a stream of blocks (`per_block` features each) into `n_sub`
/// subsequences; feature `k` of every block goes to subsequence `k % n_sub`.
pub fn split_features(z: &Features, per_block: usize, n_sub: usize) -> Vec<Features> {
    let mut out: Vec<Features> = (0..n_sub)
        .map(|_| Features::with_capacity(z.dim(), z.len().div_ceil(n_sub)))
        .collect();
    for (t, v) in z.iter().enumerate() {
        out[(t % per_block) % n_sub].push(v);
    }
    out
}

/// Inverse of [`split_features`].
fn merge_features(parts: &[Features], per_block: usize, total: usize) -> Features {
    let n_sub = parts.len();
    let dim = parts[0].dim();
    let mut cursor = vec![0usize; n_sub];
    let mut out = Features::with_capacity(dim, total);
    for t in 0..total {
        let i = (t % per_block) % n_sub;
        out.push(parts[i].get(cursor[i]));
        cursor[i] += 1;
    }
    out
}

fn merge_indices_blocks(parts: &[Vec<usize>], per_block: usize, total: usize) -> Vec<Vec<usize>> {
    let n_sub = parts.len();
    let mut cursor = vec![0usize; n_sub];
    let mut blocks = vec![Vec::with_capacity(per_block); total / per_block];
    for t in 0..total {
        let i = (t % per_block) % n_sub;
        blocks[t / per_block].push(parts[i][cursor[i]]);
        cursor[i] += 1;
    }
    blocks
}

/// Loss values of one training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: usize,
    pub batch: usize,
    pub snr_db: f64,
    pub l_r: f64,
    pub l_m: f64,
    pub l_ca: f64,
}

/// Epoch means of the step losses, the analytic transmission error on the
/// evaluation channel, and the activation entropy of every codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_r: f64,
    pub l_m: f64,
    pub l_ca: f64,
    pub l_t: f64,
    pub entropy: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub steps: Vec<StepLog>,
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let n = self.epochs.first().map_or(0, |e| e.entropy.len());
        let mut s = String::from("epoch,L_r,L_m,L_ca,L_t");
        for i in 0..n {
            s.push_str(&format!(",entropy_{i}"));
        }
        s.push('\n');
        for e in &self.epochs {
            s.push_str(&format!("{},{},{},{},{}", e.epoch, e.l_r, e.l_m, e.l_ca, e.l_t));
            for h in &e.entropy {
                s.push_str(&format!(",{h}"));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub codebooks: MultiCodebook,
    pub codec: AffineCodec,
    pub log: TrainingLog,
    /// Plan the per-epoch `L_t` was evaluated on.
    pub eval_plan: SubchannelPlan,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions<'a> {
    /// Starting codebooks; k-means++ on the first batch when absent.
    pub init: Option<MultiCodebook>,
    /// Held-out source vectors for the per-epoch `L_t`; the training set
    /// when absent.
    pub eval: Option<&'a Features>,
}

/// Trains codebooks (and optionally the codec) on `source`.
pub fn train(
    source: &Features,
    codec: &AffineCodec,
    channel: &TrainingChannel,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(source, codec, channel, cfg, TrainOptions::default())
}

fn ensure_finite(v: f64, epoch: usize, batch: usize, what: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Divergence { epoch, batch, what })
    }
}

pub fn train_with(
    source: &Features,
    codec: &AffineCodec,
    channel: &TrainingChannel,
    cfg: &TrainConfig,
    opts: TrainOptions<'_>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(invalid("training set is empty"));
    }
    if source.dim() != codec.source_dim() {
        return Err(Error::DimensionMismatch {
            expected: codec.source_dim(),
            actual: source.dim(),
            context: "source dimension vs codec",
        });
    }
    let m_c = channel.symbol_bits();
    let n_sub = subsequence_count(cfg.m_b, m_c);
    let per_block = codec.features_per_sample();
    let d = codec.code_dim();
    if per_block < n_sub {
        return Err(invalid(format!(
            "each source vector emits {per_block} features but the plan has {n_sub} subchannels"
        )));
    }
    let mut codec = codec.clone();
    let mut cache = ChannelCache::new(channel, cfg)?;
    let unaware = SubchannelPlan::noiseless(cfg.m_b, m_c);
    let eval_plan = cache.eval_plan(cfg.eval_snr())?;
    let eval_source = opts.eval.unwrap_or(source);

    let n = source.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut mcb = opts.init;
    if let Some(m) = &mcb {
        if m.len() != n_sub || m.order() != cfg.m_b || m.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: n_sub,
                actual: m.len(),
                context: "initial multi-codebook vs plan",
            });
        }
    }
    let mut log = TrainingLog::default();

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng_for(cfg.seed, &[1, epoch as u64]));
        }
        if let Some(m) = mcb.as_mut() {
            m.stats.iter_mut().for_each(|s| s.reset_activations());
        }
        let mut sums = [0.0f64; 3];
        let mut batches = 0usize;
        for (batch, rows) in order.chunks(cfg.batch_size).enumerate() {
            let mut x = Features::with_capacity(source.dim(), rows.len());
            for &r in rows {
                x.push(source.get(r));
            }
            let z = codec.encode_all(&x)?;
            let z_sub = split_features(&z, per_block, n_sub);

            if mcb.is_none() {
                let cbs = z_sub
                    .iter()
                    .enumerate()
                    .map(|(i, zi)| kmeans_pp(zi, cfg.m_b, &mut rng_for(cfg.seed, &[4, i as u64])))
                    .collect::<Result<Vec<_>>>()?;
                mcb = Some(MultiCodebook::new(cbs, cfg.gamma, cfg.epsilon)?);
            }
            let m = mcb.as_mut().expect("initialised above");

            let [lo, hi] = cfg.snr_range_db;
            let snr = if hi > lo {
                rng_for(cfg.seed, &[2, epoch as u64, batch as u64]).random_range(lo..=hi)
            } else {
                lo
            };
            let plan = cache.plan(snr)?;

            let mut y = Vec::with_capacity(n_sub);
            let mut q = Vec::with_capacity(n_sub);
            let mut zq_hat = Vec::with_capacity(n_sub);
            for (i, zi) in z_sub.iter().enumerate() {
                let cb = &m.codebooks[i];
                let (yi, qi) = cb.quantize_nearest(zi)?;
                let table = CdfTable::new(&plan.matrices[i]);
                let mut rng = rng_for(cfg.seed, &[3, epoch as u64, batch as u64, i as u64]);
                let y_hat: Vec<usize> = yi.iter().map(|&v| table.sample(v, &mut rng)).collect();
                zq_hat.push(cb.lookup(&y_hat)?);
                y.push(yi);
                q.push(qi);
            }
            if cache.ema.is_some() {
                let blocks = merge_indices_blocks(&y, per_block, z.len());
                cache.observe(&blocks, m_c)?;
            }
            let zq_hat = merge_features(&zq_hat, per_block, z.len());
            let q_all = merge_features(&q, per_block, z.len());

            let occurrence: Vec<Vec<f64>> = z_sub.iter().map(|zi| batch_occurrence(zi.len())).collect();
            let sub_batches: Vec<SubchannelBatch<'_>> = (0..n_sub)
                .map(|i| SubchannelBatch {
                    features: &z_sub[i],
                    indices: &y[i],
                    occurrence: &occurrence[i],
                })
                .collect();
            let cb_plan = if cfg.channel_aware { &plan } else { &unaware };
            let l_ca = ensure_finite(channel_aware_loss(&sub_batches, m, cb_plan)?, epoch, batch, "L_ca")?;
            let grads = channel_aware_gradient(&sub_batches, m, cb_plan)?;
            let l_m = ensure_finite(commitment_loss(&z, &q_all)?, epoch, batch, "L_m")?;
            let l_r = ensure_finite(
                codec_step(&mut codec, &x, &z, &q_all, &zq_hat, cfg, per_block)?,
                epoch,
                batch,
                "L_r",
            )?;
            log.steps.push(StepLog {
                epoch,
                batch,
                snr_db: snr,
                l_r,
                l_m,
                l_ca,
            });

            for i in 0..n_sub {
                let counts = count_assignments(&y[i], m.codebooks[i].size());
                cvq_update_with_counts(&mut m.stats[i], &mut m.codebooks[i], &z_sub[i], &counts)?;
                for (w, g) in m.codebooks[i].as_mut_slice().iter_mut().zip(&grads[i]) {
                    *w -= cfg.learning_rate * g;
                }
                if m.codebooks[i].as_slice().iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence {
                        epoch,
                        batch,
                        what: "codebook",
                    });
                }
            }
            if !codec.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch,
                    what: "codec",
                });
            }
            sums[0] += l_r;
            sums[1] += l_m;
            sums[2] += l_ca;
            batches += 1;
        }
        let m = mcb.as_ref().expect("initialised on the first batch");
        let z_eval = codec.encode_all(eval_source)?;
        let l_t = ensure_finite(
            multi_transmission_error(&split_features(&z_eval, per_block, n_sub), m, &eval_plan)?,
            epoch,
            batches,
            "L_t",
        )?;
        let entropy = m
            .stats
            .iter()
            .map(|s| entropy_bits(&s.activations))
            .collect::<Result<Vec<_>>>()?;
        let b = batches as f64;
        log.epochs.push(EpochLog {
            epoch,
            l_r: sums[0] / b,
            l_m: sums[1] / b,
            l_ca: sums[2] / b,
            l_t,
            entropy,
        });
    }

    Ok(TrainOutcome {
        codebooks: mcb.expect("at least one batch"),
        codec,
        log,
        eval_plan,
    })
}

/// Reconstruction loss of the batch and, when enabled, one gradient step on
/// the codec. The decoder sees the channel-corrupted latent; the encoder
/// gradient passes straight through the quantizer.
fn codec_step(
    codec: &mut AffineCodec,
    x: &Features,
    z: &Features,
    q: &Features,
    zq_hat: &Features,
    cfg: &TrainConfig,
    per_block: usize,
) -> Result<f64> {
    let b = x.len();
    let latent = codec.latent_len();
    let src = codec.source_dim();
    let mut l_r = 0.0;
    let mut residuals = Vec::with_capacity(b);
    for (n, xv) in x.iter().enumerate() {
        let lat = &zq_hat.as_slice()[n * latent..(n + 1) * latent];
        let x_hat = codec.decode(lat);
        l_r += sq_dist(xv, &x_hat);
        residuals.push(DVector::from_iterator(src, xv.iter().zip(&x_hat).map(|(a, b)| a - b)));
    }
    l_r /= b as f64;
    if !cfg.train_codec {
        return Ok(l_r);
    }
    let scale_r = -2.0 / b as f64;
    let scale_m = cfg.beta * 2.0 / (b * per_block) as f64;
    let mut g_dec = DMatrix::zeros(src, latent);
    let mut g_dec_b = DVector::zeros(src);
    let mut g_enc = DMatrix::zeros(latent, src);
    let mut g_enc_b = DVector::zeros(latent);
    let dec_t = codec.decoder.transpose();
    for (n, (xv, r)) in x.iter().zip(&residuals).enumerate() {
        let span = n * latent..(n + 1) * latent;
        let lat = DVector::from_column_slice(&zq_hat.as_slice()[span.clone()]);
        g_dec += scale_r * r * lat.transpose();
        g_dec_b += scale_r * r;
        let zn = DVector::from_column_slice(&z.as_slice()[span.clone()]);
        let qn = DVector::from_column_slice(&q.as_slice()[span]);
        let g_z = scale_r * (&dec_t * r) + scale_m * (zn - qn);
        g_enc += &g_z * DVector::from_column_slice(xv).transpose();
        g_enc_b += g_z;
    }
    let eta = cfg.learning_rate;
    codec.decoder -= eta * g_dec;
    codec.decoder_bias -= eta * g_dec_b;
    codec.encoder -= eta * g_enc;
    codec.encoder_bias -= eta * g_enc_b;
    Ok(l_r)
}
