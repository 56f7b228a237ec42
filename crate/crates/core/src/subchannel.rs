//! Decomposition of an index stream into independent memoryless subchannels.
//!
//! Indices of `m_b` bits are serialized MSB-first and packed back-to-back
//! into `m_c`-bit symbol words. The alignment between index and symbol
//! boundaries repeats every `T = lcm(m_b, m_c)` bits, so frame position `i`
//! of every `T`-bit frame sees the same channel. Collecting position `i`
//! across frames yields a memoryless subchannel whose transition matrix is
//! the Kronecker product of per-segment marginal matrices.
//!
//! All alphabets are 0-based: index values `0..2^m_b`, symbol words
//! `0..2^m_c`. Symbol words are constellation labels; bit offset 0 of a word
//! is its most significant bit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::{kron_all, TransitionMatrix, ROW_SUM_TOLERANCE};
use crate::rng::{rng_for, SimRng};

/// Largest index order for which dense subchannel matrices are built.
pub const MAX_INDEX_BITS: u32 = 12;
/// Floor applied to EMA prior probabilities so masked sets never lose mass.
pub const PRIOR_FLOOR: f64 = 1e-12;
/// Default EMA decay for the symbol prior.
pub const DEFAULT_PRIOR_DECAY: f64 = 0.99;

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `T = lcm(m_b, m_c)` in bits.
pub fn grouping_period(m_b: u32, m_c: u32) -> u32 {
    assert!(m_b >= 1 && m_c >= 1, "bit widths must be positive");
    m_b / gcd(m_b, m_c) * m_c
}

/// Number of subsequences `N_s = T / m_b`.
pub fn subsequence_count(m_b: u32, m_c: u32) -> usize {
    (grouping_period(m_b, m_c) / m_b) as usize
}

/// A contiguous run of bits inside one symbol word of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    /// Symbol slot within the frame (0-based).
    pub symbol_slot: usize,
    /// Bit offset from the most significant bit of the symbol word.
    pub offset: u32,
    pub len: u32,
}

/// Where the bits of frame position `position` live.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitSegmentLayout {
    #[serde(skip)]
    pub position: usize,
    pub segments: Vec<Segment>,
}

impl BitSegmentLayout {
    /// Number of distinct bit segments (`τ`).
    pub fn tau(&self) -> usize {
        self.segments.len()
    }

    pub fn bit_len(&self) -> u32 {
        self.segments.iter().map(|s| s.len).sum()
    }
}

/// Segment layout of every frame position.
pub fn plan_layout(m_b: u32, m_c: u32) -> Vec<BitSegmentLayout> {
    let n_s = subsequence_count(m_b, m_c);
    (0..n_s)
        .map(|position| {
            let mut segments = Vec::new();
            let mut bit = position as u32 * m_b;
            let end = bit + m_b;
            while bit < end {
                let slot = bit / m_c;
                let offset = bit % m_c;
                let len = (m_c - offset).min(end - bit);
                segments.push(Segment {
                    symbol_slot: slot as usize,
                    offset,
                    len,
                });
                bit += len;
            }
            BitSegmentLayout { position, segments }
        })
        .collect()
}

#[inline]
fn extract_bits(word: usize, offset: u32, len: u32, width: u32) -> usize {
    (word >> (width - offset - len)) & ((1usize << len) - 1)
}

/// All symbol words whose bits `[offset, offset + len)` equal `pattern`.
pub fn masked_constellation_set(pattern: usize, offset: u32, len: u32, m_c: u32) -> Vec<usize> {
    assert!(offset + len <= m_c, "segment exceeds symbol width");
    (0..1usize << m_c)
        .filter(|&c| extract_bits(c, offset, len, m_c) == pattern)
        .collect()
}

/// How a [`SymbolPrior`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PriorMode {
    Uniform,
    Empirical,
    Ema { decay: f64 },
}

/// Distribution of transmitted symbol words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolPrior {
    pub probabilities: Vec<f64>,
    pub mode: PriorMode,
}

impl SymbolPrior {
    pub fn uniform(m_c: u32) -> Self {
        let m = 1usize << m_c;
        Self {
            probabilities: vec![1.0 / m as f64; m],
            mode: PriorMode::Uniform,
        }
    }

    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(invalid("cannot estimate a prior from zero observations"));
        }
        Ok(Self {
            probabilities: counts.iter().map(|&c| c as f64 / total as f64).collect(),
            mode: PriorMode::Empirical,
        })
    }

    pub fn from_probabilities(probabilities: Vec<f64>) -> Result<Self> {
        let prior = Self {
            probabilities,
            mode: PriorMode::Empirical,
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        if self.probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(invalid("prior probabilities must be finite and non-negative"));
        }
        let s: f64 = self.probabilities.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(invalid(format!("prior sums to {s}, expected 1")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

/// Exponential moving average estimate of the symbol prior, initialised
/// uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaPrior {
    decay: f64,
    probabilities: Vec<f64>,
}

impl EmaPrior {
    pub fn new(m_c: u32, decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) {
            return Err(invalid(format!("EMA decay must be in [0, 1), got {decay}")));
        }
        Ok(Self {
            decay,
            probabilities: SymbolPrior::uniform(m_c).probabilities,
        })
    }

    /// Folds one batch of symbol counts into the estimate.
    pub fn update(&mut self, counts: &[u64]) {
        assert_eq!(counts.len(), self.probabilities.len());
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return;
        }
        for (p, &c) in self.probabilities.iter_mut().zip(counts) {
            *p = self.decay * *p + (1.0 - self.decay) * c as f64 / total as f64;
        }
    }

    /// Current estimate, floored at [`PRIOR_FLOOR`] and renormalised.
    pub fn prior(&self) -> SymbolPrior {
        let floored: Vec<f64> = self.probabilities.iter().map(|p| p.max(PRIOR_FLOOR)).collect();
        let s: f64 = floored.iter().sum();
        SymbolPrior {
            probabilities: floored.into_iter().map(|p| p / s).collect(),
            mode: PriorMode::Ema { decay: self.decay },
        }
    }
}

fn symbol_bits(h: &TransitionMatrix) -> Result<u32> {
    let m = h.dim();
    if !m.is_power_of_two() || m < 2 {
        return Err(invalid(format!(
            "symbol matrix dimension {m} is not a power of two"
        )));
    }
    Ok(m.trailing_zeros())
}

/// Marginal transition matrix of one bit segment, weighting each symbol
/// word by the prior.
pub fn marginal_matrix(
    offset: u32,
    len: u32,
    h: &TransitionMatrix,
    prior: &SymbolPrior,
) -> Result<TransitionMatrix> {
    let m_c = symbol_bits(h)?;
    if prior.len() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            actual: prior.len(),
            context: "symbol prior",
        });
    }
    if offset + len > m_c {
        return Err(invalid(format!(
            "segment [{offset}, {}) exceeds symbol width {m_c}",
            offset + len
        )));
    }
    let n = 1usize << len;
    let pattern_of = |c: usize| extract_bits(c, offset, len, m_c);
    let mut mass = vec![0.0; n];
    let mut joint = vec![0.0; n * n];
    for c in 0..h.dim() {
        let p = pattern_of(c);
        let pc = prior.probabilities[c];
        mass[p] += pc;
        if pc == 0.0 {
            continue;
        }
        for (c_hat, &t) in h.row(c).iter().enumerate() {
            joint[p * n + pattern_of(c_hat)] += pc * t;
        }
    }
    for (p, &w) in mass.iter().enumerate() {
        if w <= 0.0 {
            return Err(Error::DegeneratePrior { pattern: p });
        }
        for v in &mut joint[p * n..(p + 1) * n] {
            *v /= w;
        }
    }
    TransitionMatrix::from_row_major(n, joint)
}

/// Kronecker composition of segment marginals, in segment order.
pub fn compose_subchannel(marginals: &[TransitionMatrix]) -> Result<TransitionMatrix> {
    kron_all(marginals)
}

/// Complete subchannel decomposition for one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubchannelPlan {
    pub m_b: u32,
    pub m_c: u32,
    #[serde(rename = "T")]
    pub period: u32,
    #[serde(rename = "N_s")]
    pub n_sub: usize,
    pub layouts: Vec<BitSegmentLayout>,
    pub matrices: Vec<TransitionMatrix>,
}

impl SubchannelPlan {
    /// Plan with identity subchannels (noiseless channel).
    pub fn noiseless(m_b: u32, m_c: u32) -> Self {
        let n_sub = subsequence_count(m_b, m_c);
        Self {
            m_b,
            m_c,
            period: grouping_period(m_b, m_c),
            n_sub,
            layouts: plan_layout(m_b, m_c),
            matrices: vec![TransitionMatrix::identity(1 << m_b); n_sub],
        }
    }

    pub fn codebook_size(&self) -> usize {
        1 << self.m_b
    }

    pub fn taus(&self) -> Vec<usize> {
        self.layouts.iter().map(BitSegmentLayout::tau).collect()
    }

    /// Symbols per frame (`T / m_c`).
    pub fn symbols_per_frame(&self) -> usize {
        (self.period / self.m_c) as usize
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut plan: Self = serde_json::from_str(text)?;
        for (i, l) in plan.layouts.iter_mut().enumerate() {
            l.position = i;
        }
        Ok(plan)
    }
}

/// Builds every subchannel matrix from the label-indexed symbol matrix `h`.
pub fn build_plan(
    m_b: u32,
    m_c: u32,
    h: &TransitionMatrix,
    prior: &SymbolPrior,
) -> Result<SubchannelPlan> {
    if m_b == 0 || m_b > MAX_INDEX_BITS {
        return Err(invalid(format!(
            "index order must be in 1..={MAX_INDEX_BITS}, got {m_b}"
        )));
    }
    if !m_c.is_multiple_of(2) || !(2..=8).contains(&m_c) {
        return Err(invalid(format!("unsupported modulation order {m_c}")));
    }
    if symbol_bits(h)? != m_c {
        return Err(Error::DimensionMismatch {
            expected: 1 << m_c,
            actual: h.dim(),
            context: "symbol transition matrix",
        });
    }
    prior.validate()?;
    let layouts = plan_layout(m_b, m_c);
    let matrices = layouts
        .iter()
        .map(|layout| {
            let marginals = layout
                .segments
                .iter()
                .map(|s| marginal_matrix(s.offset, s.len, h, prior))
                .collect::<Result<Vec<_>>>()?;
            compose_subchannel(&marginals)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SubchannelPlan {
        m_b,
        m_c,
        period: grouping_period(m_b, m_c),
        n_sub: layouts.len(),
        layouts,
        matrices,
    })
}

/// Length of `n` items after padding to a multiple of `n_sub`.
pub fn padded_len(n: usize, n_sub: usize) -> usize {
    n.div_ceil(n_sub) * n_sub
}

/// Splits a stream into `n_sub` subsequences by frame position, padding the
/// tail with `pad`.
pub fn split_with_padding<T: Clone>(items: &[T], n_sub: usize, pad: T) -> Vec<Vec<T>> {
    let total = padded_len(items.len(), n_sub);
    let mut out: Vec<Vec<T>> = (0..n_sub)
        .map(|_| Vec::with_capacity(total / n_sub))
        .collect();
    for k in 0..total {
        out[k % n_sub].push(items.get(k).cloned().unwrap_or_else(|| pad.clone()));
    }
    out
}

/// Interleaves subsequences back into one stream and truncates to `len`.
pub fn interleave<T: Clone>(subsequences: &[Vec<T>], len: usize) -> Result<Vec<T>> {
    let n_sub = subsequences.len();
    if n_sub == 0 {
        return Err(invalid("no subsequences to merge"));
    }
    let frames = subsequences[0].len();
    if subsequences.iter().any(|s| s.len() != frames) || frames * n_sub < len {
        return Err(invalid("subsequence lengths inconsistent with the stream length"));
    }
    Ok((0..len)
        .map(|k| subsequences[k % n_sub][k / n_sub].clone())
        .collect())
}

/// Padding index value: the all-zero bit pattern.
pub const PAD_INDEX: usize = 0;

pub fn split_indices(y: &[usize], plan: &SubchannelPlan) -> Vec<Vec<usize>> {
    split_with_padding(y, plan.n_sub, PAD_INDEX)
}

pub fn merge_indices(subsequences: &[Vec<usize>], plan: &SubchannelPlan, len: usize) -> Result<Vec<usize>> {
    if subsequences.len() != plan.n_sub {
        return Err(Error::DimensionMismatch {
            expected: plan.n_sub,
            actual: subsequences.len(),
            context: "subsequence count",
        });
    }
    interleave(subsequences, len)
}

/// Number of symbols `L = ⌈N·m_b / m_c⌉`.
pub fn symbol_count(n: usize, m_b: u32, m_c: u32) -> usize {
    (n * m_b as usize).div_ceil(m_c as usize)
}

/// Packs indices MSB-first into symbol words, zero-padding the last word.
pub fn serialize_to_symbols(y: &[usize], m_b: u32, m_c: u32) -> Result<Vec<usize>> {
    let k = 1usize << m_b;
    let mut out = Vec::with_capacity(symbol_count(y.len(), m_b, m_c));
    let mut acc = 0usize;
    let mut filled = 0u32;
    for &v in y {
        if v >= k {
            return Err(Error::IndexOutOfRange { index: v, size: k });
        }
        for b in (0..m_b).rev() {
            acc = (acc << 1) | ((v >> b) & 1);
            filled += 1;
            if filled == m_c {
                out.push(acc);
                acc = 0;
                filled = 0;
            }
        }
    }
    if filled > 0 {
        out.push(acc << (m_c - filled));
    }
    Ok(out)
}

/// Unpacks `n` indices from symbol words.
pub fn deserialize_from_symbols(c: &[usize], m_b: u32, m_c: u32, n: usize) -> Result<Vec<usize>> {
    if c.len() < symbol_count(n, m_b, m_c) {
        return Err(invalid(format!(
            "{} symbols cannot carry {n} indices of {m_b} bits",
            c.len()
        )));
    }
    let m = 1usize << m_c;
    let mut out = Vec::with_capacity(n);
    let mut acc = 0usize;
    let mut filled = 0u32;
    'outer: for &w in c {
        if w >= m {
            return Err(Error::IndexOutOfRange { index: w, size: m });
        }
        for b in (0..m_c).rev() {
            if out.len() == n {
                break 'outer;
            }
            acc = (acc << 1) | ((w >> b) & 1);
            filled += 1;
            if filled == m_b {
                out.push(acc);
                acc = 0;
                filled = 0;
            }
        }
    }
    Ok(out)
}

/// Cumulative rows of a transition matrix for inverse-CDF sampling.
#[derive(Debug, Clone)]
pub struct CdfTable {
    dim: usize,
    cdf: Vec<f64>,
}

impl CdfTable {
    pub fn new(h: &TransitionMatrix) -> Self {
        let dim = h.dim();
        let mut cdf = Vec::with_capacity(dim * dim);
        for row in h.rows() {
            let mut acc = 0.0;
            for &p in row {
                acc += p;
                cdf.push(acc);
            }
        }
        Self { dim, cdf }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, input: usize, rng: &mut R) -> usize {
        let row = &self.cdf[input * self.dim..(input + 1) * self.dim];
        let u: f64 = rng.random::<f64>() * row[self.dim - 1];
        // first j with u < cdf[j]; zero-probability outputs are never chosen
        row.partition_point(|&c| c <= u).min(self.dim - 1)
    }
}

pub(crate) fn dmc_sample_rng(
    table: &CdfTable,
    inputs: &[usize],
    rng: &mut SimRng,
) -> Vec<usize> {
    inputs.iter().map(|&i| table.sample(i, rng)).collect()
}

/// Passes each input independently through the row of `h`.
pub fn dmc_sample(h: &TransitionMatrix, inputs: &[usize], seed: u64) -> Result<Vec<usize>> {
    if let Some(&bad) = inputs.iter().find(|&&i| i >= h.dim()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            size: h.dim(),
        });
    }
    let table = CdfTable::new(h);
    let mut rng = rng_for(seed, &[0x646d63]);
    Ok(dmc_sample_rng(&table, inputs, &mut rng))
}
