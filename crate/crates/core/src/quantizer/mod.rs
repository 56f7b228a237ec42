//! Channel-aware vector quantization.
//!
//! One codebook per subchannel, trained against that subchannel's index
//! transition matrix so that indices likely to be confused carry nearby
//! codewords.

mod bound;
mod codebook;
mod codec;
mod cvq;
mod diagnostics;
mod kmeans;
mod loss;
mod train;

pub use bound::{reconstruction_bound, reconstruction_bound_with, BoundEstimate};
pub use codebook::{Codebook, Features};
pub use codec::AffineCodec;
pub use cvq::{
    count_assignments, cvq_update, cvq_update_with_counts, UsageStats, DEFAULT_DECAY,
    DEFAULT_EPSILON,
};
pub use diagnostics::{
    activation_entropy, codeword_distance_matrix, entropy_bits, normalized_distance_matrix,
};
pub use kmeans::{kmeans_pp, lloyd};
pub use loss::{
    batch_occurrence, channel_aware_gradient, channel_aware_loss, codebook_gradient,
    commitment_loss, multi_transmission_error, transmission_error_analytic,
    vanilla_codebook_loss, SubchannelBatch,
};
pub use train::{
    split_features, train, train_with, EpochLog, PriorEstimate, TrainConfig, TrainOptions,
    TrainOutcome, TrainingChannel, TrainingLog,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// One codebook and its usage statistics per subchannel.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiCodebook {
    pub codebooks: Vec<Codebook>,
    pub stats: Vec<UsageStats>,
}

impl MultiCodebook {
    pub fn new(codebooks: Vec<Codebook>, decay: f64, epsilon: f64) -> Result<Self> {
        let first = codebooks
            .first()
            .ok_or_else(|| invalid("a multi-codebook needs at least one codebook"))?;
        let (m_b, d) = (first.order(), first.dim());
        if let Some(cb) = codebooks.iter().find(|c| c.order() != m_b || c.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: cb.dim(),
                context: "codebooks must share order and dimension",
            });
        }
        let stats = codebooks
            .iter()
            .map(|c| UsageStats::new(c.size(), decay, epsilon))
            .collect::<Result<_>>()?;
        Ok(Self { codebooks, stats })
    }

    pub fn len(&self) -> usize {
        self.codebooks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codebooks.is_empty()
    }

    pub fn order(&self) -> u32 {
        self.codebooks[0].order()
    }

    pub fn dim(&self) -> usize {
        self.codebooks[0].dim()
    }

    pub fn to_file(&self, metadata: serde_json::Value) -> CodebookFile {
        CodebookFile {
            m_b: self.order(),
            d: self.dim(),
            n_sub: self.len(),
            codewords: self.codebooks.iter().map(Codebook::rows).collect(),
            metadata,
        }
    }

    pub fn from_file(file: &CodebookFile) -> Result<Self> {
        if file.codewords.len() != file.n_sub {
            return Err(Error::DimensionMismatch {
                expected: file.n_sub,
                actual: file.codewords.len(),
                context: "codebook count in file",
            });
        }
        let cbs = file
            .codewords
            .iter()
            .map(|rows| {
                let cb = Codebook::from_rows(file.m_b, rows)?;
                if cb.dim() != file.d {
                    return Err(Error::DimensionMismatch {
                        expected: file.d,
                        actual: cb.dim(),
                        context: "codeword dimension in file",
                    });
                }
                Ok(cb)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(cbs, DEFAULT_DECAY, DEFAULT_EPSILON)
    }
}

/// On-disk codebook layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookFile {
    pub m_b: u32,
    pub d: usize,
    #[serde(rename = "N_s")]
    pub n_sub: usize,
    /// `codewords[i][k]` is codeword `k` of subchannel `i`.
    pub codewords: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}
