//! Channel-aware vector quantization over discrete memoryless channels.
//!
//! The crate models a digital link in which quantization indices are packed
//! into square-QAM symbols, corrupted by AWGN and detected by nearest
//! neighbor. The resulting symbol transition matrix is decomposed into
//! independent index subchannels, and one codebook per subchannel is trained
//! against its subchannel's confusion probabilities.
//!
//! - [`constellation`]: Gray-labelled QAM, AWGN, detection, transition matrices.
//! - [`subchannel`]: index/symbol alignment and per-subchannel matrices.
//! - [`quantizer`]: codebooks, losses, re-anchoring, training, the error bound.
//! - [`pipeline`]: datasets, end-to-end transmission, SNR sweeps.
//! - [`cli`]: the `cavq` command-line interface.

pub mod cli;
pub mod constellation;
pub mod error;
pub mod exec;
pub mod matrix;
pub mod pipeline;
pub mod quantizer;
pub mod rng;
pub mod subchannel;

pub use error::{Error, Result};
pub use exec::Execution;
pub use matrix::TransitionMatrix;
