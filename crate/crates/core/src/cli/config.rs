//! Resolved per-command configuration. Each record can be loaded from a JSON
//! file; flags then override individual fields.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::pipeline::SourceKind;
use crate::quantizer::PriorEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Prior {
    Uniform,
    Ema,
}

impl From<Prior> for PriorEstimate {
    fn from(p: Prior) -> Self {
        match p {
            Prior::Uniform => PriorEstimate::Uniform,
            Prior::Ema => PriorEstimate::Ema,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OnOff {
    On,
    Off,
}

impl OnOff {
    pub fn enabled(self) -> bool {
        self == OnOff::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Gaussian,
    Gmm,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CodecInit {
    Identity,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Path {
    Awgn,
    Dmc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TrainChannel {
    Awgn,
    Noiseless,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceConfig {
    pub kind: Source,
    pub dim: usize,
    pub count: usize,
    pub components: usize,
    pub radius: f64,
    pub spread: f64,
    pub path: Option<PathBuf>,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            kind: Source::Gaussian,
            dim: 2,
            count: 4096,
            components: 4,
            radius: 3.0,
            spread: 0.5,
            path: None,
        }
    }
}

impl SourceConfig {
    pub fn kind(&self) -> crate::Result<SourceKind> {
        Ok(match self.kind {
            Source::Gaussian => SourceKind::Gaussian,
            Source::Gmm => SourceKind::Gmm {
                components: self.components,
                radius: self.radius,
                spread: self.spread,
            },
            Source::File => SourceKind::File {
                path: self
                    .path
                    .clone()
                    .ok_or_else(|| crate::error::invalid("source kind `file` needs --dataset"))?,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub seed: u64,
    pub mc_bits: u32,
    pub snr_db: f64,
    pub method: Method,
    pub n_samples: usize,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mc_bits: 4,
            snr_db: 10.0,
            method: Method::Analytic,
            n_samples: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub mb_bits: u32,
    pub mc_bits: u32,
    pub snr_db: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            mb_bits: 4,
            mc_bits: 4,
            snr_db: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRunConfig {
    pub seed: u64,
    pub mb_bits: u32,
    pub mc_bits: u32,
    pub channel: TrainChannel,
    /// SNR sampling range in dB.
    pub snr_range_db: [f64; 2],
    pub eval_snr_db: Option<f64>,
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub prior: Prior,
    pub channel_aware: OnOff,
    pub codec: CodecInit,
    pub train_codec: bool,
    pub index_depth: usize,
    pub code_dim: usize,
    /// Latent positions of a random codec; identity codecs derive it from
    /// the source dimension.
    pub positions: usize,
    pub source: SourceConfig,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mb_bits: 4,
            mc_bits: 4,
            channel: TrainChannel::Awgn,
            snr_range_db: [0.0, 18.0],
            eval_snr_db: None,
            epochs: 20,
            batch: 128,
            learning_rate: 1e-3,
            beta: 0.25,
            gamma: 0.99,
            epsilon: 1e-5,
            prior: Prior::Uniform,
            channel_aware: OnOff::On,
            codec: CodecInit::Identity,
            train_codec: false,
            index_depth: 1,
            code_dim: 2,
            positions: 1,
            source: SourceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub seed: u64,
    pub codebooks: Option<PathBuf>,
    pub codec: Option<PathBuf>,
    pub index_depth: usize,
    pub mc_bits: u32,
    pub snr_db: f64,
    pub path: Path,
    pub source: SourceConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            codebooks: None,
            codec: None,
            index_depth: 1,
            mc_bits: 4,
            snr_db: 10.0,
            path: Path::Awgn,
            source: SourceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub seed: u64,
    /// `name=path` pairs, or bare paths named after their position.
    pub codebooks: Vec<String>,
    pub codec: Option<PathBuf>,
    pub index_depth: usize,
    pub mc_bits: u32,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub source: SourceConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            codebooks: Vec::new(),
            codec: None,
            index_depth: 1,
            mc_bits: 4,
            snr_db: vec![0.0, 5.0, 10.0, 15.0],
            trials: 3,
            source: SourceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatmapConfig {
    pub codebooks: Option<PathBuf>,
    /// Also write `i j value` triples for gnuplot.
    pub long: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EntropyConfig {
    pub seed: u64,
    pub codebooks: Option<PathBuf>,
    pub codec: Option<PathBuf>,
    pub index_depth: usize,
    pub source: SourceConfig,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            codebooks: None,
            codec: None,
            index_depth: 1,
            source: SourceConfig::default(),
        }
    }
}
