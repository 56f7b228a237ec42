//! The `cavq` command-line interface.
//!
//! Every command writes its artifacts plus a `config.json` holding the fully
//! resolved configuration into `--out`. The resolved file can be fed back
//! through `--config` to reproduce a run. Values are taken from flags, then
//! the config file, then built-in defaults; the seed falls back to
//! `CAVQ_SEED` when neither flag nor file sets it.
//!
//! Exit codes: 0 on success, 2 on invalid input, 3 when training diverges.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use config::{CodecInit, Method, OnOff, Path, Prior, Source, TrainChannel};

pub const SEED_ENV: &str = "CAVQ_SEED";

#[derive(Debug, Parser)]
#[command(name = "cavq", version, about = "Channel-aware vector quantization toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Top-level seed (falls back to CAVQ_SEED, then 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// JSON file with command parameters; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Omit wall-clock timestamps from metadata.
    #[arg(long, global = true)]
    pub no_timestamps: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Symbol transition matrix of a square QAM constellation under AWGN.
    Channel(ChannelArgs),
    /// Subchannel decomposition for an index/symbol order pair.
    Plan(PlanArgs),
    /// Train per-subchannel codebooks.
    Train(TrainArgs),
    /// Transmit a dataset once and report distortion and error rates.
    Eval(EvalArgs),
    /// Transmission reports over SNRs and trials.
    Sweep(SweepArgs),
    /// Normalized codeword distance matrices.
    Heatmap(HeatmapArgs),
    /// Codeword activation entropy on a dataset.
    Entropy(EntropyArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct SourceArgs {
    #[arg(long, value_enum)]
    pub source: Option<Source>,
    /// Dataset file (implies `--source file`).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub spread: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ChannelArgs {
    #[arg(long)]
    pub mc_bits: Option<u32>,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_db: Option<f64>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub n_samples: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub mb_bits: Option<u32>,
    #[arg(long)]
    pub mc_bits: Option<u32>,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub mb_bits: Option<u32>,
    #[arg(long)]
    pub mc_bits: Option<u32>,
    #[arg(long, value_enum)]
    pub channel: Option<TrainChannel>,
    /// Fixed training SNR (sets both ends of the range).
    #[arg(long, allow_negative_numbers = true)]
    pub snr_db: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_max: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub eval_snr_db: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub prior: Option<Prior>,
    #[arg(long, value_enum)]
    pub channel_aware: Option<OnOff>,
    #[arg(long, value_enum)]
    pub codec_init: Option<CodecInit>,
    #[arg(long, value_enum)]
    pub train_codec: Option<OnOff>,
    #[arg(long)]
    pub index_depth: Option<usize>,
    #[arg(long)]
    pub code_dim: Option<usize>,
    #[arg(long)]
    pub positions: Option<usize>,
    #[command(flatten)]
    pub source: SourceArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub codebooks: Option<PathBuf>,
    /// Codec JSON; an identity codec when absent.
    #[arg(long)]
    pub codec: Option<PathBuf>,
    #[arg(long)]
    pub index_depth: Option<usize>,
    #[arg(long)]
    pub mc_bits: Option<u32>,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_db: Option<f64>,
    #[arg(long, value_enum)]
    pub path: Option<Path>,
    #[command(flatten)]
    pub source: SourceArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// `name=path` or `path`; repeatable.
    #[arg(long)]
    pub codebooks: Vec<String>,
    #[arg(long)]
    pub codec: Option<PathBuf>,
    #[arg(long)]
    pub index_depth: Option<usize>,
    #[arg(long)]
    pub mc_bits: Option<u32>,
    /// Comma-separated SNR list in dB.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub snr_db: Vec<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[command(flatten)]
    pub source: SourceArgs,
}

#[derive(Debug, Clone, Args)]
pub struct HeatmapArgs {
    #[arg(long)]
    pub codebooks: Option<PathBuf>,
    /// Also write gnuplot-ready `i j value` files.
    #[arg(long)]
    pub long: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EntropyArgs {
    #[arg(long)]
    pub codebooks: Option<PathBuf>,
    #[arg(long)]
    pub codec: Option<PathBuf>,
    #[arg(long)]
    pub index_depth: Option<usize>,
    #[command(flatten)]
    pub source: SourceArgs,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence { .. } => 3,
        _ => 2,
    }
}

/// Runs a parsed command and returns the paths it wrote.
pub fn run(cli: &Cli) -> crate::Result<Vec<PathBuf>> {
    commands::dispatch(cli)
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
