//! Datasets, end-to-end transmission and SNR sweeps.

mod dataset;
mod sweep;
mod transmit;

pub use dataset::{generate_source, SourceKind, VectorDataset, MAGIC};
pub use sweep::{snr_sweep, sweep_csv, SweepModel, SweepRow, SWEEP_CSV_HEADER};
pub use transmit::{
    transmit, transmit_via_dmc, transmit_via_dmc_with, transmit_with, ChannelPath, ChannelSpec,
    SubchannelReport, TransmissionReport,
};
