//! Transmission reports over a grid of models, SNRs and trials.

use serde::{Deserialize, Serialize};

use crate::constellation::{Constellation, NoiseSpec};
use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::quantizer::{AffineCodec, MultiCodebook};
use crate::rng::derive_seed;
use crate::subchannel::{build_plan, SymbolPrior};

use super::dataset::VectorDataset;
use super::transmit::{transmit_with, TransmissionReport};

/// A named set of codebooks evaluated at every SNR.
#[derive(Debug, Clone)]
pub struct SweepModel {
    pub name: String,
    pub codebooks: MultiCodebook,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: String,
    pub snr_db: f64,
    pub trial: usize,
    pub report: TransmissionReport,
}

pub const SWEEP_CSV_HEADER: &str =
    "model,snr_db,trial,mse,psnr_db,symbol_error_rate,index_error_rate,l_t_analytic,l_t_empirical";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let p = &r.report;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.model,
            r.snr_db,
            r.trial,
            p.mse,
            p.psnr_db,
            p.symbol_error_rate.map_or(String::new(), |v| v.to_string()),
            p.index_error_rate,
            p.l_t_analytic,
            p.l_t_empirical
        ));
    }
    s
}

/// One complex-baseband transmission per (model, SNR, trial), each with its
/// own derived seed. Rows come back sorted by model order, SNR, then trial.
#[allow(clippy::too_many_arguments)]
pub fn snr_sweep(
    ds: &VectorDataset,
    codec: &AffineCodec,
    models: &[SweepModel],
    constellation: &Constellation,
    snrs_db: &[f64],
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    if snrs_db.is_empty() || models.is_empty() || trials == 0 {
        return Err(invalid("a sweep needs at least one model, SNR and trial"));
    }
    let m_c = constellation.bits();
    let prior = SymbolPrior::uniform(m_c);
    let mut plans = Vec::with_capacity(models.len() * snrs_db.len());
    for m in models {
        for &snr in snrs_db {
            let noise = NoiseSpec::new(snr)?;
            let h = constellation.label_channel(&constellation.transition_matrix_analytic(&noise));
            plans.push(build_plan(m.codebooks.order(), m_c, &h, &prior)?);
        }
    }
    let n_snr = snrs_db.len();
    let jobs = models.len() * n_snr * trials;
    let results = exec.map_range(jobs, |j| -> Result<SweepRow> {
        let (mi, rest) = (j / (n_snr * trials), j % (n_snr * trials));
        let (si, trial) = (rest / trials, rest % trials);
        let noise = NoiseSpec::new(snrs_db[si])?;
        let s = derive_seed(seed, &[mi as u64, si as u64, trial as u64]);
        let plan = &plans[mi * n_snr + si];
        let (_, report) = transmit_with(
            ds,
            codec,
            &models[mi].codebooks,
            plan,
            constellation,
            &noise,
            s,
            Execution::Sequential,
        )?;
        Ok(SweepRow {
            model: models[mi].name.clone(),
            snr_db: snrs_db[si],
            trial,
            report,
        })
    });
    let mut rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let rank = |name: &str| models.iter().position(|m| m.name == name).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| {
        rank(&a.model)
            .cmp(&rank(&b.model))
            .then(a.snr_db.total_cmp(&b.snr_db))
            .then(a.trial.cmp(&b.trial))
    });
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::dataset::{generate_source, SourceKind};
    use crate::quantizer::Codebook;

    #[test]
    fn report_count_and_order() {
        let ds = generate_source(&SourceKind::Gaussian, 2, 50, 1).unwrap();
        let codec = AffineCodec::identity(2, 2, 1).unwrap();
        let rows: Vec<Vec<f64>> = (0..4).map(|k| vec![k as f64 - 1.5, 0.0]).collect();
        let mcb = MultiCodebook::new(vec![Codebook::from_rows(2, &rows).unwrap()], 0.99, 1e-5).unwrap();
        let models = vec![SweepModel {
            name: "a".into(),
            codebooks: mcb,
        }];
        let c = Constellation::square_qam(2).unwrap();
        let out = snr_sweep(&ds, &codec, &models, &c, &[10.0, 0.0, 5.0], 2, 9, Execution::Parallel).unwrap();
        assert_eq!(out.len(), 6);
        let keys: Vec<(f64, usize)> = out.iter().map(|r| (r.snr_db, r.trial)).collect();
        assert_eq!(keys, vec![(0.0, 0), (0.0, 1), (5.0, 0), (5.0, 1), (10.0, 0), (10.0, 1)]);
        let seq = snr_sweep(&ds, &codec, &models, &c, &[10.0, 0.0, 5.0], 2, 9, Execution::Sequential).unwrap();
        assert_eq!(out, seq);
        assert_eq!(sweep_csv(&out).lines().count(), 7);
    }
}
