use std::path::{Path as FsPath, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::constellation::{Constellation, NoiseSpec};
use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::matrix::TransitionMatrix;
use crate::pipeline::{
    generate_source, snr_sweep, sweep_csv, transmit, transmit_via_dmc, SweepModel, VectorDataset,
};
use crate::quantizer::{
    codeword_distance_matrix, count_assignments, entropy_bits, split_features, train, AffineCodec,
    CodebookFile, MultiCodebook, TrainConfig, TrainingChannel,
};
use crate::rng::derive_seed;
use crate::subchannel::{build_plan, SubchannelPlan, SymbolPrior};

use super::config::*;
use super::{Cli, Command, Common, SourceArgs, SEED_ENV};

/// Stream ids for seeds derived from the top-level seed.
const DATA_STREAM: u64 = 0x0da7a;
const CODEC_STREAM: u64 = 0xc0dec;

fn set<T>(dst: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *dst = v;
    }
}

/// Loads a config record, reporting whether the file set `seed`.
fn load<T: DeserializeOwned + Default>(path: Option<&FsPath>) -> Result<(T, bool)> {
    let Some(path) = path else {
        return Ok((T::default(), false));
    };
    let text = std::fs::read_to_string(path)?;
    let value: Value = serde_json::from_str(&text)?;
    let has_seed = value.get("seed").is_some();
    Ok((serde_json::from_value(value)?, has_seed))
}

fn resolve_seed(flag: Option<u64>, from_file: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(from_file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| invalid(format!("{SEED_ENV}={v} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn seeded<T: DeserializeOwned + Default>(common: &Common, seed_of: impl Fn(&mut T) -> &mut u64) -> Result<T> {
    let (mut cfg, has_seed) = load::<T>(common.config.as_deref())?;
    let file_seed = has_seed.then(|| *seed_of(&mut cfg));
    *seed_of(&mut cfg) = resolve_seed(common.seed, file_seed)?;
    Ok(cfg)
}

fn metadata(common: &Common) -> Value {
    let mut m = json!({ "tool": "cavq", "version": env!("CARGO_PKG_VERSION") });
    if !common.no_timestamps {
        let t = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        m["generated_unix"] = json!(t);
    }
    m
}

struct Output<'a> {
    common: &'a Common,
    written: Vec<PathBuf>,
}

impl<'a> Output<'a> {
    fn new(common: &'a Common) -> Result<Self> {
        std::fs::create_dir_all(&common.out)?;
        Ok(Self {
            common,
            written: Vec::new(),
        })
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.common.out.join(name);
        std::fs::write(&p, body)?;
        self.written.push(p);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.text(name, &s)
    }

    /// Writes the resolved config with a `metadata` entry, which loading
    /// ignores.
    fn config<T: Serialize>(&mut self, command: &str, cfg: &T) -> Result<()> {
        let mut v = serde_json::to_value(cfg)?;
        if let Value::Object(map) = &mut v {
            let mut meta = metadata(self.common);
            meta["command"] = json!(command);
            map.insert("metadata".into(), meta);
        }
        self.json("config.json", &v)
    }
}

fn apply_source(src: &mut SourceConfig, a: &SourceArgs) {
    set(&mut src.kind, a.source);
    if a.dataset.is_some() {
        src.path = a.dataset.clone();
        if a.source.is_none() {
            src.kind = Source::File;
        }
    }
    set(&mut src.dim, a.dim);
    set(&mut src.count, a.count);
    set(&mut src.components, a.components);
    set(&mut src.radius, a.radius);
    set(&mut src.spread, a.spread);
}

fn dataset(src: &SourceConfig, seed: u64) -> Result<VectorDataset> {
    generate_source(&src.kind()?, src.dim, src.count, derive_seed(seed, &[DATA_STREAM]))
}

fn label_matrix(c: &Constellation, snr_db: f64) -> Result<TransitionMatrix> {
    let noise = NoiseSpec::new(snr_db)?;
    Ok(c.label_channel(&c.transition_matrix_analytic(&noise)))
}

fn uniform_plan(m_b: u32, m_c: u32, snr_db: f64) -> Result<(Constellation, SubchannelPlan)> {
    let c = Constellation::square_qam(m_c)?;
    let h = label_matrix(&c, snr_db)?;
    let plan = build_plan(m_b, m_c, &h, &SymbolPrior::uniform(m_c))?;
    Ok((c, plan))
}

fn read_codebooks(path: Option<&FsPath>) -> Result<MultiCodebook> {
    let path = path.ok_or_else(|| invalid("--codebooks is required"))?;
    let file: CodebookFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    MultiCodebook::from_file(&file)
}

fn read_codec(path: Option<&FsPath>, ds: &VectorDataset, d: usize, depth: usize) -> Result<AffineCodec> {
    match path {
        Some(p) => Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?),
        None => AffineCodec::identity(ds.dim(), d, depth),
    }
}

pub(super) fn dispatch(cli: &Cli) -> Result<Vec<PathBuf>> {
    let common = &cli.common;
    let mut out = Output::new(common)?;
    match &cli.command {
        Command::Channel(a) => {
            let mut cfg: ChannelConfig = seeded(common, |c: &mut ChannelConfig| &mut c.seed)?;
            set(&mut cfg.mc_bits, a.mc_bits);
            set(&mut cfg.snr_db, a.snr_db);
            set(&mut cfg.method, a.method);
            set(&mut cfg.n_samples, a.n_samples);
            let c = Constellation::square_qam(cfg.mc_bits)?;
            let noise = NoiseSpec::new(cfg.snr_db)?;
            let h = match cfg.method {
                Method::Analytic => c.transition_matrix_analytic(&noise),
                Method::Mc => c.transition_matrix_monte_carlo(&noise, cfg.n_samples, cfg.seed)?,
            };
            out.text("transition_matrix.csv", &h.to_csv())?;
            out.text("label_matrix.csv", &c.label_channel(&h).to_csv())?;
            let mut points = String::from("index,label,re,im\n");
            for (i, p) in c.points().iter().enumerate() {
                points.push_str(&format!("{i},{},{},{}\n", c.labels()[i], p.re, p.im));
            }
            out.text("constellation.csv", &points)?;
            out.config("channel", &cfg)?;
        }
        Command::Plan(a) => {
            let (mut cfg, _) = load::<PlanConfig>(common.config.as_deref())?;
            set(&mut cfg.mb_bits, a.mb_bits);
            set(&mut cfg.mc_bits, a.mc_bits);
            set(&mut cfg.snr_db, a.snr_db);
            let (_, plan) = uniform_plan(cfg.mb_bits, cfg.mc_bits, cfg.snr_db)?;
            out.json("plan.json", &plan)?;
            out.config("plan", &cfg)?;
        }
        Command::Train(a) => train_cmd(common, a, &mut out)?,
        Command::Eval(a) => {
            let mut cfg: EvalConfig = seeded(common, |c: &mut EvalConfig| &mut c.seed)?;
            set(&mut cfg.codebooks, a.codebooks.clone().map(Some));
            set(&mut cfg.codec, a.codec.clone().map(Some));
            set(&mut cfg.index_depth, a.index_depth);
            set(&mut cfg.mc_bits, a.mc_bits);
            set(&mut cfg.snr_db, a.snr_db);
            set(&mut cfg.path, a.path);
            apply_source(&mut cfg.source, &a.source);
            let mcb = read_codebooks(cfg.codebooks.as_deref())?;
            let ds = dataset(&cfg.source, cfg.seed)?;
            let codec = read_codec(cfg.codec.as_deref(), &ds, mcb.dim(), cfg.index_depth)?;
            let (c, plan) = uniform_plan(mcb.order(), cfg.mc_bits, cfg.snr_db)?;
            let (_, report) = match cfg.path {
                Path::Awgn => transmit(&ds, &codec, &mcb, &plan, &c, &NoiseSpec::new(cfg.snr_db)?, cfg.seed)?,
                Path::Dmc => transmit_via_dmc(&ds, &codec, &mcb, &plan, cfg.seed)?,
            };
            out.json("report.json", &report)?;
            out.config("eval", &cfg)?;
        }
        Command::Sweep(a) => {
            let mut cfg: SweepConfig = seeded(common, |c: &mut SweepConfig| &mut c.seed)?;
            if !a.codebooks.is_empty() {
                cfg.codebooks = a.codebooks.clone();
            }
            if !a.snr_db.is_empty() {
                cfg.snr_db = a.snr_db.clone();
            }
            set(&mut cfg.codec, a.codec.clone().map(Some));
            set(&mut cfg.index_depth, a.index_depth);
            set(&mut cfg.mc_bits, a.mc_bits);
            set(&mut cfg.trials, a.trials);
            apply_source(&mut cfg.source, &a.source);
            let models = cfg
                .codebooks
                .iter()
                .enumerate()
                .map(|(i, spec)| {
                    let (name, path) = match spec.split_once('=') {
                        Some((n, p)) => (n.to_string(), p),
                        None => (format!("model{i}"), spec.as_str()),
                    };
                    Ok(SweepModel {
                        name,
                        codebooks: read_codebooks(Some(FsPath::new(path)))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let first = models.first().ok_or_else(|| invalid("--codebooks is required"))?;
            let ds = dataset(&cfg.source, cfg.seed)?;
            let codec = read_codec(cfg.codec.as_deref(), &ds, first.codebooks.dim(), cfg.index_depth)?;
            let c = Constellation::square_qam(cfg.mc_bits)?;
            let rows = snr_sweep(&ds, &codec, &models, &c, &cfg.snr_db, cfg.trials, cfg.seed, Execution::default())?;
            out.text("sweep.csv", &sweep_csv(&rows))?;
            out.json("sweep.json", &rows)?;
            out.config("sweep", &cfg)?;
        }
        Command::Heatmap(a) => {
            let (mut cfg, _) = load::<HeatmapConfig>(common.config.as_deref())?;
            set(&mut cfg.codebooks, a.codebooks.clone().map(Some));
            cfg.long |= a.long;
            let mcb = read_codebooks(cfg.codebooks.as_deref())?;
            for (i, cb) in mcb.codebooks.iter().enumerate() {
                let m = codeword_distance_matrix(cb)?;
                let csv: String = m
                    .iter()
                    .map(|r| r.iter().map(f64::to_string).collect::<Vec<_>>().join(",") + "\n")
                    .collect();
                out.text(&format!("heatmap_{i}.csv"), &csv)?;
                if cfg.long {
                    let mut dat = String::new();
                    for (r, row) in m.iter().enumerate() {
                        for (c, v) in row.iter().enumerate() {
                            dat.push_str(&format!("{r} {c} {v}\n"));
                        }
                        dat.push('\n');
                    }
                    out.text(&format!("heatmap_{i}.dat"), &dat)?;
                }
            }
            out.config("heatmap", &cfg)?;
        }
        Command::Entropy(a) => {
            let mut cfg: EntropyConfig = seeded(common, |c: &mut EntropyConfig| &mut c.seed)?;
            set(&mut cfg.codebooks, a.codebooks.clone().map(Some));
            set(&mut cfg.codec, a.codec.clone().map(Some));
            set(&mut cfg.index_depth, a.index_depth);
            apply_source(&mut cfg.source, &a.source);
            let mcb = read_codebooks(cfg.codebooks.as_deref())?;
            let ds = dataset(&cfg.source, cfg.seed)?;
            let codec = read_codec(cfg.codec.as_deref(), &ds, mcb.dim(), cfg.index_depth)?;
            let z = codec.encode_all(&ds.values)?;
            let parts = split_features(&z, codec.features_per_sample(), mcb.len());
            let mut csv = String::from("subchannel,entropy_bits,max_bits\n");
            let mut rows = Vec::new();
            for (i, (cb, zi)) in mcb.codebooks.iter().zip(&parts).enumerate() {
                let counts = count_assignments(&cb.quantize_indices(zi)?, cb.size());
                let h = entropy_bits(&counts)?;
                csv.push_str(&format!("{i},{h},{}\n", cb.order()));
                rows.push(json!({ "subchannel": i, "entropy_bits": h, "max_bits": cb.order(), "counts": counts }));
            }
            out.text("entropy.csv", &csv)?;
            out.json("entropy.json", &rows)?;
            out.config("entropy", &cfg)?;
        }
    }
    Ok(out.written)
}

fn train_cmd(common: &Common, a: &super::TrainArgs, out: &mut Output<'_>) -> Result<()> {
    let mut cfg: TrainRunConfig = seeded(common, |c: &mut TrainRunConfig| &mut c.seed)?;
    set(&mut cfg.mb_bits, a.mb_bits);
    set(&mut cfg.mc_bits, a.mc_bits);
    set(&mut cfg.channel, a.channel);
    if let Some(s) = a.snr_db {
        cfg.snr_range_db = [s, s];
    }
    set(&mut cfg.snr_range_db[0], a.snr_min);
    set(&mut cfg.snr_range_db[1], a.snr_max);
    set(&mut cfg.eval_snr_db, a.eval_snr_db.map(Some));
    set(&mut cfg.epochs, a.epochs);
    set(&mut cfg.batch, a.batch);
    set(&mut cfg.learning_rate, a.lr);
    set(&mut cfg.beta, a.beta);
    set(&mut cfg.gamma, a.gamma);
    set(&mut cfg.epsilon, a.epsilon);
    set(&mut cfg.prior, a.prior);
    set(&mut cfg.channel_aware, a.channel_aware);
    set(&mut cfg.codec, a.codec_init);
    set(&mut cfg.train_codec, a.train_codec.map(OnOff::enabled));
    set(&mut cfg.index_depth, a.index_depth);
    set(&mut cfg.code_dim, a.code_dim);
    set(&mut cfg.positions, a.positions);
    apply_source(&mut cfg.source, &a.source);

    let ds = dataset(&cfg.source, cfg.seed)?;
    let codec = match cfg.codec {
        CodecInit::Identity => AffineCodec::identity(ds.dim(), cfg.code_dim, cfg.index_depth)?,
        CodecInit::Random => AffineCodec::random(
            ds.dim(),
            cfg.positions,
            cfg.index_depth,
            cfg.code_dim,
            derive_seed(cfg.seed, &[CODEC_STREAM]),
        )?,
    };
    let channel = match cfg.channel {
        TrainChannel::Awgn => TrainingChannel::Awgn(Constellation::square_qam(cfg.mc_bits)?),
        TrainChannel::Noiseless => TrainingChannel::Noiseless { m_c: cfg.mc_bits },
    };
    let tc = TrainConfig {
        m_b: cfg.mb_bits,
        beta: cfg.beta,
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        batch_size: cfg.batch,
        seed: cfg.seed,
        snr_range_db: cfg.snr_range_db,
        eval_snr_db: cfg.eval_snr_db,
        prior: cfg.prior.into(),
        channel_aware: cfg.channel_aware.enabled(),
        gamma: cfg.gamma,
        epsilon: cfg.epsilon,
        train_codec: cfg.train_codec,
        ..TrainConfig::default()
    };
    let outcome = train(&ds.values, &codec, &channel, &tc)?;
    let mut meta = metadata(common);
    meta["seed"] = json!(cfg.seed);
    meta["config"] = serde_json::to_value(&tc)?;
    meta["channel"] = json!({
        "kind": cfg.channel,
        "m_c": cfg.mc_bits,
        "snr_range_db": cfg.snr_range_db,
    });
    out.json("codebooks.json", &outcome.codebooks.to_file(meta))?;
    out.json("codec.json", &outcome.codec)?;
    out.text("training_log.csv", &outcome.log.to_csv())?;
    out.config("train", &cfg)?;
    Ok(())
}
