//! Synthetic and file-backed vector sources.
//!
//! File format: the 8-byte magic `CAVQVEC1`, little-endian `u32` count and
//! dimension, then `count × dim` little-endian `f32` values in row-major
//! order. Writing rounds values to `f32`.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quantizer::Features;
use crate::rng::rng_for;

pub const MAGIC: &[u8; 8] = b"CAVQVEC1";
const HEADER_LEN: usize = 16;

/// How a dataset is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SourceKind {
    /// Standard normal vectors.
    Gaussian,
    /// Equal-weight isotropic mixture. Component means sit on a circle of
    /// `radius` in the first two coordinates; a single component is centred
    /// at the origin.
    Gmm {
        components: usize,
        radius: f64,
        spread: f64,
    },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorDataset {
    pub values: Features,
    /// Peak value for PSNR; the largest absolute value when unset.
    pub peak: Option<f64>,
    pub provenance: String,
}

impl VectorDataset {
    pub fn new(values: Features, peak: Option<f64>, provenance: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("a dataset needs at least one vector"));
        }
        if values.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(invalid("dataset values must be finite"));
        }
        if let Some(p) = peak {
            if !(p.is_finite() && p > 0.0) {
                return Err(invalid(format!("PSNR peak must be positive, got {p}")));
            }
        }
        Ok(Self {
            values,
            peak,
            provenance: provenance.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.dim()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.peak.unwrap_or_else(|| {
            self.values
                .as_slice()
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()))
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.as_slice().len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        for &v in self.values.as_slice() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], provenance: impl Into<String>) -> Result<Self> {
        let malformed = |offset: usize, reason: &str| Error::MalformedDataset {
            offset,
            reason: reason.to_string(),
        };
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            let offset = bytes
                .iter()
                .zip(MAGIC)
                .position(|(a, b)| a != b)
                .unwrap_or(bytes.len().min(MAGIC.len()));
            return Err(malformed(offset, "bad magic"));
        }
        if bytes.len() < HEADER_LEN {
            return Err(malformed(bytes.len(), "truncated header"));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        let (count, dim) = (word(8) as usize, word(12) as usize);
        if count == 0 {
            return Err(malformed(8, "count must be at least 1"));
        }
        if dim == 0 {
            return Err(malformed(12, "dimension must be at least 1"));
        }
        let expected = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or_else(|| malformed(8, "count × dim overflows"))?;
        if bytes.len() < expected {
            let whole = HEADER_LEN + (bytes.len() - HEADER_LEN) / 4 * 4;
            return Err(malformed(whole, "truncated data"));
        }
        if bytes.len() > expected {
            return Err(malformed(expected, "trailing bytes after data"));
        }
        let mut data = Vec::with_capacity(count * dim);
        for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(malformed(HEADER_LEN + 4 * i, "non-finite value"));
            }
            data.push(f64::from(v));
        }
        Self::new(Features::new(dim, data)?, None, provenance)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?, path.display().to_string())
    }
}

/// Deterministic source generation. `dim` and `count` are ignored for files.
pub fn generate_source(kind: &SourceKind, dim: usize, count: usize, seed: u64) -> Result<VectorDataset> {
    if let SourceKind::File { path } = kind {
        return VectorDataset::read(path);
    }
    if count == 0 || dim == 0 {
        return Err(invalid("count and dimension must be at least 1"));
    }
    let mut rng = rng_for(seed, &[0x50]);
    let mut data = Vec::with_capacity(count * dim);
    let provenance = match kind {
        SourceKind::Gaussian => {
            data.extend((0..count * dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
            format!("gaussian dim={dim} count={count} seed={seed}")
        }
        SourceKind::Gmm {
            components,
            radius,
            spread,
        } => {
            let c = *components;
            if c == 0 || !(radius.is_finite() && spread.is_finite() && *spread > 0.0) {
                return Err(invalid("GMM needs at least one component and a positive spread"));
            }
            let means: Vec<Vec<f64>> = (0..c)
                .map(|k| {
                    let mut m = vec![0.0; dim];
                    if c > 1 {
                        let a = TAU * k as f64 / c as f64;
                        m[0] = radius * a.cos();
                        if dim > 1 {
                            m[1] = radius * a.sin();
                        }
                    }
                    m
                })
                .collect();
            for _ in 0..count {
                let k = rng.random_range(0..c);
                for &mu in &means[k] {
                    data.push(mu + spread * rng.sample::<f64, _>(StandardNormal));
                }
            }
            format!("gmm components={c} radius={radius} spread={spread} dim={dim} count={count} seed={seed}")
        }
        SourceKind::File { .. } => unreachable!("handled above"),
    };
    VectorDataset::new(Features::new(dim, data)?, None, provenance)
}
