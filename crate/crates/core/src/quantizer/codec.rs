//! Linear-plus-bias encoder/decoder pair.
//!
//! The encoder maps a source vector of dimension `D` to a latent of length
//! `N·l·d`: `N` positions, each split into `l` consecutive sub-vectors of the
//! codeword dimension `d`. The flattened latent therefore reads as `N·l`
//! features of dimension `d` in stream order.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::rng_for;

use super::codebook::Features;

#[derive(Debug, Clone, PartialEq)]
pub struct AffineCodec {
    pub(crate) encoder: DMatrix<f64>,
    pub(crate) encoder_bias: DVector<f64>,
    pub(crate) decoder: DMatrix<f64>,
    pub(crate) decoder_bias: DVector<f64>,
    code_dim: usize,
    index_depth: usize,
}

impl AffineCodec {
    pub fn new(
        encoder: DMatrix<f64>,
        encoder_bias: DVector<f64>,
        decoder: DMatrix<f64>,
        decoder_bias: DVector<f64>,
        code_dim: usize,
        index_depth: usize,
    ) -> Result<Self> {
        let (latent, source) = encoder.shape();
        if code_dim == 0 || index_depth == 0 || latent == 0 || latent % (code_dim * index_depth) != 0 {
            return Err(invalid(format!(
                "latent length {latent} is not a positive multiple of code_dim·index_depth = {}",
                code_dim * index_depth
            )));
        }
        if encoder_bias.len() != latent {
            return Err(Error::DimensionMismatch {
                expected: latent,
                actual: encoder_bias.len(),
                context: "encoder bias",
            });
        }
        if decoder.shape() != (source, latent) {
            return Err(Error::DimensionMismatch {
                expected: source * latent,
                actual: decoder.nrows() * decoder.ncols(),
                context: "decoder matrix shape",
            });
        }
        if decoder_bias.len() != source {
            return Err(Error::DimensionMismatch {
                expected: source,
                actual: decoder_bias.len(),
                context: "decoder bias",
            });
        }
        Ok(Self {
            encoder,
            encoder_bias,
            decoder,
            decoder_bias,
            code_dim,
            index_depth,
        })
    }

    /// Identity codec on `source_dim`-dimensional vectors.
    pub fn identity(source_dim: usize, code_dim: usize, index_depth: usize) -> Result<Self> {
        Self::new(
            DMatrix::identity(source_dim, source_dim),
            DVector::zeros(source_dim),
            DMatrix::identity(source_dim, source_dim),
            DVector::zeros(source_dim),
            code_dim,
            index_depth,
        )
    }

    /// Gaussian random codec with `1/√fan_in` scaling and zero biases.
    pub fn random(
        source_dim: usize,
        positions: usize,
        index_depth: usize,
        code_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let latent = positions * index_depth * code_dim;
        let mut rng = rng_for(seed, &[0xc0dec]);
        let mut draw = |rows: usize, cols: usize, fan_in: usize| {
            let s = 1.0 / (fan_in as f64).sqrt();
            DMatrix::from_fn(rows, cols, |_, _| s * rng.sample::<f64, _>(StandardNormal))
        };
        let encoder = draw(latent, source_dim, source_dim);
        let decoder = draw(source_dim, latent, latent);
        Self::new(
            encoder,
            DVector::zeros(latent),
            decoder,
            DVector::zeros(source_dim),
            code_dim,
            index_depth,
        )
    }

    pub fn source_dim(&self) -> usize {
        self.encoder.ncols()
    }

    pub fn latent_len(&self) -> usize {
        self.encoder.nrows()
    }

    pub fn code_dim(&self) -> usize {
        self.code_dim
    }

    pub fn index_depth(&self) -> usize {
        self.index_depth
    }

    /// Latent positions `N`.
    pub fn positions(&self) -> usize {
        self.latent_len() / (self.code_dim * self.index_depth)
    }

    /// Features (indices) emitted per source vector, `N·l`.
    pub fn features_per_sample(&self) -> usize {
        self.latent_len() / self.code_dim
    }

    pub fn decoder_matrix(&self) -> &DMatrix<f64> {
        &self.decoder
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        let v = &self.encoder * DVector::from_column_slice(x) + &self.encoder_bias;
        v.as_slice().to_vec()
    }

    pub fn decode(&self, latent: &[f64]) -> Vec<f64> {
        let v = &self.decoder * DVector::from_column_slice(latent) + &self.decoder_bias;
        v.as_slice().to_vec()
    }

    /// Encodes every source vector and concatenates the feature streams.
    pub fn encode_all(&self, source: &Features) -> Result<Features> {
        if source.dim() != self.source_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.source_dim(),
                actual: source.dim(),
                context: "source dimension vs codec",
            });
        }
        let mut out = Vec::with_capacity(source.len() * self.latent_len());
        for x in source.iter() {
            out.extend(self.encode(x));
        }
        Features::new(self.code_dim, out)
    }

    /// Lipschitz constant of the decoder: its largest singular value.
    pub fn lipschitz(&self) -> f64 {
        self.decoder
            .clone()
            .singular_values()
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.iter().chain(self.encoder_bias.iter()).all(|v| v.is_finite())
            && self.decoder.iter().chain(self.decoder_bias.iter()).all(|v| v.is_finite())
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], context: &'static str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(r) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch {
            expected: ncols,
            actual: r.len(),
            context,
        });
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

#[derive(Serialize, Deserialize)]
struct CodecFile {
    code_dim: usize,
    index_depth: usize,
    encoder: Vec<Vec<f64>>,
    encoder_bias: Vec<f64>,
    decoder: Vec<Vec<f64>>,
    decoder_bias: Vec<f64>,
}

impl Serialize for AffineCodec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CodecFile {
            code_dim: self.code_dim,
            index_depth: self.index_depth,
            encoder: matrix_rows(&self.encoder),
            encoder_bias: self.encoder_bias.as_slice().to_vec(),
            decoder: matrix_rows(&self.decoder),
            decoder_bias: self.decoder_bias.as_slice().to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AffineCodec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = CodecFile::deserialize(d)?;
        let build = || -> Result<Self> {
            Self::new(
                matrix_from_rows(&f.encoder, "encoder row")?,
                DVector::from_vec(f.encoder_bias.clone()),
                matrix_from_rows(&f.decoder, "decoder row")?,
                DVector::from_vec(f.decoder_bias.clone()),
                f.code_dim,
                f.index_depth,
            )
        };
        build().map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Power iteration on `AᵀA`, independent of the SVD route.
    fn spectral_norm_power(a: &DMatrix<f64>) -> f64 {
        let ata = a.transpose() * a;
        let mut v = DVector::from_element(a.ncols(), 1.0);
        v.normalize_mut();
        let mut lambda = 0.0;
        for _ in 0..5000 {
            let w = &ata * &v;
            let n = w.norm();
            if n == 0.0 {
                return 0.0;
            }
            let next = w / n;
            lambda = (next.transpose() * &ata * &next)[(0, 0)];
            if (&next - &v).norm() < 1e-15 {
                break;
            }
            v = next;
        }
        lambda.sqrt()
    }

    #[test]
    fn identity_has_unit_lipschitz() {
        let c = AffineCodec::identity(6, 2, 1).unwrap();
        assert!((c.lipschitz() - 1.0).abs() < 1e-12);
        assert_eq!(c.positions(), 3);
        assert_eq!(c.features_per_sample(), 3);
        assert_eq!(c.encode(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn lipschitz_matches_power_iteration() {
        for seed in 0..5 {
            let c = AffineCodec::random(5, 2, 1, 2, seed).unwrap();
            let svd = c.lipschitz();
            let power = spectral_norm_power(c.decoder_matrix());
            assert!((svd - power).abs() < 1e-9, "svd={svd} power={power}");
        }
    }

    #[test]
    fn index_depth_layout() {
        let c = AffineCodec::random(4, 2, 3, 2, 1).unwrap();
        assert_eq!(c.latent_len(), 12);
        assert_eq!(c.features_per_sample(), 6);
        let src = Features::new(4, vec![1.0; 8]).unwrap();
        let z = c.encode_all(&src).unwrap();
        assert_eq!(z.len(), 12);
        assert_eq!(z.get(6), &c.encode(&[1.0; 4])[0..2]);
    }

    #[test]
    fn shape_validation() {
        assert!(AffineCodec::identity(5, 2, 1).is_err());
        assert!(AffineCodec::new(
            DMatrix::identity(4, 4),
            DVector::zeros(4),
            DMatrix::identity(3, 4),
            DVector::zeros(4),
            2,
            1
        )
        .is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = AffineCodec::random(3, 1, 2, 2, 9).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        let back: AffineCodec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }
}
