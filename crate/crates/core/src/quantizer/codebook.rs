use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A sequence of equal-length real vectors stored contiguously.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Features {
    dim: usize,
    data: Vec<f64>,
}

impl Features {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("feature dimension must be positive"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: data.len() % dim,
                context: "flat feature buffer is not a whole number of vectors",
            });
        }
        Ok(Self { dim, data })
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Self {
            dim,
            data: Vec::with_capacity(dim * n),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(dim * rows.len());
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: r.len(),
                    context: "feature row",
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn push(&mut self, v: &[f64]) {
        debug_assert_eq!(v.len(), self.dim);
        self.data.extend_from_slice(v);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.data
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `K = 2^m_b` codewords of dimension `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    m_b: u32,
    dim: usize,
    codewords: Vec<f64>,
}

impl Codebook {
    pub fn new(m_b: u32, dim: usize, codewords: Vec<f64>) -> Result<Self> {
        if !(1..=crate::subchannel::MAX_INDEX_BITS).contains(&m_b) {
            return Err(invalid(format!("codebook order {m_b} out of range")));
        }
        let k = 1usize << m_b;
        if dim == 0 || codewords.len() != k * dim {
            return Err(Error::DimensionMismatch {
                expected: k * dim,
                actual: codewords.len(),
                context: "codebook entries",
            });
        }
        if codewords.iter().any(|v| !v.is_finite()) {
            return Err(invalid("codewords must be finite"));
        }
        Ok(Self { m_b, dim, codewords })
    }

    pub fn from_rows(m_b: u32, rows: &[Vec<f64>]) -> Result<Self> {
        let f = Features::from_rows(rows)?;
        Self::new(m_b, f.dim(), f.into_inner())
    }

    pub fn order(&self) -> u32 {
        self.m_b
    }

    pub fn size(&self) -> usize {
        1 << self.m_b
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn codeword(&self, k: usize) -> &[f64] {
        &self.codewords[k * self.dim..(k + 1) * self.dim]
    }

    pub fn codeword_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.codewords[k * self.dim..(k + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.codewords
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.codewords
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.codewords.chunks_exact(self.dim).map(<[f64]>::to_vec).collect()
    }

    /// Nearest codeword by squared Euclidean distance, lowest index on ties.
    #[inline]
    pub fn nearest(&self, v: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, m) in self.codewords.chunks_exact(self.dim).enumerate() {
            let d = sq_dist(v, m);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }

    fn check_dim(&self, z: &Features) -> Result<()> {
        if z.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: z.dim(),
                context: "feature dimension vs codebook",
            });
        }
        Ok(())
    }

    pub fn quantize_indices(&self, z: &Features) -> Result<Vec<usize>> {
        self.check_dim(z)?;
        Ok(z.iter().map(|v| self.nearest(v)).collect())
    }

    /// Nearest-codeword indices and the corresponding quantized vectors.
    pub fn quantize_nearest(&self, z: &Features) -> Result<(Vec<usize>, Features)> {
        let idx = self.quantize_indices(z)?;
        let q = self.lookup(&idx)?;
        Ok((idx, q))
    }

    pub fn lookup(&self, indices: &[usize]) -> Result<Features> {
        let mut q = Features::with_capacity(self.dim, indices.len());
        for &i in indices {
            if i >= self.size() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    size: self.size(),
                });
            }
            q.push(self.codeword(i));
        }
        Ok(q)
    }

    /// Pairs of codewords that are exactly equal.
    pub fn duplicate_pairs(&self) -> Vec<(usize, usize)> {
        let k = self.size();
        let mut out = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                if self.codeword(i) == self.codeword(j) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_identity_assignment() {
        let cb = Codebook::from_rows(2, &[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let z = Features::new(2, cb.as_slice().to_vec()).unwrap();
        let (idx, q) = cb.quantize_nearest(&z).unwrap();
        assert_eq!(idx, vec![0, 1, 2, 3]);
        assert_eq!(q, z);
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        // codewords 1 and 4 (0-based) equidistant from the origin
        let rows = vec![
            vec![5.0, 5.0],
            vec![1.0, 0.0],
            vec![7.0, 7.0],
            vec![8.0, 8.0],
            vec![-1.0, 0.0],
            vec![9.0, 9.0],
            vec![6.0, 6.0],
            vec![4.0, 4.0],
        ];
        let cb = Codebook::from_rows(3, &rows).unwrap();
        assert_eq!(cb.nearest(&[0.0, 0.0]), 1);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let cb = Codebook::new(1, 2, vec![0.0; 4]).unwrap();
        let z = Features::new(3, vec![0.0; 3]).unwrap();
        assert!(matches!(
            cb.quantize_nearest(&z),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(Codebook::new(2, 2, vec![0.0; 6]).is_err());
    }
}
