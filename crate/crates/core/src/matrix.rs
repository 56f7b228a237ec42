//! Row-stochastic transition matrices over a finite alphabet.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerance used when validating row sums of analytically computed matrices.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Square matrix `P(received = j | sent = i)` stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TransitionMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { dim, data }
    }

    /// Builds a matrix from row-major data without checking stochasticity.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                actual: data.len(),
                context: "transition matrix entries",
            });
        }
        if dim == 0 {
            return Err(invalid("transition matrix must be non-empty"));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                    context: "transition matrix row",
                });
            }
            data.extend(row);
        }
        Self::from_row_major(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Largest absolute deviation of any row sum from one.
    pub fn max_row_sum_error(&self) -> f64 {
        self.rows()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Checks non-negativity and unit row sums within `tol`.
    pub fn check_stochastic(&self, tol: f64) -> Result<()> {
        if let Some(v) = self.data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(invalid(format!(
                "transition matrix has invalid entry {v}"
            )));
        }
        let err = self.max_row_sum_error();
        if err > tol {
            return Err(invalid(format!(
                "transition matrix rows deviate from 1 by {err:e}"
            )));
        }
        Ok(())
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Kronecker product `self ⊗ rhs`. The left operand indexes the most
    /// significant digits of the composite alphabet.
    pub fn kron(&self, rhs: &Self) -> Self {
        let (n, m) = (self.dim, rhs.dim);
        let dim = n * m;
        let mut data = vec![0.0; dim * dim];
        for i in 0..n {
            for j in 0..n {
                let a = self.get(i, j);
                for k in 0..m {
                    let row = (i * m + k) * dim + j * m;
                    for (l, &b) in rhs.row(k).iter().enumerate() {
                        data[row + l] = a * b;
                    }
                }
            }
        }
        Self { dim, data }
    }

    /// Re-indexes the alphabet: entry `(a, b)` of the result is entry
    /// `(perm[a], perm[b])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.dim);
        let dim = self.dim;
        let mut data = vec![0.0; dim * dim];
        for (a, &pa) in perm.iter().enumerate() {
            for (b, &pb) in perm.iter().enumerate() {
                data[a * dim + b] = self.get(pa, pb);
            }
        }
        Self { dim, data }
    }

    /// Row-major CSV, one row per line, shortest round-trip decimal.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|line| {
                line.split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|e| invalid(format!("bad CSV value {v:?}: {e}")))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(rows)
    }
}

impl TryFrom<Vec<Vec<f64>>> for TransitionMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<TransitionMatrix> for Vec<Vec<f64>> {
    fn from(m: TransitionMatrix) -> Self {
        m.to_rows()
    }
}

/// Kronecker product of a non-empty ordered list of matrices.
pub fn kron_all(factors: &[TransitionMatrix]) -> Result<TransitionMatrix> {
    let (first, rest) = factors
        .split_first()
        .ok_or_else(|| invalid("cannot compose an empty list of matrices"))?;
    Ok(rest.iter().fold(first.clone(), |acc, m| acc.kron(m)))
}
