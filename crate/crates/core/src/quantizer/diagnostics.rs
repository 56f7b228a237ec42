//! Codebook-space diagnostics: activation entropy and distance heatmaps.

use crate::error::{invalid, Result};

use super::codebook::{sq_dist, Codebook};

/// Shannon entropy in bits of the empirical distribution given by `counts`.
pub fn entropy_bits(counts: &[u64]) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(invalid("entropy needs at least one recorded assignment"));
    }
    let t = total as f64;
    Ok(counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / t;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0))
}

/// Entropy of the accumulated activations of one codebook.
pub fn activation_entropy(stats: &super::UsageStats) -> Result<f64> {
    entropy_bits(&stats.activations)
}

/// Pairwise Euclidean distances between row vectors, min-max normalised to
/// `[0, 1]`.
pub fn normalized_distance_matrix(rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if rows.len() < 2 {
        return Err(invalid("distance matrix needs at least two vectors"));
    }
    let k = rows.len();
    let mut d = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let v = sq_dist(&rows[i], &rows[j]).sqrt();
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    let (lo, hi) = d
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi <= lo {
        return Err(invalid("all vectors are identical; normalisation undefined"));
    }
    for v in d.iter_mut().flatten() {
        *v = (*v - lo) / (hi - lo);
    }
    Ok(d)
}

pub fn codeword_distance_matrix(cb: &Codebook) -> Result<Vec<Vec<f64>>> {
    normalized_distance_matrix(&cb.rows())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_examples() {
        assert!((entropy_bits(&vec![3; 256]).unwrap() - 8.0).abs() < 1e-12);
        assert_eq!(entropy_bits(&[0, 9, 0, 0]).unwrap(), 0.0);
        // -(1/4 log 1/4 * 2 + 1/2 log 1/2) = 1.5
        assert!((entropy_bits(&[1, 1, 2]).unwrap() - 1.5).abs() < 1e-15);
        assert!(entropy_bits(&[0, 0]).is_err());
    }

    #[test]
    fn two_codeword_matrix() {
        let cb = Codebook::from_rows(1, &[vec![0.0, 0.0], vec![2.0, 1.0]]).unwrap();
        let d = codeword_distance_matrix(&cb).unwrap();
        assert_eq!(d, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn identical_codewords_rejected() {
        let cb = Codebook::from_rows(1, &[vec![1.0], vec![1.0]]).unwrap();
        assert!(codeword_distance_matrix(&cb).is_err());
    }
}
