//! k-means++ seeding and Lloyd refinement.

use rand::Rng;

use crate::error::{invalid, Result};
use crate::rng::SimRng;

use super::codebook::{sq_dist, Codebook, Features};

/// Picks `2^m_b` seeds from `data` with D² weighting. Falls back to uniform
/// draws once every remaining point coincides with a chosen seed.
pub fn kmeans_pp(data: &Features, m_b: u32, rng: &mut SimRng) -> Result<Codebook> {
    if data.is_empty() {
        return Err(invalid("k-means++ needs at least one feature"));
    }
    let k = 1usize << m_b;
    let n = data.len();
    let mut centers = Vec::with_capacity(k * data.dim());
    let first = rng.random_range(0..n);
    centers.extend_from_slice(data.get(first));
    let mut d2: Vec<f64> = data.iter().map(|v| sq_dist(v, data.get(first))).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = data.get(pick).to_vec();
        for (w, v) in d2.iter_mut().zip(data.iter()) {
            *w = w.min(sq_dist(v, &c));
        }
        centers.extend(c);
    }
    Codebook::new(m_b, data.dim(), centers)
}

/// Runs `iterations` Lloyd steps. Empty cells keep their codeword.
pub fn lloyd(data: &Features, cb: &mut Codebook, iterations: usize) -> Result<()> {
    let (k, d) = (cb.size(), cb.dim());
    for _ in 0..iterations {
        let idx = cb.quantize_indices(data)?;
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (v, &y) in data.iter().zip(&idx) {
            counts[y] += 1;
            for (s, x) in sums[y * d..(y + 1) * d].iter_mut().zip(v) {
                *s += x;
            }
        }
        for j in (0..k).filter(|&j| counts[j] > 0) {
            let inv = 1.0 / counts[j] as f64;
            for (w, s) in cb.codeword_mut(j).iter_mut().zip(&sums[j * d..(j + 1) * d]) {
                *w = s * inv;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn seeds_are_data_points_and_distinct_when_possible() {
        let data = Features::new(1, (0..32).map(f64::from).collect()).unwrap();
        let cb = kmeans_pp(&data, 3, &mut rng_for(1, &[])).unwrap();
        let mut vals: Vec<f64> = cb.as_slice().to_vec();
        assert!(vals.iter().all(|v| data.as_slice().contains(v)));
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        assert_eq!(vals.len(), 8);
    }

    #[test]
    fn degenerate_data_does_not_panic() {
        let data = Features::new(2, vec![1.0, 1.0]).unwrap();
        let cb = kmeans_pp(&data, 2, &mut rng_for(0, &[])).unwrap();
        assert!(cb.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn lloyd_does_not_increase_distortion() {
        let mut rng = rng_for(5, &[]);
        let data = Features::new(2, (0..400).map(|_| rng.random::<f64>()).collect()).unwrap();
        let mut cb = kmeans_pp(&data, 3, &mut rng).unwrap();
        let distortion = |cb: &Codebook| {
            data.iter().map(|v| sq_dist(v, cb.codeword(cb.nearest(v)))).sum::<f64>()
        };
        let mut prev = distortion(&cb);
        for _ in 0..5 {
            lloyd(&data, &mut cb, 1).unwrap();
            let cur = distortion(&cb);
            assert!(cur <= prev + 1e-12);
            prev = cur;
        }
    }
}
